#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sdsem/mcmc.hpp"

namespace sdsem::forecast {

struct ForecastOptions {
  int horizon = 4;
  double level = 0.95;
  int replicates = 1;          // predictive replicates per retained draw
  bool deterministic = false;  // conditional mode only: no state or measurement noise
  double explosive_bound = 1e8;
};

struct ForecastResult {
  int horizon = 0;
  double level = 0.95;
  std::vector<MatrixXd> draws;  // each (N n_y) x horizon
  MatrixXd median, lower, upper;
  std::size_t n_explosive = 0;  // excluded for exceeding the bound
  std::size_t n_skipped = 0;    // excluded for rank-deficient predictor loadings

  std::size_t n_draws() const { return draws.size(); }
  void summarize(double level);
};

struct ForecastMetrics {
  double rmse = 0.0, mae = 0.0, cp = 0.0, aiw = 0.0;
  std::size_t cells = 0;
};

// k-step moments of alpha(t+k) given alpha(t): (Phi^k alpha, sum_j Phi^{k-j} Sigma Phi^{k-j}').
std::pair<VectorXd, MatrixXd> state_moments(const MatrixXd& transition, const MatrixXd& state_cov,
                                            const VectorXd& alpha, int steps);

ForecastResult forecast_unconditional(const std::vector<mcmc::PosteriorDraws>& chains, const ForecastOptions& options,
                                      RandomSource& rng);

// Predictor factors implied by a future predictor panel: H_x^+ (X - m_x).
MatrixXd recover_predictor_factors(const MatrixXd& h_x, const VectorXd& mean_x, const MatrixXd& x_future);

// x_future is (N n_x) x horizon.
ForecastResult forecast_conditional(const std::vector<mcmc::PosteriorDraws>& chains, const MatrixXd& x_future,
                                    const ForecastOptions& options, RandomSource& rng);

// Metrics on the original scale. transforms holds one record per dependent
// variable (empty means identity); first_period indexes the first forecast
// period inside each record's deflator.
ForecastMetrics forecast_metrics(const ForecastResult& result, const MatrixXd& truth,
                                 const std::vector<data::TransformRecord>& transforms = {},
                                 std::size_t first_period = 0);
ForecastMetrics metrics_from_cells(const MatrixXd& point, const MatrixXd& truth, const MatrixXd& lower,
                                   const MatrixXd& upper);

std::string forecast_csv(const ForecastResult& result, const data::PanelDataset& layout);
std::string metrics_json(const ForecastMetrics& metrics, const ForecastResult& result);

}  // namespace sdsem::forecast
