#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sdsem/ecm.hpp"
#include "sdsem/lattice_gmrf.hpp"
#include "sdsem/panel.hpp"
#include "sdsem/random.hpp"
#include "sdsem/state_space.hpp"

namespace sdsem {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

enum class StateNoiseMode { Diagonal, Full };

struct PriorConfig {
  double obs_shape = 0.01, obs_rate = 0.01;
  double loading_mean_var = 100.0;
  double wishart_df = 20.0;
  double wishart_scale = 1.0;  // S = wishart_scale * I
  double gmrf_coef_scale = 0.05;
  double ssvs_inclusion = 0.5;
  double ssvs_spike_mult = 0.1;
  double ssvs_slab_mult = 10.0;
  double state_shape = 0.01, state_rate = 0.01;
  double mean_var = 100.0;
  double coint_space_var = 1.0;
  double prelim_var = 100.0;
  double init_kappa = 1e4;
};

// Spike-and-slab bookkeeping for one coefficient matrix.
struct SsvsGroup {
  MatrixXi include;
  MatrixXd spike_var, slab_var;

  static SsvsGroup make(Eigen::Index rows, Eigen::Index cols, double spike, double slab);
  MatrixXd prior_var() const;
};

// Groups: a = Abar, a2 = A2bar, af = Afbar, k = [K_1 ... K_{p-1}],
// phi = [Phi2_1 ... Phi2_{p-1}], v_xi / v_eta = above-diagonal entries of
// the state precision factors (used only with StateNoiseMode::Full).
struct SsvsState {
  SsvsGroup a, a2, af, k, phi, v_xi, v_eta;
};

// Estimated posterior variances of every SSVS coefficient, same layout as
// SsvsState.
struct SsvsScales {
  MatrixXd a, a2, af, k, phi, v_xi, v_eta;
};

SsvsState make_ssvs_state(const SsvsScales& scales, const PriorConfig& prior, bool start_included = true);
SsvsScales uniform_scales(int m, int l, int rank_d, int rank_f, int order, double variance);

struct SdSemParams {
  ssm::MeasurementModel meas;
  std::vector<lattice::GmrfSpec> gmrf_y, gmrf_x;
  ecm::EcmBlocks ecm;
  MatrixXd V_xi, V_eta;  // upper triangular, Sigma^{-1} = V V'
  SsvsState ssvs;
  std::vector<int> anchors_y, anchors_x;  // series rows carrying the unit loadings

  int m() const { return meas.m(); }
  int l() const { return meas.l(); }
  int order() const { return static_cast<int>(ecm.K.size()) + 1; }

  MatrixXd state_cov_g() const;
  MatrixXd state_cov_f() const;
  std::vector<MatrixXd> var_matrices() const;
  ssm::FactorDynamics dynamics() const;
  ssm::StateSpaceForm state_space() const;

  MatrixXd Abar() const { return ecm.A * ecm.E; }
  MatrixXd Bbar() const;
  MatrixXd A2bar() const { return ecm.A2 * ecm.Ef; }
  MatrixXd Afbar() const { return ecm.Af * ecm.Ef; }
  MatrixXd Bfbar() const;
  MatrixXd k_wide() const;
  MatrixXd phi_wide() const;
};

MatrixXd precision_factor_from_cov(const MatrixXd& cov);

// -2 log-likelihood of the measurement equations given the factor path.
// resid is T x n; obs_var holds the diagonal of Sigma_u. Panels y, x are n x T.
double deviance(const MatrixXd& resid, const VectorXd& obs_var);
double deviance(const SdSemParams& params, const MatrixXd& y, const MatrixXd& x, const ssm::FactorPath& factors);

// Residual panels Z - m - H alpha as T x n (y rows first, then x rows).
MatrixXd measurement_residuals(const SdSemParams& params, const MatrixXd& y, const MatrixXd& x,
                               const ssm::FactorPath& factors);

struct SyntheticTruth {
  data::PanelDataset panel;
  SdSemParams params;
  ssm::FactorPath factors;
};

// Generate a panel exactly from the measurement and state equations,
// starting from d = 0 for the presample periods.
SyntheticTruth simulate(const SdSemParams& params, const data::PanelDataset& layout, int T, RandomSource& rng);

struct SyntheticSpec {
  int grid_rows = 3, grid_cols = 3;
  int m = 2, l = 2, order = 2;
  int T = 300;
  double obs_sd = 0.1;
  double state_sd = 0.2;
  double gmrf_cond_var = 0.25;
  double loading_mean = 1.0;
  double spatial_ftilde = 0.3;
};

// A cointegrated truth with r_d = 1, r_f = 1 (when m, l >= 2), GMRF loadings
// and anchors on the first sites of each cluster.
SdSemParams synthetic_params(const SyntheticSpec& spec, RandomSource& rng);
data::PanelDataset grid_layout(int rows, int cols, int n_periods);

}  // namespace sdsem
