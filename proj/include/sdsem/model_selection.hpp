#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sdsem/mcmc.hpp"

namespace sdsem::select {

constexpr double kInfiniteWeight = std::numeric_limits<double>::infinity();

struct PmccResult {
  int m = 0, l = 0;
  double goodness = 0.0;  // G
  double penalty = 0.0;   // P
  double zeta = kInfiniteWeight;
  double pmcc = 0.0;
  double runtime_s = 0.0;
  bool converged = false;
  bool failed = false;
  std::string error;
};

// zeta/(zeta+1) G + P, with zeta = inf giving G + P.
double pmcc_value(double goodness, double penalty, double zeta);

// Per-cell replicate moments accumulated over a replicate set; rows are
// series, columns periods.
class ReplicateMoments {
 public:
  ReplicateMoments(Eigen::Index rows, Eigen::Index cols);
  void add(const MatrixXd& replicate);
  std::size_t count() const { return n_; }
  MatrixXd mean() const;
  MatrixXd variance() const;  // unbiased; zero with fewer than two replicates

 private:
  std::size_t n_ = 0;
  MatrixXd mean_, m2_;
};

PmccResult pmcc_from_moments(const ReplicateMoments& moments, const MatrixXd& observed, double zeta = kInfiniteWeight);

// One replicate Y_rep = m_y + H_y g(t) + u(t) per retained draw, pooled over
// the supplied chains. observed is the N n_y x T dependent panel.
PmccResult pmcc(const std::vector<mcmc::PosteriorDraws>& chains, const MatrixXd& observed, RandomSource& rng,
                double zeta = kInfiniteWeight);

// Fits every (m, l) point with the given chain settings and ranks the
// results by ascending PMCC. Failed points are reported and ranked last.
// When `fits` is given, the chains of each successful point are stored there
// in grid order.
std::vector<PmccResult> grid_search(const data::PanelDataset& data, const std::vector<std::pair<int, int>>& grid,
                                    const mcmc::McmcConfig& base, double zeta = kInfiniteWeight,
                                    std::vector<std::vector<mcmc::PosteriorDraws>>* fits = nullptr);

std::string grid_csv(const std::vector<PmccResult>& results);

}  // namespace sdsem::select
