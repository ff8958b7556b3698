#pragma once

#include <vector>

#include <Eigen/Dense>

#include "sdsem/random.hpp"

namespace sdsem::ssm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Observation equations for the two panels. Row i of H_y is the loading of
// series i (site-major, variable-minor) on the m dependent-process factors.
struct MeasurementModel {
  MatrixXd H_y, H_x;
  VectorXd mean_y, mean_x;
  VectorXd obs_var_y, obs_var_x;

  int m() const { return static_cast<int>(H_y.cols()); }
  int l() const { return static_cast<int>(H_x.cols()); }
  int n_y() const { return static_cast<int>(H_y.rows()); }
  int n_x() const { return static_cast<int>(H_x.rows()); }
  void validate() const;
};

// Level-form factor dynamics:
//   g(t) = sum_i C_i g(t-i) + sum_i D_i f(t-i) + xi(t)
//   f(t) = sum_i R_i f(t-i) + eta(t)
struct FactorDynamics {
  std::vector<MatrixXd> C, D, R;
  MatrixXd state_cov_g, state_cov_f;

  int m() const { return static_cast<int>(state_cov_g.rows()); }
  int l() const { return static_cast<int>(state_cov_f.rows()); }
  int order() const;
  // Block-upper-triangular VAR matrix [[C_i, D_i],[0, R_i]] for lag i (1-based),
  // zero beyond the lag length of each block.
  MatrixXd var_matrix(int lag) const;
  void validate() const;
};

// alpha(t) = Phi alpha(t-1) + Xi w(t),  w ~ N(0, Psi)
// z(t)     = obs_mean + H alpha(t) + u(t),  u ~ N(0, diag(obs_noise_var))
struct StateSpaceForm {
  MatrixXd transition;
  MatrixXd input;
  MatrixXd state_noise_cov;
  MatrixXd meas;
  VectorXd obs_noise_var;
  VectorXd obs_mean;

  int state_dim() const { return static_cast<int>(transition.rows()); }
  int obs_dim() const { return static_cast<int>(meas.rows()); }
  MatrixXd state_cov() const { return input * state_noise_cov * input.transpose(); }
  void validate() const;
};

// Factor path d(t) = [g(t); f(t)] for t = 1..T, plus the presample values
// d(0), d(-1), ... that make up the initial companion state.
struct FactorPath {
  MatrixXd values;     // T x (m+l)
  MatrixXd presample;  // order x (m+l), row j is d(-j)

  int length() const { return static_cast<int>(values.rows()); }
  // d(t) for t in [1 - order, T].
  VectorXd at(int t) const;
};

struct InitialState {
  VectorXd mean;
  MatrixXd cov;
  static InitialState diffuse(int dim, double kappa = 1e4);
};

struct FilterResult {
  std::vector<VectorXd> pred_mean, filt_mean;
  std::vector<MatrixXd> pred_cov, filt_cov;
  double loglik = 0.0;
};

struct SmootherResult {
  std::vector<VectorXd> mean;
  std::vector<MatrixXd> cov;
};

StateSpaceForm assemble_companion(const FactorDynamics& dyn, const MeasurementModel& meas);
// Companion form with the transition supplied as VAR matrices (each (m+l) square).
StateSpaceForm assemble_companion(const std::vector<MatrixXd>& var_mats, const MatrixXd& state_noise_cov,
                                  const MeasurementModel& meas);
// Recover (C, D, R) blocks from a companion transition.
FactorDynamics extract_dynamics(const StateSpaceForm& ss, int m, int l);

// data: T x n, NaN marks a missing observation.
FilterResult kalman_filter(const StateSpaceForm& ss, const MatrixXd& data, const InitialState& init);
SmootherResult kalman_smoother(const StateSpaceForm& ss, const MatrixXd& data, const InitialState& init);
SmootherResult kalman_smoother(const StateSpaceForm& ss, const FilterResult& filt);

// Joint draw of alpha(0..T); row t of the result is alpha(t).
MatrixXd ffbs_draw(const StateSpaceForm& ss, const MatrixXd& data, const InitialState& init, RandomSource& rng);
MatrixXd ffbs_draw(const StateSpaceForm& ss, const FilterResult& filt, const InitialState& init, RandomSource& rng);

FactorPath to_factor_path(const MatrixXd& states, int n_factors, int order);
VectorXd companion_state(const FactorPath& path, int t, int order);

// Simulate alpha(1..T) and z(1..T) from the state-space form starting at
// alpha(0) = start. Returns {states (T+1) x dim, data T x n}.
std::pair<MatrixXd, MatrixXd> simulate_states(const StateSpaceForm& ss, int T, const VectorXd& start,
                                              RandomSource& rng, bool add_noise = true);

}  // namespace sdsem::ssm
