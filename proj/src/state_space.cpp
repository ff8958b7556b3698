#include "sdsem/state_space.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sdsem/errors.hpp"
#include "sdsem/linalg.hpp"

namespace sdsem::ssm {

namespace {

bool all_finite(const MatrixXd& a) { return a.allFinite(); }

MatrixXd solve_spd_or_pinv(const MatrixXd& a, const MatrixXd& rhs) {
  Eigen::LDLT<MatrixXd> ldlt(a);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    double dmin = ldlt.vectorD().minCoeff();
    double dmax = ldlt.vectorD().maxCoeff();
    if (dmin > 1e-13 * std::max(1.0, dmax)) return ldlt.solve(rhs);
  }
  return linalg::pinv(a, 1e-12) * rhs;
}

}  // namespace

void MeasurementModel::validate() const {
  require(mean_y.size() == n_y() && obs_var_y.size() == n_y(), ErrorCode::DimensionMismatch, "dependent panel sizes");
  require(mean_x.size() == n_x() && obs_var_x.size() == n_x(), ErrorCode::DimensionMismatch, "predictor panel sizes");
  require(m() <= n_y() && l() <= n_x(), ErrorCode::DimensionMismatch, "more factors than series");
  require((obs_var_y.array() > 0).all() && (obs_var_x.array() > 0).all(), ErrorCode::SingularObsCov,
          "observation variances must be positive");
}

int FactorDynamics::order() const {
  return static_cast<int>(std::max({C.size(), D.size(), R.size(), std::size_t{1}}));
}

MatrixXd FactorDynamics::var_matrix(int lag) const {
  const int mm = m(), ll = l();
  MatrixXd phi = MatrixXd::Zero(mm + ll, mm + ll);
  auto idx = static_cast<std::size_t>(lag - 1);
  if (idx < C.size()) phi.topLeftCorner(mm, mm) = C[idx];
  if (idx < D.size()) phi.topRightCorner(mm, ll) = D[idx];
  if (idx < R.size()) phi.bottomRightCorner(ll, ll) = R[idx];
  return phi;
}

void FactorDynamics::validate() const {
  for (const auto& c : C) require(c.rows() == m() && c.cols() == m(), ErrorCode::DimensionMismatch, "C block size");
  for (const auto& d : D) require(d.rows() == m() && d.cols() == l(), ErrorCode::DimensionMismatch, "D block size");
  for (const auto& r : R) require(r.rows() == l() && r.cols() == l(), ErrorCode::DimensionMismatch, "R block size");
  require(state_cov_g.cols() == m() && state_cov_f.cols() == l(), ErrorCode::DimensionMismatch, "state covariance");
}

void StateSpaceForm::validate() const {
  const int k = state_dim();
  require(transition.cols() == k, ErrorCode::DimensionMismatch, "transition must be square");
  require(input.rows() == k && input.cols() == state_noise_cov.rows(), ErrorCode::DimensionMismatch, "input matrix");
  require(state_noise_cov.rows() == state_noise_cov.cols(), ErrorCode::DimensionMismatch, "state noise covariance");
  require(meas.cols() == k, ErrorCode::DimensionMismatch, "measurement matrix columns");
  require(obs_noise_var.size() == obs_dim() && obs_mean.size() == obs_dim(), ErrorCode::DimensionMismatch,
          "observation noise size");
}

VectorXd FactorPath::at(int t) const {
  if (t >= 1) return values.row(t - 1).transpose();
  return presample.row(-t).transpose();
}

InitialState InitialState::diffuse(int dim, double kappa) {
  return {VectorXd::Zero(dim), kappa * MatrixXd::Identity(dim, dim)};
}

StateSpaceForm assemble_companion(const std::vector<MatrixXd>& var_mats, const MatrixXd& noise,
                                  const MeasurementModel& meas) {
  require(!var_mats.empty(), ErrorCode::DimensionMismatch, "at least one lag required");
  const int m = meas.m(), l = meas.l(), k = m + l;
  const int order = static_cast<int>(var_mats.size());
  for (const auto& a : var_mats)
    require(a.rows() == k && a.cols() == k, ErrorCode::DimensionMismatch, "VAR matrix size");
  require(noise.rows() == k && noise.cols() == k, ErrorCode::DimensionMismatch, "state noise covariance size");

  StateSpaceForm ss;
  ss.transition = MatrixXd::Zero(k * order, k * order);
  for (int i = 0; i < order; ++i) ss.transition.block(0, i * k, k, k) = var_mats[static_cast<std::size_t>(i)];
  if (order > 1) ss.transition.block(k, 0, k * (order - 1), k * (order - 1)).setIdentity();
  ss.input = MatrixXd::Zero(k * order, k);
  ss.input.topRows(k).setIdentity();
  ss.state_noise_cov = noise;

  const int ny = meas.n_y(), nx = meas.n_x();
  ss.meas = MatrixXd::Zero(ny + nx, k * order);
  ss.meas.block(0, 0, ny, m) = meas.H_y;
  ss.meas.block(ny, m, nx, l) = meas.H_x;
  ss.obs_noise_var.resize(ny + nx);
  ss.obs_noise_var << meas.obs_var_y, meas.obs_var_x;
  ss.obs_mean.resize(ny + nx);
  ss.obs_mean << meas.mean_y, meas.mean_x;
  return ss;
}

StateSpaceForm assemble_companion(const FactorDynamics& dyn, const MeasurementModel& meas) {
  dyn.validate();
  require(dyn.m() == meas.m() && dyn.l() == meas.l(), ErrorCode::DimensionMismatch, "factor counts disagree");
  std::vector<MatrixXd> mats;
  for (int i = 1; i <= dyn.order(); ++i) mats.push_back(dyn.var_matrix(i));
  MatrixXd noise = MatrixXd::Zero(dyn.m() + dyn.l(), dyn.m() + dyn.l());
  noise.topLeftCorner(dyn.m(), dyn.m()) = dyn.state_cov_g;
  noise.bottomRightCorner(dyn.l(), dyn.l()) = dyn.state_cov_f;
  return assemble_companion(mats, noise, meas);
}

FactorDynamics extract_dynamics(const StateSpaceForm& ss, int m, int l) {
  const int k = m + l;
  const int order = ss.state_dim() / k;
  FactorDynamics dyn;
  for (int i = 0; i < order; ++i) {
    MatrixXd blk = ss.transition.block(0, i * k, k, k);
    dyn.C.push_back(blk.topLeftCorner(m, m));
    dyn.D.push_back(blk.topRightCorner(m, l));
    dyn.R.push_back(blk.bottomRightCorner(l, l));
  }
  dyn.state_cov_g = ss.state_noise_cov.topLeftCorner(m, m);
  dyn.state_cov_f = ss.state_noise_cov.bottomRightCorner(l, l);
  return dyn;
}

FilterResult kalman_filter(const StateSpaceForm& ss, const MatrixXd& data, const InitialState& init) {
  ss.validate();
  const int T = static_cast<int>(data.rows());
  const int n = ss.obs_dim();
  const int k = ss.state_dim();
  require(data.cols() == n, ErrorCode::DimensionMismatch, "data columns must equal observation dimension");
  require(init.mean.size() == k && init.cov.rows() == k, ErrorCode::DimensionMismatch, "initial state size");
  require((ss.obs_noise_var.array() > 0).all(), ErrorCode::InnovationCovSingular,
          "observation noise variances must be positive");

  const MatrixXd& phi = ss.transition;
  const MatrixXd q = ss.state_cov();
  const VectorXd dinv = ss.obs_noise_var.cwiseInverse();
  const MatrixXd hd = ss.meas.transpose() * dinv.asDiagonal();  // H' D^{-1}
  const MatrixXd g_full = linalg::symmetrize(hd * ss.meas);
  const double logdet_d_full = ss.obs_noise_var.array().log().sum();
  const MatrixXd eye = MatrixXd::Identity(k, k);
  const double log2pi = std::log(2.0 * std::numbers::pi);

  FilterResult out;
  out.pred_mean.reserve(T);
  out.pred_cov.reserve(T);
  out.filt_mean.reserve(T);
  out.filt_cov.reserve(T);

  VectorXd a = init.mean;
  MatrixXd p = init.cov;
  for (int t = 0; t < T; ++t) {
    VectorXd ap = phi * a;
    MatrixXd pp = linalg::symmetrize(phi * p * phi.transpose() + q);
    out.pred_mean.push_back(ap);
    out.pred_cov.push_back(pp);

    VectorXd z = data.row(t).transpose();
    bool complete = z.allFinite();
    MatrixXd g;
    VectorXd b;
    double logdet_d = 0.0, quad_d = 0.0;
    int n_obs = 0;
    if (complete) {
      VectorXd v = z - ss.obs_mean - ss.meas * ap;
      g = g_full;
      b = hd * v;
      logdet_d = logdet_d_full;
      quad_d = v.dot(dinv.asDiagonal() * v);
      n_obs = n;
    } else {
      g = MatrixXd::Zero(k, k);
      b = VectorXd::Zero(k);
      for (int i = 0; i < n; ++i) {
        if (!std::isfinite(z(i))) continue;
        double vi = z(i) - ss.obs_mean(i) - ss.meas.row(i).dot(ap);
        g.noalias() += dinv(i) * ss.meas.row(i).transpose() * ss.meas.row(i);
        b.noalias() += dinv(i) * vi * ss.meas.row(i).transpose();
        logdet_d += std::log(ss.obs_noise_var(i));
        quad_d += vi * vi * dinv(i);
        ++n_obs;
      }
    }
    if (n_obs == 0) {
      out.filt_mean.push_back(ap);
      out.filt_cov.push_back(pp);
      a = ap;
      p = pp;
      continue;
    }
    // M = (I + G P_p)^{-1}; gain-free form of the update.
    Eigen::PartialPivLU<MatrixXd> lu(eye + g * pp);
    double det = lu.determinant();
    require(std::isfinite(det) && det > 0.0, ErrorCode::InnovationCovSingular, "innovation covariance singular");
    MatrixXd mmat = lu.inverse();
    VectorXd mb = mmat * b;
    VectorXd af = ap + pp * mb;
    MatrixXd ppm = pp * mmat;
    MatrixXd pf = mmat.transpose() * pp * mmat + ppm * g * ppm.transpose();
    pf = linalg::symmetrize(pf);
    out.loglik += -0.5 * (n_obs * log2pi + logdet_d + std::log(det) + quad_d - b.dot(pp * mb));
    require(af.allFinite() && all_finite(pf), ErrorCode::InnovationCovSingular, "non-finite filter state");
    out.filt_mean.push_back(af);
    out.filt_cov.push_back(pf);
    a = af;
    p = pf;
  }
  return out;
}

SmootherResult kalman_smoother(const StateSpaceForm& ss, const FilterResult& filt) {
  const int T = static_cast<int>(filt.filt_mean.size());
  SmootherResult out;
  out.mean.resize(T);
  out.cov.resize(T);
  if (T == 0) return out;
  out.mean[T - 1] = filt.filt_mean[T - 1];
  out.cov[T - 1] = filt.filt_cov[T - 1];
  const MatrixXd& phi = ss.transition;
  for (int t = T - 2; t >= 0; --t) {
    const MatrixXd& pf = filt.filt_cov[t];
    // J = P_f Phi' P_p^{-1}, computed as (P_p^{-1} Phi P_f)'.
    MatrixXd j = solve_spd_or_pinv(filt.pred_cov[t + 1], phi * pf).transpose();
    out.mean[t] = filt.filt_mean[t] + j * (out.mean[t + 1] - filt.pred_mean[t + 1]);
    out.cov[t] = linalg::symmetrize(pf + j * (out.cov[t + 1] - filt.pred_cov[t + 1]) * j.transpose());
  }
  return out;
}

SmootherResult kalman_smoother(const StateSpaceForm& ss, const MatrixXd& data, const InitialState& init) {
  return kalman_smoother(ss, kalman_filter(ss, data, init));
}

namespace {

VectorXd backward_step(const MatrixXd& phi, const VectorXd& af, const MatrixXd& pf, const VectorXd& ap_next,
                       const MatrixXd& pp_next, const VectorXd& next, RandomSource& rng) {
  MatrixXd j = solve_spd_or_pinv(pp_next, phi * pf).transpose();
  VectorXd mean = af + j * (next - ap_next);
  MatrixXd cov = linalg::symmetrize(pf - j * pp_next * j.transpose());
  return mean + linalg::draw_psd(cov, rng);
}

}  // namespace

MatrixXd ffbs_draw(const StateSpaceForm& ss, const FilterResult& filt, const InitialState& init, RandomSource& rng) {
  const int T = static_cast<int>(filt.filt_mean.size());
  const int k = ss.state_dim();
  MatrixXd states(T + 1, k);
  if (T == 0) {
    states.row(0) = (init.mean + linalg::draw_psd(init.cov, rng)).transpose();
    return states;
  }
  VectorXd cur = filt.filt_mean[T - 1] + linalg::draw_psd(filt.filt_cov[T - 1], rng);
  states.row(T) = cur.transpose();
  for (int t = T - 2; t >= 0; --t) {
    cur = backward_step(ss.transition, filt.filt_mean[t], filt.filt_cov[t], filt.pred_mean[t + 1],
                        filt.pred_cov[t + 1], cur, rng);
    states.row(t + 1) = cur.transpose();
  }
  cur = backward_step(ss.transition, init.mean, init.cov, filt.pred_mean[0], filt.pred_cov[0], cur, rng);
  states.row(0) = cur.transpose();
  require(states.allFinite(), ErrorCode::NonFiniteSample, "non-finite state draw");
  return states;
}

MatrixXd ffbs_draw(const StateSpaceForm& ss, const MatrixXd& data, const InitialState& init, RandomSource& rng) {
  return ffbs_draw(ss, kalman_filter(ss, data, init), init, rng);
}

FactorPath to_factor_path(const MatrixXd& states, int k, int order) {
  const int T = static_cast<int>(states.rows()) - 1;
  FactorPath path;
  path.values.resize(T, k);
  for (int t = 1; t <= T; ++t) path.values.row(t - 1) = states.row(t).head(k);
  path.presample.resize(order, k);
  for (int j = 0; j < order; ++j) path.presample.row(j) = states.row(0).segment(j * k, k);
  return path;
}

VectorXd companion_state(const FactorPath& path, int t, int order) {
  const int k = static_cast<int>(path.values.cols());
  VectorXd a(k * order);
  for (int j = 0; j < order; ++j) a.segment(j * k, k) = path.at(t - j);
  return a;
}

std::pair<MatrixXd, MatrixXd> simulate_states(const StateSpaceForm& ss, int T, const VectorXd& start,
                                              RandomSource& rng, bool add_noise) {
  const int k = ss.state_dim();
  const int n = ss.obs_dim();
  MatrixXd states(T + 1, k);
  MatrixXd data(T, n);
  states.row(0) = start.transpose();
  VectorXd a = start;
  for (int t = 1; t <= T; ++t) {
    a = ss.transition * a;
    if (add_noise) a += ss.input * linalg::draw_psd(ss.state_noise_cov, rng);
    VectorXd z = ss.obs_mean + ss.meas * a;
    if (add_noise) z += (ss.obs_noise_var.cwiseSqrt().array() * rng.normal_vector(n).array()).matrix();
    require(a.allFinite() && z.allFinite() && a.cwiseAbs().maxCoeff() < 1e150, ErrorCode::NonFiniteSample,
            "simulated path overflowed");
    states.row(t) = a.transpose();
    data.row(t - 1) = z.transpose();
  }
  return {states, data};
}

}  // namespace sdsem::ssm
