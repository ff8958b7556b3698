#include "sdsem/model.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "sdsem/errors.hpp"
#include "sdsem/linalg.hpp"

namespace sdsem {

SsvsGroup SsvsGroup::make(Eigen::Index rows, Eigen::Index cols, double spike, double slab) {
  SsvsGroup g;
  g.include = MatrixXi::Ones(rows, cols);
  g.spike_var = MatrixXd::Constant(rows, cols, spike);
  g.slab_var = MatrixXd::Constant(rows, cols, slab);
  return g;
}

MatrixXd SsvsGroup::prior_var() const {
  MatrixXd v(include.rows(), include.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = include(i, j) ? slab_var(i, j) : spike_var(i, j);
  return v;
}

namespace {

SsvsGroup group_from_scale(const MatrixXd& scale, const PriorConfig& prior, bool start_included) {
  SsvsGroup g;
  MatrixXd s = scale.cwiseMax(1e-8);
  g.spike_var = prior.ssvs_spike_mult * s;
  g.slab_var = prior.ssvs_slab_mult * s;
  g.include = MatrixXi::Constant(scale.rows(), scale.cols(), start_included ? 1 : 0);
  return g;
}

}  // namespace

SsvsState make_ssvs_state(const SsvsScales& sc, const PriorConfig& prior, bool start_included) {
  SsvsState s;
  s.a = group_from_scale(sc.a, prior, start_included);
  s.a2 = group_from_scale(sc.a2, prior, start_included);
  s.af = group_from_scale(sc.af, prior, start_included);
  s.k = group_from_scale(sc.k, prior, start_included);
  s.phi = group_from_scale(sc.phi, prior, start_included);
  s.v_xi = group_from_scale(sc.v_xi, prior, start_included);
  s.v_eta = group_from_scale(sc.v_eta, prior, start_included);
  return s;
}

SsvsScales uniform_scales(int m, int l, int rank_d, int rank_f, int order, double v) {
  SsvsScales s;
  s.a = MatrixXd::Constant(m, rank_d, v);
  s.a2 = MatrixXd::Constant(m, rank_f, v);
  s.af = MatrixXd::Constant(l, rank_f, v);
  s.k = MatrixXd::Constant(m, (m + l) * (order - 1), v);
  s.phi = MatrixXd::Constant(l, l * (order - 1), v);
  s.v_xi = MatrixXd::Constant(m, m, v);
  s.v_eta = MatrixXd::Constant(l, l, v);
  return s;
}

MatrixXd precision_factor_from_cov(const MatrixXd& cov) {
  // Upper-triangular V with V V' = cov^{-1}: reverse-order Cholesky.
  const Eigen::Index k = cov.rows();
  MatrixXd prec = linalg::spd_inverse(cov);
  Eigen::PermutationMatrix<Eigen::Dynamic> rev(k);
  for (Eigen::Index i = 0; i < k; ++i) rev.indices()(i) = static_cast<int>(k - 1 - i);
  MatrixXd pr = rev * prec * rev.transpose();
  Eigen::LLT<MatrixXd> llt(pr);
  require(llt.info() == Eigen::Success, ErrorCode::NotPositiveDefinite, "state covariance not positive definite");
  MatrixXd l = llt.matrixL();
  return rev.transpose() * l * rev;
}

namespace {
MatrixXd cov_from_factor(const MatrixXd& v) {
  return linalg::spd_inverse(linalg::symmetrize(v * v.transpose()));
}
}  // namespace

MatrixXd SdSemParams::state_cov_g() const { return cov_from_factor(V_xi); }
MatrixXd SdSemParams::state_cov_f() const { return cov_from_factor(V_eta); }

MatrixXd SdSemParams::Bbar() const {
  if (ecm.rank_d() == 0) return MatrixXd::Zero(m() + l(), 0);
  return ecm.B() * ecm.E.inverse();
}

MatrixXd SdSemParams::Bfbar() const {
  if (ecm.rank_f() == 0) return MatrixXd::Zero(l(), 0);
  return ecm.Bf * ecm.Ef.inverse();
}

MatrixXd SdSemParams::k_wide() const {
  MatrixXd out(m(), (m() + l()) * (order() - 1));
  for (std::size_t i = 0; i < ecm.K.size(); ++i) out.middleCols(static_cast<Eigen::Index>(i) * (m() + l()), m() + l()) = ecm.K[i];
  return out;
}

MatrixXd SdSemParams::phi_wide() const {
  MatrixXd out(l(), l() * (order() - 1));
  for (std::size_t i = 0; i < ecm.Phi2.size(); ++i) out.middleCols(static_cast<Eigen::Index>(i) * l(), l()) = ecm.Phi2[i];
  return out;
}

std::vector<MatrixXd> SdSemParams::var_matrices() const { return ecm::ecm_to_var(ecm::blocks_to_ecm(ecm)); }

ssm::FactorDynamics SdSemParams::dynamics() const {
  ssm::FactorDynamics dyn;
  for (const auto& phi : var_matrices()) {
    dyn.C.push_back(phi.topLeftCorner(m(), m()));
    dyn.D.push_back(phi.topRightCorner(m(), l()));
    dyn.R.push_back(phi.bottomRightCorner(l(), l()));
  }
  dyn.state_cov_g = state_cov_g();
  dyn.state_cov_f = state_cov_f();
  return dyn;
}

ssm::StateSpaceForm SdSemParams::state_space() const {
  MatrixXd noise = MatrixXd::Zero(m() + l(), m() + l());
  noise.topLeftCorner(m(), m()) = state_cov_g();
  noise.bottomRightCorner(l(), l()) = state_cov_f();
  return ssm::assemble_companion(var_matrices(), noise, meas);
}

double deviance(const MatrixXd& resid, const VectorXd& obs_var) {
  require(resid.cols() == obs_var.size(), ErrorCode::DimensionMismatch, "deviance residual columns");
  require((obs_var.array() > 0.0).all() && obs_var.allFinite(), ErrorCode::SingularObsCov,
          "observation covariance singular");
  const double T = static_cast<double>(resid.rows());
  const double n = static_cast<double>(resid.cols());
  double trace = 0.0;
  for (Eigen::Index j = 0; j < resid.cols(); ++j) trace += resid.col(j).squaredNorm() / obs_var(j);
  return T * n * std::log(2.0 * std::numbers::pi) + T * obs_var.array().log().sum() + trace;
}

MatrixXd measurement_residuals(const SdSemParams& p, const MatrixXd& y, const MatrixXd& x,
                               const ssm::FactorPath& f) {
  const int m = p.m();
  const int l = p.l();
  MatrixXd g = f.values.leftCols(m);
  MatrixXd ff = f.values.rightCols(l);
  MatrixXd ry = y.transpose() - g * p.meas.H_y.transpose();
  ry.rowwise() -= p.meas.mean_y.transpose();
  MatrixXd rx = x.transpose() - ff * p.meas.H_x.transpose();
  rx.rowwise() -= p.meas.mean_x.transpose();
  MatrixXd out(y.cols(), y.rows() + x.rows());
  out << ry, rx;
  return out;
}

double deviance(const SdSemParams& p, const MatrixXd& y, const MatrixXd& x, const ssm::FactorPath& f) {
  VectorXd var(p.meas.n_y() + p.meas.n_x());
  var << p.meas.obs_var_y, p.meas.obs_var_x;
  return deviance(measurement_residuals(p, y, x, f), var);
}

SyntheticTruth simulate(const SdSemParams& params, const data::PanelDataset& layout, int T, RandomSource& rng) {
  params.meas.validate();
  const int k = params.m() + params.l();
  const int order = params.order();
  ssm::StateSpaceForm ss = params.state_space();
  auto [states, z] = ssm::simulate_states(ss, T, VectorXd::Zero(k * order), rng, true);
  SyntheticTruth out;
  out.params = params;
  out.factors = ssm::to_factor_path(states, k, order);
  out.panel = layout;
  out.panel.periods.resize(static_cast<std::size_t>(T));
  if (!layout.periods.empty()) {
    auto q = data::Quarter::parse(layout.periods.front());
    for (int t = 0; t < T; ++t, q = q.next()) out.panel.periods[static_cast<std::size_t>(t)] = q.label();
  }
  const int ny = params.meas.n_y();
  out.panel.y = z.leftCols(ny).transpose();
  out.panel.x = z.rightCols(params.meas.n_x()).transpose();
  return out;
}

data::PanelDataset grid_layout(int rows, int cols, int n_periods) {
  data::PanelDataset p;
  char buf[32];
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof buf, "s%02d", r * cols + c);
      p.sites.emplace_back(buf);
    }
  data::Quarter q{2000, 1};
  for (int t = 0; t < n_periods; ++t, q = q.next()) p.periods.push_back(q.label());
  p.y_vars = {"y"};
  p.x_vars = {"x"};
  p.adjacency = lattice::AdjacencyMatrix::grid(rows, cols);
  p.y = MatrixXd::Zero(rows * cols, n_periods);
  p.x = MatrixXd::Zero(rows * cols, n_periods);
  p.y_transforms.assign(1, data::TransformRecord{});
  return p;
}

namespace {

MatrixXd draw_loadings(const lattice::AdjacencyMatrix& w, const std::vector<int>& anchors, int n_factors,
                       const SyntheticSpec& spec, std::vector<lattice::GmrfSpec>& gmrfs, RandomSource& rng) {
  const int n = w.n_sites();
  MatrixXd h(n, n_factors);
  gmrfs.clear();
  for (int j = 0; j < n_factors; ++j) {
    lattice::GmrfSpec g = lattice::GmrfSpec::independent(n, MatrixXd::Constant(1, 1, spec.gmrf_cond_var));
    g.ftilde(0, 0) = (j % 2 == 0 ? 1.0 : -1.0) * spec.spatial_ftilde;
    g.mean_coef(0) = spec.loading_mean;
    h.col(j) = lattice::sample_gmrf(lattice::build_joint_precision(w, g), rng);
    gmrfs.push_back(g);
  }
  for (int i = 0; i < n_factors; ++i)
    for (int j = i; j < n_factors; ++j) h(anchors[static_cast<std::size_t>(i)], j) = (i == j) ? 1.0 : 0.0;
  return h;
}

std::vector<int> spread_anchors(int n_sites, int count) {
  std::vector<int> a;
  for (int j = 0; j < count; ++j) a.push_back(count == 1 ? 0 : j * (n_sites - 1) / (count - 1));
  return a;
}

}  // namespace

SdSemParams synthetic_params(const SyntheticSpec& spec, RandomSource& rng) {
  const int n = spec.grid_rows * spec.grid_cols;
  const int m = spec.m, l = spec.l;
  require(m <= n && l <= n, ErrorCode::DimensionMismatch, "more factors than sites");
  auto w = lattice::AdjacencyMatrix::grid(spec.grid_rows, spec.grid_cols);

  SdSemParams p;
  p.anchors_y = spread_anchors(n, m);
  p.anchors_x = spread_anchors(n, l);
  p.meas.H_y = draw_loadings(w, p.anchors_y, m, spec, p.gmrf_y, rng);
  p.meas.H_x = draw_loadings(w, p.anchors_x, l, spec, p.gmrf_x, rng);
  p.meas.mean_y = VectorXd::Zero(n);
  p.meas.mean_x = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    p.meas.mean_y(i) = 0.5 * rng.normal();
    p.meas.mean_x(i) = 0.5 * rng.normal();
  }
  p.meas.obs_var_y = VectorXd::Constant(n, spec.obs_sd * spec.obs_sd);
  p.meas.obs_var_x = VectorXd::Constant(n, spec.obs_sd * spec.obs_sd);

  const int rd = std::max(m - 1, 0), rf = std::max(l - 1, 0);
  p.ecm = ecm::EcmBlocks::zeros(m, l, rd, rf, spec.order);
  if (rd > 0) {
    // g_1 error-corrects towards f_1.
    VectorXd b = VectorXd::Zero(m + l);
    b(0) = 1.0;
    b(m) = -1.0;
    b.normalize();
    p.ecm.B1.col(0) = b.head(m);
    p.ecm.B2.col(0) = b.tail(l);
    p.ecm.A(0, 0) = -0.3;
    p.ecm.A(1, 0) = 0.1;
  }
  if (rf > 0) {
    VectorXd bf = VectorXd::Zero(l);
    bf(0) = 1.0;
    bf(1) = -1.0;
    bf.normalize();
    p.ecm.Bf.col(0) = bf;
    p.ecm.Af(0, 0) = -0.3;
    p.ecm.Af(1, 0) = 0.3;
    p.ecm.A2(0, 0) = 0.1;
  }
  for (int i = 0; i + 1 < spec.order; ++i) {
    p.ecm.K[static_cast<std::size_t>(i)].leftCols(m) = 0.2 * MatrixXd::Identity(m, m);
    p.ecm.Phi2[static_cast<std::size_t>(i)] = 0.2 * MatrixXd::Identity(l, l);
  }
  const double prec = 1.0 / (spec.state_sd * spec.state_sd);
  p.V_xi = std::sqrt(prec) * MatrixXd::Identity(m, m);
  p.V_eta = std::sqrt(prec) * MatrixXd::Identity(l, l);
  p.ssvs = make_ssvs_state(uniform_scales(m, l, rd, rf, spec.order, 1.0), PriorConfig{});
  return p;
}

}  // namespace sdsem
