#include "sdsem/mcmc.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <thread>

#include "sdsem/anchors.hpp"
#include "sdsem/errors.hpp"
#include "sdsem/linalg.hpp"

namespace sdsem::mcmc {

using lattice::SparseMatrix;

int McmcConfig::retained() const {
  if (iterations <= burn_in || thin <= 0) return 0;
  return (iterations - burn_in) / thin;
}

double sample_precision(double shape, double rate, double n, double sse, RandomSource& rng) {
  return rng.gamma(shape + 0.5 * n, rate + 0.5 * sse);
}

double ssvs_inclusion_probability(double coef, double spike_var, double slab_var, double p) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  double log_slab = std::log(p) - 0.5 * std::log(slab_var) - 0.5 * coef * coef / slab_var;
  double log_spike = std::log1p(-p) - 0.5 * std::log(spike_var) - 0.5 * coef * coef / spike_var;
  return 1.0 / (1.0 + std::exp(log_spike - log_slab));
}

namespace {

void regression_system(const MatrixXd& y, const MatrixXd& x, const MatrixXd& omega, const MatrixXd& prior_var,
                       bool likelihood, MatrixXd& prec, VectorXd& lin) {
  const Eigen::Index p = prior_var.rows(), q = prior_var.cols();
  VectorXd pv = linalg::vec_rowmajor(prior_var);
  prec = pv.cwiseInverse().asDiagonal();
  lin = VectorXd::Zero(p * q);
  if (!likelihood || y.rows() == 0) return;
  require(y.cols() == p && x.cols() == q && omega.rows() == p, ErrorCode::DimensionMismatch, "regression sizes");
  prec += linalg::kron(omega, x.transpose() * x);
  lin = linalg::vec_rowmajor(omega * y.transpose() * x);
}

}  // namespace

MatrixXd sample_regression(const MatrixXd& y, const MatrixXd& x, const MatrixXd& omega, const MatrixXd& prior_var,
                           RandomSource& rng, bool likelihood) {
  if (prior_var.size() == 0) return MatrixXd::Zero(prior_var.rows(), prior_var.cols());
  MatrixXd prec;
  VectorXd lin;
  regression_system(y, x, omega, prior_var, likelihood, prec, lin);
  return linalg::unvec_rowmajor(linalg::draw_canonical(prec, lin, rng), prior_var.rows(), prior_var.cols());
}

MatrixXd regression_posterior_mean(const MatrixXd& y, const MatrixXd& x, const MatrixXd& omega,
                                   const MatrixXd& prior_var) {
  MatrixXd prec;
  VectorXd lin;
  regression_system(y, x, omega, prior_var, true, prec, lin);
  return linalg::unvec_rowmajor(prec.llt().solve(lin), prior_var.rows(), prior_var.cols());
}

bool is_free_loading(int row, int col, const std::vector<int>& anchors) {
  for (std::size_t i = 0; i < anchors.size(); ++i)
    if (anchors[i] == row) return static_cast<int>(i) > col;
  return true;
}

namespace {

struct LoadingSystem {
  SparseMatrix q_ff;
  VectorXd b_f;
  std::vector<int> free_index;  // flat column-major index of each free entry
};

LoadingSystem loading_system(const LoadingProblem& pr, const MatrixXd& current) {
  const MatrixXd& f = *pr.factors;
  const MatrixXd& y = *pr.data;
  const auto& anchors = *pr.anchors;
  const int n = static_cast<int>(current.rows());
  const int k = static_cast<int>(current.cols());
  const int dim = n * k;
  require(static_cast<int>(pr.gmrfs->size()) == k, ErrorCode::DimensionMismatch, "one GMRF per loading column");
  require(static_cast<int>(anchors.size()) == k, ErrorCode::DimensionMismatch, "one anchor per factor");

  std::vector<Eigen::Triplet<double>> trip;
  VectorXd b = VectorXd::Zero(dim);
  for (int j = 0; j < k; ++j) {
    auto g = lattice::build_joint_precision(*pr.adjacency, (*pr.gmrfs)[static_cast<std::size_t>(j)]);
    require(g.precision.rows() == n, ErrorCode::DimensionMismatch, "GMRF size differs from loading rows");
    for (int c = 0; c < g.precision.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(g.precision, c); it; ++it)
        trip.emplace_back(j * n + static_cast<int>(it.row()), j * n + static_cast<int>(it.col()), it.value());
    b.segment(j * n, n) = g.precision * g.mean;
  }
  if (pr.likelihood) {
    const VectorXd& var = *pr.obs_var;
    const bool complete = y.allFinite();
    MatrixXd ff = complete ? MatrixXd(f.transpose() * f) : MatrixXd();
    for (int r = 0; r < n; ++r) {
      MatrixXd g_r;
      VectorXd b_r;
      if (complete) {
        g_r = ff;
        b_r = f.transpose() * y.col(r);
      } else {
        g_r = MatrixXd::Zero(k, k);
        b_r = VectorXd::Zero(k);
        for (Eigen::Index t = 0; t < y.rows(); ++t) {
          if (!std::isfinite(y(t, r))) continue;
          g_r.noalias() += f.row(t).transpose() * f.row(t);
          b_r.noalias() += y(t, r) * f.row(t).transpose();
        }
      }
      g_r /= var(r);
      b_r /= var(r);
      for (int a = 0; a < k; ++a) {
        b(a * n + r) += b_r(a);
        for (int c = 0; c < k; ++c) trip.emplace_back(a * n + r, c * n + r, g_r(a, c));
      }
    }
  }
  SparseMatrix q(dim, dim);
  q.setFromTriplets(trip.begin(), trip.end());

  VectorXd fixed = VectorXd::Zero(dim);
  std::vector<int> map(static_cast<std::size_t>(dim), -1);
  LoadingSystem sys;
  for (int j = 0; j < k; ++j)
    for (int r = 0; r < n; ++r) {
      int idx = j * n + r;
      if (is_free_loading(r, j, anchors)) {
        map[static_cast<std::size_t>(idx)] = static_cast<int>(sys.free_index.size());
        sys.free_index.push_back(idx);
      } else {
        fixed(idx) = current(r, j);
      }
    }
  VectorXd adj = b - q * fixed;
  const int nf = static_cast<int>(sys.free_index.size());
  sys.b_f.resize(nf);
  for (int i = 0; i < nf; ++i) sys.b_f(i) = adj(sys.free_index[static_cast<std::size_t>(i)]);
  std::vector<Eigen::Triplet<double>> tf;
  for (int c = 0; c < q.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(q, c); it; ++it) {
      int ri = map[static_cast<std::size_t>(it.row())], ci = map[static_cast<std::size_t>(it.col())];
      if (ri >= 0 && ci >= 0) tf.emplace_back(ri, ci, it.value());
    }
  sys.q_ff.resize(nf, nf);
  sys.q_ff.setFromTriplets(tf.begin(), tf.end());
  return sys;
}

MatrixXd scatter_free(const MatrixXd& current, const std::vector<int>& free_index, const VectorXd& values) {
  MatrixXd h = current;
  const Eigen::Index n = current.rows();
  for (std::size_t i = 0; i < free_index.size(); ++i) {
    int idx = free_index[i];
    h(idx % n, idx / n) = values(static_cast<Eigen::Index>(i));
  }
  return h;
}

}  // namespace

MatrixXd sample_loadings(const LoadingProblem& problem, const MatrixXd& current, RandomSource& rng) {
  LoadingSystem sys = loading_system(problem, current);
  if (sys.free_index.empty()) return current;
  VectorXd draw = lattice::sample_canonical(sys.q_ff, sys.b_f, rng);
  return scatter_free(current, sys.free_index, draw);
}

MatrixXd loadings_posterior_mean(const LoadingProblem& problem, const MatrixXd& current) {
  LoadingSystem sys = loading_system(problem, current);
  if (sys.free_index.empty()) return current;
  Eigen::SimplicialLLT<SparseMatrix> llt(sys.q_ff);
  require(llt.info() == Eigen::Success, ErrorCode::FactorizationFailure, "loading precision not positive definite");
  return scatter_free(current, sys.free_index, llt.solve(sys.b_f));
}

VectorXd sample_gmrf_mean_coef(const lattice::AdjacencyMatrix& w, const lattice::GmrfSpec& spec, const VectorXd& h,
                               double prior_var, RandomSource& rng) {
  auto g = lattice::build_joint_precision(w, spec);
  const MatrixXd& d = spec.mean_design;
  MatrixXd qd = g.precision * d;
  MatrixXd prec = d.transpose() * qd;
  prec.diagonal().array() += 1.0 / prior_var;
  VectorXd lin = qd.transpose() * h;
  return linalg::draw_canonical(prec, lin, rng);
}

namespace {

double wishart_log_kernel(const MatrixXd& x, double df, const MatrixXd& scale) {
  // log W(x; df, scale) without the multivariate-gamma and 2^{...} constants.
  const double k = static_cast<double>(x.rows());
  return 0.5 * (df - k - 1.0) * linalg::log_det_spd(x) - 0.5 * linalg::spd_inverse(scale).cwiseProduct(x).sum() -
         0.5 * df * linalg::log_det_spd(scale);
}

}  // namespace

double gmrf_hyper_log_target(const lattice::AdjacencyMatrix& w, const lattice::GmrfSpec& spec, const VectorXd& h,
                             const PriorConfig& prior) {
  const int k = spec.n_vars();
  if (linalg::min_eigenvalue(linalg::symmetrize(spec.cond_cov)) <= lattice::kPdTolerance)
    return -std::numeric_limits<double>::infinity();
  MatrixXd tinv = linalg::spd_inverse(spec.cond_cov);
  SparseMatrix q = lattice::assemble_precision(w, linalg::spd_sqrt(tinv), spec.ftilde);
  if (!lattice::check_positive_definite(MatrixXd(q))) return -std::numeric_limits<double>::infinity();
  lattice::JointGmrf g{spec.mean(), q};
  double ll = lattice::log_density(g, h);
  MatrixXd s = prior.wishart_scale * MatrixXd::Identity(k, k);
  double lp_t = 0.5 * (prior.wishart_df - k - 1.0) * linalg::log_det_spd(tinv) -
                0.5 * (prior.wishart_df * s).cwiseProduct(tinv).sum();
  double lp_f = -spec.ftilde.squaredNorm() / (prior.gmrf_coef_scale * prior.gmrf_coef_scale);
  return ll + lp_t + lp_f;
}

double mh_acceptance(double lc, double lp, double log_q_ratio) {
  if (!std::isfinite(lp)) return 0.0;
  double r = lp - lc + log_q_ratio;
  return r >= 0.0 ? 1.0 : std::exp(r);
}

SsvsScales ssvs_scales_from_variances(const SsvsScales& v, double floor) {
  SsvsScales s = v;
  for (MatrixXd* m : {&s.a, &s.a2, &s.af, &s.k, &s.phi, &s.v_xi, &s.v_eta}) *m = m->cwiseMax(floor);
  return s;
}

// ---------------------------------------------------------------------------

namespace {

MatrixXd nan_to_zero_mean(const MatrixXd& z, VectorXd& means) {
  means.resize(z.cols());
  MatrixXd out = z;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    double s = 0.0;
    int c = 0;
    for (Eigen::Index t = 0; t < z.rows(); ++t)
      if (std::isfinite(z(t, j))) {
        s += z(t, j);
        ++c;
      }
    means(j) = c ? s / c : 0.0;
    for (Eigen::Index t = 0; t < z.rows(); ++t) out(t, j) = std::isfinite(z(t, j)) ? z(t, j) - means(j) : 0.0;
  }
  return out;
}

struct PcaInit {
  MatrixXd loadings;  // n x k with anchor block = I
  MatrixXd scores;    // T x k
  VectorXd means;
  VectorXd resid_var;
};

PcaInit pca_init(const MatrixXd& z, int k, const std::vector<int>& anchors) {
  PcaInit out;
  MatrixXd c = nan_to_zero_mean(z, out.means);
  const double T = static_cast<double>(z.rows());
  MatrixXd cov = c.transpose() * c / T;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  const Eigen::Index n = cov.rows();
  MatrixXd v = es.eigenvectors().rightCols(k).rowwise().reverse();
  MatrixXd va(k, k);
  for (int i = 0; i < k; ++i) va.row(i) = v.row(anchors[static_cast<std::size_t>(i)]);
  Eigen::FullPivLU<MatrixXd> lu(va);
  if (!lu.isInvertible() || lu.rcond() < 1e-6) va += 0.1 * MatrixXd::Identity(k, k);
  MatrixXd va_inv = va.inverse();
  out.loadings = v * va_inv;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) out.loadings(anchors[static_cast<std::size_t>(i)], j) = (i == j) ? 1.0 : (i < j ? 0.0 : out.loadings(anchors[static_cast<std::size_t>(i)], j));
  out.scores = (out.loadings.transpose() * out.loadings).ldlt().solve(out.loadings.transpose() * c.transpose()).transpose();
  // Rotate within the unit lower-triangular group so the factor increments
  // are roughly uncorrelated, matching the diagonal state-noise structure.
  if (z.rows() > 2 && k > 1) {
    MatrixXd d = out.scores.bottomRows(z.rows() - 1) - out.scores.topRows(z.rows() - 1);
    MatrixXd s = (d.rowwise() - d.colwise().mean()).transpose() * (d.rowwise() - d.colwise().mean()) / T;
    MatrixXd lower = MatrixXd::Identity(k, k);
    VectorXd diag(k);
    for (int j = 0; j < k; ++j) {
      double v = s(j, j);
      for (int q = 0; q < j; ++q) v -= lower(j, q) * lower(j, q) * diag(q);
      diag(j) = std::max(v, 1e-12);
      for (int i = j + 1; i < k; ++i) {
        double w = s(i, j);
        for (int q = 0; q < j; ++q) w -= lower(i, q) * lower(j, q) * diag(q);
        lower(i, j) = w / diag(j);
      }
    }
    out.loadings = out.loadings * lower;
    out.scores = lower.triangularView<Eigen::UnitLower>().solve(out.scores.transpose()).transpose();
  }
  MatrixXd r = c - out.scores * out.loadings.transpose();
  out.resid_var = (r.colwise().squaredNorm() / T).transpose().cwiseMax(1e-4);
  (void)n;
  return out;
}

double column_var(const MatrixXd& x, Eigen::Index j) {
  if (x.rows() < 2) return 1.0;
  double mu = x.col(j).mean();
  return (x.col(j).array() - mu).square().sum() / static_cast<double>(x.rows() - 1);
}

}  // namespace

std::vector<int> default_anchor_rows(const data::PanelDataset& data, int m, int l, std::uint64_t seed,
                                     std::vector<int>& anchors_x) {
  std::vector<std::string> regions_y, regions_x;
  if (!data.regions.empty()) {
    for (Eigen::Index r = 0; r < data.y.rows(); ++r)
      regions_y.push_back(data.regions[static_cast<std::size_t>(r / std::max(1, data.n_y_vars()))]);
    for (Eigen::Index r = 0; r < data.x.rows(); ++r)
      regions_x.push_back(data.regions[static_cast<std::size_t>(r / std::max(1, data.n_x_vars()))]);
  }
  MatrixXd ys = data.y, xs = data.x;
  for (Eigen::Index i = 0; i < ys.rows(); ++i)
    for (Eigen::Index t = 0; t < ys.cols(); ++t)
      if (!std::isfinite(ys(i, t))) ys(i, t) = 0.0;
  for (Eigen::Index i = 0; i < xs.rows(); ++i)
    for (Eigen::Index t = 0; t < xs.cols(); ++t)
      if (!std::isfinite(xs(i, t))) xs(i, t) = 0.0;
  std::vector<int> ay = select_anchor_states(ys, m, seed, regions_y);
  std::vector<int> preferred;
  for (int r : ay) preferred.push_back((r / std::max(1, data.n_y_vars())) * std::max(1, data.n_x_vars()));
  anchors_x = select_anchor_states(xs, l, seed + 1, regions_x, preferred);
  return ay;
}

GibbsSampler::GibbsSampler(const data::PanelDataset& data, const McmcConfig& config, int chain_id)
    : data_(data),
      config_(config),
      chain_id_(chain_id),
      rng_(RandomSource::stream(config.seed, static_cast<std::uint64_t>(chain_id) + 1)) {
  data_.validate();
  yt_ = data.y.transpose();
  xt_ = data.x.transpose();
}

void GibbsSampler::initialize() {
  const int m = config_.m, l = config_.l, order = config_.order;
  const int rd = config_.effective_rank_d(), rf = config_.effective_rank_f();
  require(m >= 1 && l >= 1 && order >= 1, ErrorCode::ConfigError, "factor counts and order must be positive");
  require(m <= data_.y.rows() && l <= data_.x.rows(), ErrorCode::ConfigError, "more factors than series");
  require(rd <= std::max(m - 1, 0) + 1 && rf <= std::max(l - 1, 0) + 1, ErrorCode::ConfigError,
          "cointegration rank too large");
  const double spread = config_.init_spread;
  RandomSource& r = rng_;

  SdSemParams& p = state_.params;
  if (!config_.anchors_y.empty() && !config_.anchors_x.empty()) {
    p.anchors_y = config_.anchors_y;
    p.anchors_x = config_.anchors_x;
  } else {
    p.anchors_y = default_anchor_rows(data_, m, l, config_.seed, p.anchors_x);
  }
  require(static_cast<int>(p.anchors_y.size()) == m && static_cast<int>(p.anchors_x.size()) == l,
          ErrorCode::ConfigError, "anchor count must equal factor count");

  PcaInit py = pca_init(yt_, m, p.anchors_y);
  PcaInit px = pca_init(xt_, l, p.anchors_x);
  auto perturb = [&](MatrixXd h, const std::vector<int>& anchors) {
    for (Eigen::Index i = 0; i < h.rows(); ++i)
      for (Eigen::Index j = 0; j < h.cols(); ++j)
        if (is_free_loading(static_cast<int>(i), static_cast<int>(j), anchors))
          h(i, j) *= std::exp(0.03 * spread * r.normal());
    return h;
  };
  p.meas.H_y = perturb(py.loadings, p.anchors_y);
  p.meas.H_x = perturb(px.loadings, p.anchors_x);
  p.meas.mean_y = py.means;
  p.meas.mean_x = px.means;
  p.meas.obs_var_y = py.resid_var;
  p.meas.obs_var_x = px.resid_var;
  for (Eigen::Index i = 0; i < p.meas.obs_var_y.size(); ++i) p.meas.obs_var_y(i) *= std::exp(0.3 * spread * r.normal());
  for (Eigen::Index i = 0; i < p.meas.obs_var_x.size(); ++i) p.meas.obs_var_x(i) *= std::exp(0.3 * spread * r.normal());

  const int n_sites = data_.n_sites();
  auto init_gmrfs = [&](const MatrixXd& h, int n_vars) {
    std::vector<lattice::GmrfSpec> out;
    for (Eigen::Index j = 0; j < h.cols(); ++j) {
      MatrixXd t = config_.prior.wishart_scale * MatrixXd::Identity(n_vars, n_vars) * std::exp(0.2 * spread * r.normal());
      lattice::GmrfSpec g = lattice::GmrfSpec::independent(n_sites, t);
      for (int a = 0; a < n_vars; ++a)
        for (int b = 0; b < n_vars; ++b) g.ftilde(a, b) = std::clamp(0.03 * spread * r.normal(), -0.1, 0.1);
      for (int a = 0; a < n_vars; ++a) {
        double s = 0.0;
        for (int i = 0; i < n_sites; ++i) s += h(i * n_vars + a, j);
        g.mean_coef(a) = s / n_sites;
      }
      out.push_back(g);
    }
    return out;
  };
  p.gmrf_y = init_gmrfs(p.meas.H_y, std::max(1, data_.n_y_vars()));
  p.gmrf_x = init_gmrfs(p.meas.H_x, std::max(1, data_.n_x_vars()));

  p.ecm = ecm::EcmBlocks::zeros(m, l, rd, rf, order);
  if (rd > 0) {
    MatrixXd bbar(m + l, rd);
    for (Eigen::Index i = 0; i < bbar.size(); ++i) bbar(i) = r.normal();
    MatrixXd e = linalg::spd_inv_sqrt(bbar.transpose() * bbar);
    MatrixXd b = bbar * e;
    p.ecm.B1 = b.topRows(m);
    p.ecm.B2 = b.bottomRows(l);
    p.ecm.E = e;
    for (Eigen::Index i = 0; i < p.ecm.A.size(); ++i) p.ecm.A(i) = 0.05 * spread * r.normal();
  }
  if (rf > 0) {
    MatrixXd bbar(l, rf);
    for (Eigen::Index i = 0; i < bbar.size(); ++i) bbar(i) = r.normal();
    MatrixXd e = linalg::spd_inv_sqrt(bbar.transpose() * bbar);
    p.ecm.Bf = bbar * e;
    p.ecm.Ef = e;
    for (Eigen::Index i = 0; i < p.ecm.Af.size(); ++i) p.ecm.Af(i) = 0.05 * spread * r.normal();
  }

  auto diff_var = [&](const MatrixXd& scores, Eigen::Index j) {
    if (scores.rows() < 3) return 1.0;
    MatrixXd d = scores.bottomRows(scores.rows() - 1) - scores.topRows(scores.rows() - 1);
    return std::max(column_var(d, j), 1e-4);
  };
  p.V_xi = MatrixXd::Zero(m, m);
  p.V_eta = MatrixXd::Zero(l, l);
  for (int j = 0; j < m; ++j) p.V_xi(j, j) = std::exp(0.2 * spread * r.normal()) / std::sqrt(diff_var(py.scores, j));
  for (int j = 0; j < l; ++j) p.V_eta(j, j) = std::exp(0.2 * spread * r.normal()) / std::sqrt(diff_var(px.scores, j));

  if (config_.ssvs_enabled) {
    SsvsScales sc = config_.ssvs_scales ? *config_.ssvs_scales : uniform_scales(m, l, rd, rf, order, 1.0);
    p.ssvs = make_ssvs_state(sc, config_.prior, true);
    for (SsvsGroup* g : {&p.ssvs.a, &p.ssvs.a2, &p.ssvs.af, &p.ssvs.k, &p.ssvs.phi, &p.ssvs.v_xi, &p.ssvs.v_eta})
      for (Eigen::Index i = 0; i < g->include.size(); ++i) g->include(i) = r.bernoulli(0.5) ? 1 : 0;
  } else {
    SsvsScales sc = uniform_scales(m, l, rd, rf, order, config_.prior.prelim_var);
    PriorConfig flat = config_.prior;
    flat.ssvs_spike_mult = 1.0;
    flat.ssvs_slab_mult = 1.0;
    p.ssvs = make_ssvs_state(sc, flat, true);
  }

  MatrixXd vals(yt_.rows(), m + l);
  vals << py.scores, px.scores;
  state_.factors.values = vals;
  state_.factors.presample = vals.topRows(1).replicate(order, 1);

  const auto nser = static_cast<std::size_t>(m);
  ftune_y_.assign(nser, MhTuner{config_.ftilde_step});
  ttune_y_.assign(nser, MhTuner{config_.wishart_proposal_df});
  ftune_x_.assign(static_cast<std::size_t>(l), MhTuner{config_.ftilde_step});
  ttune_x_.assign(static_cast<std::size_t>(l), MhTuner{config_.wishart_proposal_df});
  shear_y_.assign(static_cast<std::size_t>(m * (m - 1) / 2), MhTuner{config_.shear_step});
  shear_x_.assign(static_cast<std::size_t>(l * (l - 1) / 2), MhTuner{config_.shear_step});
}

void GibbsSampler::sample_factors() {
  const SdSemParams& p = state_.params;
  ssm::StateSpaceForm ss = p.state_space();
  const int dim = ss.state_dim();
  ssm::InitialState init = ssm::InitialState::diffuse(dim, config_.prior.init_kappa);
  MatrixXd z(yt_.rows(), yt_.cols() + xt_.cols());
  if (config_.likelihood_enabled)
    z << yt_, xt_;
  else
    z.setConstant(std::numeric_limits<double>::quiet_NaN());
  MatrixXd states = ssm::ffbs_draw(ss, z, init, rng_);
  state_.factors = ssm::to_factor_path(states, p.m() + p.l(), p.order());
}

void GibbsSampler::sample_loadings() {
  SdSemParams& p = state_.params;
  const MatrixXd g = state_.factors.values.leftCols(p.m());
  const MatrixXd f = state_.factors.values.rightCols(p.l());
  MatrixXd dy = yt_.rowwise() - p.meas.mean_y.transpose();
  MatrixXd dx = xt_.rowwise() - p.meas.mean_x.transpose();
  LoadingProblem py{&g, &dy, &p.meas.obs_var_y, &data_.adjacency, &p.gmrf_y, &p.anchors_y, config_.likelihood_enabled};
  p.meas.H_y = mcmc::sample_loadings(py, p.meas.H_y, rng_);
  LoadingProblem px{&f, &dx, &p.meas.obs_var_x, &data_.adjacency, &p.gmrf_x, &p.anchors_x, config_.likelihood_enabled};
  p.meas.H_x = mcmc::sample_loadings(px, p.meas.H_x, rng_);
  for (int j = 0; j < p.m(); ++j)
    p.gmrf_y[static_cast<std::size_t>(j)].mean_coef = sample_gmrf_mean_coef(
        data_.adjacency, p.gmrf_y[static_cast<std::size_t>(j)], p.meas.H_y.col(j), config_.prior.loading_mean_var, rng_);
  for (int j = 0; j < p.l(); ++j)
    p.gmrf_x[static_cast<std::size_t>(j)].mean_coef = sample_gmrf_mean_coef(
        data_.adjacency, p.gmrf_x[static_cast<std::size_t>(j)], p.meas.H_x.col(j), config_.prior.loading_mean_var, rng_);
}

void GibbsSampler::mh_column(lattice::GmrfSpec& spec, const VectorXd& h, MhTuner& ft, MhTuner& tt) {
  const auto& w = data_.adjacency;
  const PriorConfig& prior = config_.prior;
  double lc = gmrf_hyper_log_target(w, spec, h, prior);

  lattice::GmrfSpec prop = spec;
  for (Eigen::Index i = 0; i < prop.ftilde.size(); ++i) prop.ftilde(i) += ft.scale * rng_.normal();
  double lp = gmrf_hyper_log_target(w, prop, h, prior);
  bool accept = rng_.uniform() < mh_acceptance(lc, lp);
  ft.record(accept);
  if (accept) {
    spec = prop;
    lc = lp;
  }

  // Wishart proposal for T^{-1} centred at the current value.
  const double nu = tt.scale;
  MatrixXd cur = linalg::spd_inverse(spec.cond_cov);
  MatrixXd next = linalg::symmetrize(rng_.wishart(nu, cur / nu));
  prop = spec;
  bool ok = linalg::min_eigenvalue(next) > lattice::kPdTolerance;
  if (ok) {
    prop.cond_cov = linalg::spd_inverse(next);
    lp = gmrf_hyper_log_target(w, prop, h, prior);
    double lq = wishart_log_kernel(cur, nu, next / nu) - wishart_log_kernel(next, nu, cur / nu);
    accept = rng_.uniform() < mh_acceptance(lc, lp, lq);
  } else {
    accept = false;
  }
  tt.record(accept);
  if (accept) spec = prop;
}

void GibbsSampler::adapt(MhTuner& t, bool is_df) {
  if (t.window_proposed < config_.adapt_interval) return;
  double rate = static_cast<double>(t.window_accepted) / static_cast<double>(t.window_proposed);
  if (is_df) {
    if (rate < 0.25) t.scale *= 1.25;
    if (rate > 0.40) t.scale = std::max(t.scale * 0.8, 5.0);
  } else {
    if (rate < 0.25) t.scale *= 0.8;
    if (rate > 0.40) t.scale *= 1.25;
  }
  t.window_proposed = 0;
  t.window_accepted = 0;
}

void GibbsSampler::sample_gmrf_hypers(bool adapting) {
  if (!config_.sample_gmrf_hypers) return;
  SdSemParams& p = state_.params;
  for (int j = 0; j < p.m(); ++j) {
    auto js = static_cast<std::size_t>(j);
    mh_column(p.gmrf_y[js], p.meas.H_y.col(j), ftune_y_[js], ttune_y_[js]);
    if (adapting) {
      adapt(ftune_y_[js], false);
      adapt(ttune_y_[js], true);
    }
  }
  for (int j = 0; j < p.l(); ++j) {
    auto js = static_cast<std::size_t>(j);
    mh_column(p.gmrf_x[js], p.meas.H_x.col(j), ftune_x_[js], ttune_x_[js]);
    if (adapting) {
      adapt(ftune_x_[js], false);
      adapt(ttune_x_[js], true);
    }
  }
}

void GibbsSampler::sample_obs_precisions() {
  SdSemParams& p = state_.params;
  const PriorConfig& pr = config_.prior;
  MatrixXd res = measurement_residuals(p, data_.y, data_.x, state_.factors);
  const int ny = p.meas.n_y();
  for (Eigen::Index j = 0; j < res.cols(); ++j) {
    double n = 0.0, sse = 0.0;
    if (config_.likelihood_enabled) {
      for (Eigen::Index t = 0; t < res.rows(); ++t)
        if (std::isfinite(res(t, j))) {
          n += 1.0;
          sse += res(t, j) * res(t, j);
        }
    }
    double prec = sample_precision(pr.obs_shape, pr.obs_rate, n, sse, rng_);
    double var = 1.0 / std::max(prec, 1e-300);
    if (j < ny)
      p.meas.obs_var_y(j) = var;
    else
      p.meas.obs_var_x(j - ny) = var;
  }
}

namespace {

struct EcmDesign {
  MatrixXd dy;     // T x k, Delta d(t)
  MatrixXd lev;    // T x k, d(t-1)
  MatrixXd lags;   // T x k(p-1), [Delta d(t-1) ... Delta d(t-p+1)]
  MatrixXd lagsf;  // T x l(p-1), predictor part only
};

EcmDesign ecm_design(const ssm::FactorPath& f, int m, int l, int order) {
  const int T = f.length();
  const int k = m + l;
  EcmDesign d;
  d.dy.resize(T, k);
  d.lev.resize(T, k);
  d.lags.resize(T, k * (order - 1));
  d.lagsf.resize(T, l * (order - 1));
  for (int t = 1; t <= T; ++t) {
    VectorXd prev = f.at(t - 1);
    d.dy.row(t - 1) = (f.at(t) - prev).transpose();
    d.lev.row(t - 1) = prev.transpose();
    for (int i = 1; i < order; ++i) {
      VectorXd dd = f.at(t - i) - f.at(t - i - 1);
      d.lags.block(t - 1, (i - 1) * k, 1, k) = dd.transpose();
      d.lagsf.block(t - 1, (i - 1) * l, 1, l) = dd.tail(l).transpose();
    }
  }
  return d;
}

struct Innovations {
  MatrixXd xi, eta;  // T x m, T x l
};

Innovations state_innovations(const SdSemParams& p, const ssm::FactorPath& f) {
  const int m = p.m(), l = p.l();
  EcmDesign d = ecm_design(f, m, l, p.order());
  MatrixXd fl = d.lev.rightCols(l);
  Innovations out;
  out.xi = d.dy.leftCols(m) - d.lev * (p.ecm.A * p.ecm.B().transpose()).transpose() -
           fl * (p.ecm.A2 * p.ecm.Bf.transpose()).transpose() - d.lags * p.k_wide().transpose();
  out.eta = d.dy.rightCols(l) - fl * p.ecm.pi_f().transpose() - d.lagsf * p.phi_wide().transpose();
  return out;
}

// ECM coefficients in the expanded coordinates used by the sampler.
struct EcmBar {
  MatrixXd abar, bbar, a2bar, afbar, bfbar, kwide, phiwide;
};

EcmBar ecm_bar(const SdSemParams& p) {
  return {p.Abar(), p.Bbar(), p.A2bar(), p.Afbar(), p.Bfbar(), p.k_wide(), p.phi_wide()};
}

void set_ecm_bar(SdSemParams& p, const EcmBar& b) {
  const int m = p.m(), l = p.l();
  if (p.ecm.rank_d() > 0) {
    MatrixXd e = linalg::spd_inv_sqrt(b.bbar.transpose() * b.bbar);
    MatrixXd bn = b.bbar * e;
    p.ecm.B1 = bn.topRows(m);
    p.ecm.B2 = bn.bottomRows(l);
    p.ecm.E = e;
    p.ecm.A = b.abar * e.inverse();
  }
  if (p.ecm.rank_f() > 0) {
    MatrixXd e = linalg::spd_inv_sqrt(b.bfbar.transpose() * b.bfbar);
    p.ecm.Bf = b.bfbar * e;
    p.ecm.Ef = e;
    MatrixXd einv = e.inverse();
    p.ecm.Af = b.afbar * einv;
    p.ecm.A2 = b.a2bar * einv;
  }
  for (int i = 0; i + 1 < p.order(); ++i) {
    p.ecm.K[static_cast<std::size_t>(i)] = b.kwide.middleCols(i * (m + l), m + l);
    p.ecm.Phi2[static_cast<std::size_t>(i)] = b.phiwide.middleCols(i * l, l);
  }
}

double normal_kernel(const MatrixXd& x, const MatrixXd& var) {
  return -0.5 * (x.array().square() / var.array()).sum();
}

}  // namespace

ChainState shear_state(const ChainState& state, bool x_panel, int row, int col, double c) {
  const SdSemParams& p = state.params;
  const int m = p.m(), l = p.l(), k = m + l;
  const int size = x_panel ? l : m;
  require(row > col && col >= 0 && row < size, ErrorCode::DimensionMismatch, "shear entry must be strictly lower");
  const int off = x_panel ? m : 0;
  MatrixXd a = MatrixXd::Identity(size, size), ainv = a;
  a(row, col) = c;
  ainv(row, col) = -c;
  MatrixXd s = MatrixXd::Identity(k, k), sinv = s;
  s.block(off, off, size, size) = a;
  sinv.block(off, off, size, size) = ainv;

  ChainState out = state;
  SdSemParams& q = out.params;
  out.factors.values = state.factors.values * s.transpose();
  out.factors.presample = state.factors.presample * s.transpose();
  EcmBar b = ecm_bar(p);
  b.bbar = sinv.transpose() * b.bbar;
  for (int i = 0; i + 1 < p.order(); ++i) {
    auto blk = b.kwide.middleCols(i * k, k);
    blk = blk * sinv;
  }
  if (x_panel) {
    q.meas.H_x = p.meas.H_x * ainv;
    b.bfbar = ainv.transpose() * b.bfbar;
    b.afbar = a * b.afbar;
    for (int i = 0; i + 1 < p.order(); ++i) {
      auto blk = b.phiwide.middleCols(i * l, l);
      blk = a * blk * ainv;
    }
  } else {
    q.meas.H_y = p.meas.H_y * ainv;
    b.abar = a * b.abar;
    b.a2bar = a * b.a2bar;
    b.kwide = a * b.kwide;
  }
  set_ecm_bar(q, b);
  return out;
}

namespace {

double loading_log_prior(const lattice::AdjacencyMatrix& w, const std::vector<lattice::GmrfSpec>& specs,
                         const MatrixXd& h) {
  double lp = 0.0;
  for (Eigen::Index j = 0; j < h.cols(); ++j) {
    const auto& spec = specs[static_cast<std::size_t>(j)];
    MatrixXd tinv = linalg::spd_inverse(spec.cond_cov);
    lattice::JointGmrf g{spec.mean(), lattice::assemble_precision(w, linalg::spd_sqrt(tinv), spec.ftilde)};
    lp += lattice::log_density(g, h.col(j));
  }
  return lp;
}

// Log density of everything a shear move changes, up to terms it leaves fixed.
double shear_log_target(const ChainState& st, const lattice::AdjacencyMatrix& w, const PriorConfig& prior,
                        bool x_panel) {
  const SdSemParams& p = st.params;
  Innovations inn = state_innovations(p, st.factors);
  MatrixXd og = p.V_xi * p.V_xi.transpose(), of = p.V_eta * p.V_eta.transpose();
  double lp = -0.5 * ((inn.xi * og).cwiseProduct(inn.xi)).sum() - 0.5 * ((inn.eta * of).cwiseProduct(inn.eta)).sum();
  lp += x_panel ? loading_log_prior(w, p.gmrf_x, p.meas.H_x) : loading_log_prior(w, p.gmrf_y, p.meas.H_y);
  EcmBar b = ecm_bar(p);
  lp += normal_kernel(b.abar, p.ssvs.a.prior_var()) + normal_kernel(b.a2bar, p.ssvs.a2.prior_var()) +
        normal_kernel(b.afbar, p.ssvs.af.prior_var()) + normal_kernel(b.kwide, p.ssvs.k.prior_var()) +
        normal_kernel(b.phiwide, p.ssvs.phi.prior_var());
  lp -= 0.5 * (b.bbar.squaredNorm() + b.bfbar.squaredNorm()) / prior.coint_space_var;
  lp -= 0.5 * st.factors.presample.squaredNorm() / prior.init_kappa;
  return lp;
}

}  // namespace

void GibbsSampler::sample_ecm_coeffs() {
  SdSemParams& p = state_.params;
  const int m = p.m(), l = p.l(), order = p.order();
  const int rd = p.ecm.rank_d(), rf = p.ecm.rank_f();
  const bool lik = config_.likelihood_enabled;
  EcmDesign d = ecm_design(state_.factors, m, l, order);
  const Eigen::Index T = d.dy.rows();
  MatrixXd fl = d.lev.rightCols(l);
  MatrixXd omega_g = p.V_xi * p.V_xi.transpose();
  MatrixXd omega_f = p.V_eta * p.V_eta.transpose();
  MatrixXd bbar = p.Bbar();
  MatrixXd bfbar = p.Bfbar();

  // Adjustment and short-run coefficients given the cointegrating space.
  const int kw = (m + l) * (order - 1);
  MatrixXd xg(T, rd + rf + kw);
  xg << d.lev * bbar, fl * bfbar, d.lags;
  MatrixXd pv_g(m, rd + rf + kw);
  pv_g << p.ssvs.a.prior_var(), p.ssvs.a2.prior_var(), p.ssvs.k.prior_var();
  MatrixXd cg = sample_regression(d.dy.leftCols(m), xg, omega_g, pv_g, rng_, lik);
  MatrixXd abar = cg.leftCols(rd);
  MatrixXd a2bar = cg.middleCols(rd, rf);
  MatrixXd kwide = cg.rightCols(kw);

  const int pw = l * (order - 1);
  MatrixXd xf(T, rf + pw);
  xf << fl * bfbar, d.lagsf;
  MatrixXd pv_f(l, rf + pw);
  pv_f << p.ssvs.af.prior_var(), p.ssvs.phi.prior_var();
  MatrixXd cf = sample_regression(d.dy.rightCols(l), xf, omega_f, pv_f, rng_, lik);
  MatrixXd afbar = cf.leftCols(rf);
  MatrixXd phiwide = cf.rightCols(pw);

  // Cointegrating spaces given the adjustments: joint Gaussian in
  // (vec Bbar, vec Bfbar), column-major.
  const int nb = (m + l) * rd, nbf = l * rf;
  if (nb + nbf > 0) {
    MatrixXd yg = d.dy.leftCols(m) - d.lags * kwide.transpose();
    MatrixXd yf = d.dy.rightCols(l) - d.lagsf * phiwide.transpose();
    const double cv = config_.prior.coint_space_var;
    MatrixXd prec = MatrixXd::Identity(nb + nbf, nb + nbf) / cv;
    VectorXd lin = VectorXd::Zero(nb + nbf);
    if (lik) {
      MatrixXd sdd = d.lev.transpose() * d.lev;
      MatrixXd sdf = d.lev.transpose() * fl;
      MatrixXd sff = fl.transpose() * fl;
      MatrixXd wg = yg * omega_g;  // rows (Omega y_g(t))'
      MatrixXd wf = yf * omega_f;
      if (nb > 0) {
        prec.topLeftCorner(nb, nb) += linalg::kron(abar.transpose() * omega_g * abar, sdd);
        MatrixXd lb = d.lev.transpose() * wg * abar;
        lin.head(nb) = Eigen::Map<const VectorXd>(lb.data(), nb);
      }
      if (nbf > 0) {
        prec.bottomRightCorner(nbf, nbf) += linalg::kron(a2bar.transpose() * omega_g * a2bar, sff) +
                                            linalg::kron(afbar.transpose() * omega_f * afbar, sff);
        MatrixXd lbf = fl.transpose() * wg * a2bar + fl.transpose() * wf * afbar;
        lin.tail(nbf) = Eigen::Map<const VectorXd>(lbf.data(), nbf);
      }
      if (nb > 0 && nbf > 0) {
        MatrixXd cross = linalg::kron(abar.transpose() * omega_g * a2bar, sdf);
        prec.topRightCorner(nb, nbf) += cross;
        prec.bottomLeftCorner(nbf, nb) += cross.transpose();
      }
    }
    VectorXd b = linalg::draw_canonical(prec, lin, rng_);
    if (nb > 0) bbar = Eigen::Map<const MatrixXd>(b.data(), m + l, rd);
    if (nbf > 0) bfbar = Eigen::Map<const MatrixXd>(b.data() + nb, l, rf);
  }

  set_ecm_bar(p, {abar, bbar, a2bar, afbar, bfbar, kwide, phiwide});
}

namespace {

// Upper-triangular V with Sigma^{-1} = V V': Gamma prior on squared diagonal,
// Gaussian (SSVS) prior on the above-diagonal entries.
MatrixXd sample_precision_factor(const MatrixXd& resid, bool lik, bool full, const MatrixXd& offdiag_var,
                                 double shape, double rate, RandomSource& rng) {
  const Eigen::Index k = resid.cols();
  MatrixXd s = lik ? MatrixXd(resid.transpose() * resid) : MatrixXd::Zero(k, k);
  const double n = lik ? static_cast<double>(resid.rows()) : 0.0;
  MatrixXd v = MatrixXd::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!full || j == 0) {
      double psi2 = rng.gamma(shape + 0.5 * n, rate + 0.5 * s(j, j));
      v(j, j) = std::sqrt(psi2);
      continue;
    }
    MatrixXd prec = s.topLeftCorner(j, j);
    for (Eigen::Index i = 0; i < j; ++i) prec(i, i) += 1.0 / offdiag_var(i, j);
    Eigen::LLT<MatrixXd> llt(prec);
    VectorXd sj = s.col(j).head(j);
    VectorXd sol = llt.solve(sj);
    double rate_j = rate + 0.5 * std::max(s(j, j) - sj.dot(sol), 0.0);
    double psi2 = rng.gamma(shape + 0.5 * n, rate_j);
    double psi = std::sqrt(psi2);
    v(j, j) = psi;
    VectorXd z = rng.normal_vector(j);
    VectorXd eta = -psi * sol + llt.matrixU().solve(z);
    v.col(j).head(j) = eta;
  }
  return v;
}

}  // namespace

void GibbsSampler::sample_state_noise() {
  SdSemParams& p = state_.params;
  Innovations inn = state_innovations(p, state_.factors);
  const MatrixXd& xi = inn.xi;
  const MatrixXd& eta = inn.eta;
  const bool full = config_.state_noise == StateNoiseMode::Full;
  const PriorConfig& pr = config_.prior;
  p.V_xi = sample_precision_factor(xi, config_.likelihood_enabled, full, p.ssvs.v_xi.prior_var(), pr.state_shape,
                                   pr.state_rate, rng_);
  p.V_eta = sample_precision_factor(eta, config_.likelihood_enabled, full, p.ssvs.v_eta.prior_var(), pr.state_shape,
                                    pr.state_rate, rng_);
}

void GibbsSampler::sample_shears(bool adapting) {
  if (config_.shear_step <= 0.0) return;
  for (bool x_panel : {false, true}) {
    auto& tuners = x_panel ? shear_x_ : shear_y_;
    const int size = x_panel ? state_.params.l() : state_.params.m();
    double lc = shear_log_target(state_, data_.adjacency, config_.prior, x_panel);
    std::size_t t = 0;
    for (int row = 1; row < size; ++row)
      for (int col = 0; col < row; ++col, ++t) {
        MhTuner& tu = tuners[t];
        ChainState prop = shear_state(state_, x_panel, row, col, tu.scale * rng_.normal());
        double lp = shear_log_target(prop, data_.adjacency, config_.prior, x_panel);
        bool accept = rng_.uniform() < mh_acceptance(lc, lp);
        tu.record(accept);
        if (accept) {
          state_ = std::move(prop);
          lc = lp;
        }
        if (adapting) adapt(tu, false);
      }
  }
}

void GibbsSampler::sample_ssvs_indicators() {
  if (!config_.ssvs_enabled) return;
  SdSemParams& p = state_.params;
  const double pi = config_.prior.ssvs_inclusion;
  auto update = [&](SsvsGroup& g, const MatrixXd& coef, bool upper_only) {
    for (Eigen::Index i = 0; i < coef.rows(); ++i)
      for (Eigen::Index j = 0; j < coef.cols(); ++j) {
        if (upper_only && j <= i) continue;
        double prob = ssvs_inclusion_probability(coef(i, j), g.spike_var(i, j), g.slab_var(i, j), pi);
        g.include(i, j) = rng_.bernoulli(prob) ? 1 : 0;
      }
  };
  update(p.ssvs.a, p.Abar(), false);
  update(p.ssvs.a2, p.A2bar(), false);
  update(p.ssvs.af, p.Afbar(), false);
  update(p.ssvs.k, p.k_wide(), false);
  update(p.ssvs.phi, p.phi_wide(), false);
  if (config_.state_noise == StateNoiseMode::Full) {
    update(p.ssvs.v_xi, p.V_xi, true);
    update(p.ssvs.v_eta, p.V_eta, true);
  }
}

void GibbsSampler::sample_means() {
  SdSemParams& p = state_.params;
  const double prior_prec = 1.0 / config_.prior.mean_var;
  auto update = [&](const MatrixXd& zt, const MatrixXd& fac, const MatrixXd& h, const VectorXd& var, VectorXd& mean) {
    MatrixXd fit = fac * h.transpose();
    for (Eigen::Index j = 0; j < zt.cols(); ++j) {
      double n = 0.0, s = 0.0;
      if (config_.likelihood_enabled)
        for (Eigen::Index t = 0; t < zt.rows(); ++t)
          if (std::isfinite(zt(t, j))) {
            n += 1.0;
            s += zt(t, j) - fit(t, j);
          }
      double prec = n / var(j) + prior_prec;
      mean(j) = (s / var(j)) / prec + rng_.normal() / std::sqrt(prec);
    }
  };
  update(yt_, state_.factors.values.leftCols(p.m()), p.meas.H_y, p.meas.obs_var_y, p.meas.mean_y);
  update(xt_, state_.factors.values.rightCols(p.l()), p.meas.H_x, p.meas.obs_var_x, p.meas.mean_x);
}

void GibbsSampler::sweep(bool adapting) {
  sample_factors();
  sample_loadings();
  sample_gmrf_hypers(adapting);
  sample_obs_precisions();
  sample_ecm_coeffs();
  sample_state_noise();
  sample_shears(adapting);
  sample_ssvs_indicators();
  sample_means();
  ++sweeps_;
  const SdSemParams& p = state_.params;
  bool finite = p.meas.H_y.allFinite() && p.meas.H_x.allFinite() && p.meas.obs_var_y.allFinite() &&
                p.meas.obs_var_x.allFinite() && p.V_xi.allFinite() && p.V_eta.allFinite() &&
                state_.factors.values.allFinite() && p.ecm.A.allFinite() && p.ecm.Af.allFinite();
  require(finite, ErrorCode::ChainDiverged,
          "non-finite state after sweep " + std::to_string(sweeps_) + " of chain " + std::to_string(chain_id_));
}

double GibbsSampler::current_deviance() const {
  return deviance(state_.params, data_.y, data_.x, state_.factors);
}

std::map<std::string, double> GibbsSampler::acceptance_rates() const {
  std::map<std::string, double> out;
  auto rate = [](const MhTuner& t) {
    return t.proposed ? static_cast<double>(t.accepted) / static_cast<double>(t.proposed) : 0.0;
  };
  for (std::size_t j = 0; j < ftune_y_.size(); ++j) {
    out["gmrf_y_ftilde." + std::to_string(j)] = rate(ftune_y_[j]);
    out["gmrf_y_tinv." + std::to_string(j)] = rate(ttune_y_[j]);
  }
  for (std::size_t j = 0; j < ftune_x_.size(); ++j) {
    out["gmrf_x_ftilde." + std::to_string(j)] = rate(ftune_x_[j]);
    out["gmrf_x_tinv." + std::to_string(j)] = rate(ttune_x_[j]);
  }
  for (std::size_t j = 0; j < shear_y_.size(); ++j) out["shear_y." + std::to_string(j)] = rate(shear_y_[j]);
  for (std::size_t j = 0; j < shear_x_.size(); ++j) out["shear_x." + std::to_string(j)] = rate(shear_x_[j]);
  return out;
}

PosteriorDraws run_chain(const data::PanelDataset& data, const McmcConfig& config, int chain_id) {
  require(config.iterations >= 0 && config.burn_in >= 0 && config.thin >= 1, ErrorCode::ConfigError,
          "iterations, burn-in and thinning must be non-negative (thinning >= 1)");
  GibbsSampler sampler(data, config, chain_id);
  sampler.initialize();
  PosteriorDraws out;
  out.meta.iterations = config.iterations;
  out.meta.burn_in = config.burn_in;
  out.meta.thin = config.thin;
  out.meta.seed = config.seed;
  out.meta.chain_id = chain_id;
  const int keep = config.retained();
  out.params.reserve(static_cast<std::size_t>(keep));
  out.factors.reserve(static_cast<std::size_t>(keep));
  for (int it = 0; it < config.iterations; ++it) {
    sampler.sweep(it < config.burn_in);
    if (it >= config.burn_in && (it - config.burn_in + 1) % config.thin == 0) {
      out.params.push_back(sampler.state().params);
      out.factors.push_back(sampler.state().factors);
      double dev = sampler.current_deviance();
      require(std::isfinite(dev), ErrorCode::ChainDiverged, "non-finite deviance");
      out.deviance.push_back(dev);
    }
  }
  out.meta.acceptance = sampler.acceptance_rates();
  return out;
}

SsvsScales preliminary_run(const data::PanelDataset& data, const McmcConfig& config) {
  McmcConfig c = config;
  c.ssvs_enabled = false;
  c.iterations = config.prelim_iterations;
  c.burn_in = config.prelim_iterations / 2;
  c.thin = 1;
  const int m = c.m, l = c.l, rd = c.effective_rank_d(), rf = c.effective_rank_f();
  SsvsScales var = uniform_scales(m, l, rd, rf, c.order, 0.0);
  if (c.iterations - c.burn_in < 2) return ssvs_scales_from_variances(uniform_scales(m, l, rd, rf, c.order, 1.0));
  PosteriorDraws d = run_chain(data, c, 1000);
  auto accumulate = [&](auto getter, MatrixXd& target) {
    MatrixXd s1 = MatrixXd::Zero(target.rows(), target.cols());
    MatrixXd s2 = s1;
    for (const auto& p : d.params) {
      MatrixXd v = getter(p);
      s1 += v;
      s2 += v.cwiseProduct(v);
    }
    const double n = static_cast<double>(d.params.size());
    target = ((s2 - s1.cwiseProduct(s1) / n) / (n - 1.0)).cwiseMax(0.0);
  };
  accumulate([](const SdSemParams& p) { return p.Abar(); }, var.a);
  accumulate([](const SdSemParams& p) { return p.A2bar(); }, var.a2);
  accumulate([](const SdSemParams& p) { return p.Afbar(); }, var.af);
  accumulate([](const SdSemParams& p) { return p.k_wide(); }, var.k);
  accumulate([](const SdSemParams& p) { return p.phi_wide(); }, var.phi);
  accumulate([](const SdSemParams& p) { return p.V_xi; }, var.v_xi);
  accumulate([](const SdSemParams& p) { return p.V_eta; }, var.v_eta);
  for (MatrixXd* mm : {&var.a, &var.a2, &var.af, &var.k, &var.phi, &var.v_xi, &var.v_eta})
    require(mm->allFinite(), ErrorCode::ChainDiverged, "preliminary run produced non-finite variances");
  // In diagonal mode the off-diagonal factor entries never move; give them a
  // unit scale so a later full-mode run has a usable prior.
  if (c.state_noise == StateNoiseMode::Diagonal) {
    var.v_xi.setOnes();
    var.v_eta.setOnes();
  }
  return ssvs_scales_from_variances(var);
}

std::vector<PosteriorDraws> run_chains(const data::PanelDataset& data, McmcConfig config) {
  require(config.chains >= 1, ErrorCode::ConfigError, "at least one chain required");
  if (config.ssvs_enabled && !config.ssvs_scales) config.ssvs_scales = preliminary_run(data, config);
  std::vector<PosteriorDraws> out(static_cast<std::size_t>(config.chains));
  std::vector<std::exception_ptr> errors(out.size());
  std::vector<std::thread> workers;
  for (int c = 0; c < config.chains; ++c) {
    workers.emplace_back([&, c] {
      try {
        out[static_cast<std::size_t>(c)] = run_chain(data, config, c);
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  require(chains.size() >= 2, ErrorCode::EmptyChain, "Gelman-Rubin needs at least two chains");
  const std::size_t n = chains.front().size();
  require(n >= 2, ErrorCode::EmptyChain, "Gelman-Rubin needs at least two draws per chain");
  for (const auto& c : chains) require(c.size() == n, ErrorCode::DimensionMismatch, "chains differ in length");
  const double M = static_cast<double>(chains.size());
  const double nn = static_cast<double>(n);
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    double mu = 0.0;
    for (double v : c) mu += v;
    mu /= nn;
    double s = 0.0;
    for (double v : c) s += (v - mu) * (v - mu);
    means.push_back(mu);
    vars.push_back(s / (nn - 1.0));
  }
  double grand = 0.0;
  for (double mu : means) grand += mu;
  grand /= M;
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= nn / (M - 1.0);
  double w = 0.0;
  for (double v : vars) w += v;
  w /= M;
  require(w > 0.0, ErrorCode::ZeroWithinVariance, "within-chain variance is zero");
  return std::sqrt(((nn - 1.0) / nn * w + b / nn) / w);
}

std::vector<std::pair<std::string, double>> scalar_summaries(const SdSemParams& p) {
  std::vector<std::pair<std::string, double>> out;
  auto put_matrix = [&](const std::string& name, const MatrixXd& a, int block) {
    for (Eigen::Index i = 0; i < a.size(); ++i)
      out.emplace_back(name + "." + std::to_string(block) + "." + std::to_string(i), a(i));
  };
  for (Eigen::Index j = 0; j < p.meas.H_y.cols(); ++j)
    for (Eigen::Index i = 0; i < p.meas.H_y.rows(); ++i)
      if (is_free_loading(static_cast<int>(i), static_cast<int>(j), p.anchors_y))
        out.emplace_back("loadings_y." + std::to_string(j) + "." + std::to_string(i), p.meas.H_y(i, j));
  for (Eigen::Index j = 0; j < p.meas.H_x.cols(); ++j)
    for (Eigen::Index i = 0; i < p.meas.H_x.rows(); ++i)
      if (is_free_loading(static_cast<int>(i), static_cast<int>(j), p.anchors_x))
        out.emplace_back("loadings_x." + std::to_string(j) + "." + std::to_string(i), p.meas.H_x(i, j));
  put_matrix("obs_prec_y", p.meas.obs_var_y.cwiseInverse(), 0);
  put_matrix("obs_prec_x", p.meas.obs_var_x.cwiseInverse(), 0);
  for (std::size_t j = 0; j < p.gmrf_y.size(); ++j) {
    put_matrix("gmrf_y_tinv", linalg::spd_inverse(p.gmrf_y[j].cond_cov), static_cast<int>(j));
    put_matrix("gmrf_y_ftilde", p.gmrf_y[j].ftilde, static_cast<int>(j));
    put_matrix("gmrf_y_beta", p.gmrf_y[j].mean_coef, static_cast<int>(j));
  }
  for (std::size_t j = 0; j < p.gmrf_x.size(); ++j) {
    put_matrix("gmrf_x_tinv", linalg::spd_inverse(p.gmrf_x[j].cond_cov), static_cast<int>(j));
    put_matrix("gmrf_x_ftilde", p.gmrf_x[j].ftilde, static_cast<int>(j));
    put_matrix("gmrf_x_beta", p.gmrf_x[j].mean_coef, static_cast<int>(j));
  }
  put_matrix("pi_gd", p.ecm.pi_gd(), 0);
  put_matrix("pi_gf", p.ecm.A2 * p.ecm.Bf.transpose(), 0);
  put_matrix("pi_f", p.ecm.pi_f(), 0);
  for (std::size_t i = 0; i < p.ecm.K.size(); ++i) {
    put_matrix("ecm_K", p.ecm.K[i], static_cast<int>(i));
    put_matrix("ecm_Phi2", p.ecm.Phi2[i], static_cast<int>(i));
  }
  put_matrix("state_cov_g", p.state_cov_g(), 0);
  put_matrix("state_cov_f", p.state_cov_f(), 0);
  put_matrix("mean_y", p.meas.mean_y, 0);
  put_matrix("mean_x", p.meas.mean_x, 0);
  return out;
}

}  // namespace sdsem::mcmc
