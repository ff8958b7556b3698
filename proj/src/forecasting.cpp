#include "sdsem/forecasting.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "sdsem/draws_io.hpp"
#include "sdsem/errors.hpp"
#include "sdsem/linalg.hpp"

namespace sdsem::forecast {

namespace {

MatrixXd noise_factor(const MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(linalg::symmetrize(cov));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

bool within_bound(const MatrixXd& y, double bound) { return y.allFinite() && y.cwiseAbs().maxCoeff() <= bound; }

void check_chains(const std::vector<mcmc::PosteriorDraws>& chains) {
  std::size_t n = 0;
  for (const auto& c : chains) {
    require(c.factors.size() == c.params.size(), ErrorCode::EmptyChain, "draws lack factor paths");
    n += c.size();
  }
  require(n > 0, ErrorCode::EmptyChain, "no retained draws to forecast from");
}

}  // namespace

void ForecastResult::summarize(double lvl) {
  level = lvl;
  if (draws.empty()) {
    median = lower = upper = MatrixXd();
    return;
  }
  const Eigen::Index rows = draws.front().rows(), cols = draws.front().cols();
  median.resize(rows, cols);
  lower.resize(rows, cols);
  upper.resize(rows, cols);
  std::vector<double> cell(draws.size());
  const double a = 0.5 * (1.0 - lvl);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) {
      for (std::size_t d = 0; d < draws.size(); ++d) cell[d] = draws[d](i, k);
      std::sort(cell.begin(), cell.end());
      median(i, k) = linalg::quantile(cell, 0.5);
      lower(i, k) = linalg::quantile(cell, a);
      upper(i, k) = linalg::quantile(cell, 1.0 - a);
    }
}

std::pair<VectorXd, MatrixXd> state_moments(const MatrixXd& transition, const MatrixXd& state_cov,
                                            const VectorXd& alpha, int steps) {
  VectorXd mean = alpha;
  MatrixXd cov = MatrixXd::Zero(alpha.size(), alpha.size());
  for (int j = 0; j < steps; ++j) {
    mean = transition * mean;
    cov = transition * cov * transition.transpose() + state_cov;
  }
  return {mean, cov};
}

ForecastResult forecast_unconditional(const std::vector<mcmc::PosteriorDraws>& chains, const ForecastOptions& opt,
                                      RandomSource& rng) {
  require(opt.horizon >= 1 && opt.replicates >= 1, ErrorCode::ConfigError, "horizon and replicates must be positive");
  check_chains(chains);
  ForecastResult out;
  out.horizon = opt.horizon;
  for (const auto& c : chains)
    for (std::size_t d = 0; d < c.size(); ++d) {
      const SdSemParams& p = c.params[d];
      ssm::StateSpaceForm ss = p.state_space();
      const int m = p.m();
      const MatrixXd shock = noise_factor(ss.state_noise_cov);
      const VectorXd sd = p.meas.obs_var_y.cwiseSqrt();
      const VectorXd start = ssm::companion_state(c.factors[d], c.factors[d].length(), p.order());
      for (int r = 0; r < opt.replicates; ++r) {
        MatrixXd y(p.meas.n_y(), opt.horizon);
        VectorXd a = start;
        for (int k = 0; k < opt.horizon; ++k) {
          a = ss.transition * a + ss.input * (shock * rng.normal_vector(shock.cols()));
          VectorXd col = p.meas.mean_y + p.meas.H_y * a.head(m);
          for (Eigen::Index i = 0; i < col.size(); ++i) col(i) += sd(i) * rng.normal();
          y.col(k) = col;
        }
        if (within_bound(y, opt.explosive_bound))
          out.draws.push_back(std::move(y));
        else
          ++out.n_explosive;
      }
    }
  require(!out.draws.empty(), ErrorCode::NonFiniteForecast, "every forecast draw was explosive");
  out.summarize(opt.level);
  return out;
}

MatrixXd recover_predictor_factors(const MatrixXd& h_x, const VectorXd& mean_x, const MatrixXd& x_future) {
  require(h_x.rows() == x_future.rows() && mean_x.size() == h_x.rows(), ErrorCode::DimensionMismatch,
          "future predictor panel does not match the loadings");
  require(linalg::has_full_column_rank(h_x), ErrorCode::RankDeficientLoadings, "predictor loadings rank deficient");
  return linalg::pinv(h_x) * (x_future.colwise() - mean_x);
}

ForecastResult forecast_conditional(const std::vector<mcmc::PosteriorDraws>& chains, const MatrixXd& x_future,
                                    const ForecastOptions& opt, RandomSource& rng) {
  require(opt.replicates >= 1, ErrorCode::ConfigError, "replicates must be positive");
  require(x_future.cols() >= 1 && x_future.allFinite(), ErrorCode::DimensionMismatch,
          "future predictor panel must be complete");
  check_chains(chains);
  ForecastResult out;
  out.horizon = static_cast<int>(x_future.cols());
  const int K = out.horizon;
  for (const auto& c : chains)
    for (std::size_t d = 0; d < c.size(); ++d) {
      const SdSemParams& p = c.params[d];
      MatrixXd f_future;
      try {
        f_future = recover_predictor_factors(p.meas.H_x, p.meas.mean_x, x_future);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::RankDeficientLoadings) throw;
        ++out.n_skipped;
        continue;
      }
      const ssm::FactorDynamics dyn = p.dynamics();
      const int m = p.m();
      const int T = c.factors[d].length();
      const MatrixXd shock = noise_factor(dyn.state_cov_g);
      const VectorXd sd = p.meas.obs_var_y.cwiseSqrt();
      const int lags = dyn.order();
      for (int r = 0; r < opt.replicates; ++r) {
        // g(t) and f(t) for t = T - lags + 1 .. T + K, offset so index lags - 1 is time T.
        MatrixXd g(m, lags + K), f(p.l(), lags + K);
        for (int j = 0; j < lags; ++j) {
          VectorXd dj = c.factors[d].at(T - lags + 1 + j);
          g.col(j) = dj.head(m);
          f.col(j) = dj.tail(p.l());
        }
        f.rightCols(K) = f_future;
        MatrixXd y(p.meas.n_y(), K);
        for (int k = 0; k < K; ++k) {
          const int now = lags + k;
          VectorXd gk = VectorXd::Zero(m);
          for (std::size_t i = 0; i < dyn.C.size(); ++i) gk += dyn.C[i] * g.col(now - 1 - static_cast<int>(i));
          for (std::size_t i = 0; i < dyn.D.size(); ++i) gk += dyn.D[i] * f.col(now - 1 - static_cast<int>(i));
          if (!opt.deterministic) gk += shock * rng.normal_vector(m);
          g.col(now) = gk;
          VectorXd col = p.meas.mean_y + p.meas.H_y * gk;
          if (!opt.deterministic)
            for (Eigen::Index i = 0; i < col.size(); ++i) col(i) += sd(i) * rng.normal();
          y.col(k) = col;
        }
        if (within_bound(y, opt.explosive_bound))
          out.draws.push_back(std::move(y));
        else
          ++out.n_explosive;
      }
    }
  require(!out.draws.empty(), ErrorCode::RankDeficientLoadings,
          "no usable draws for conditional forecasting (rank-deficient or explosive)");
  out.summarize(opt.level);
  return out;
}

ForecastMetrics metrics_from_cells(const MatrixXd& point, const MatrixXd& truth, const MatrixXd& lower,
                                   const MatrixXd& upper) {
  require(point.rows() == truth.rows() && point.cols() == truth.cols() && lower.rows() == truth.rows() &&
              lower.cols() == truth.cols() && upper.rows() == truth.rows() && upper.cols() == truth.cols(),
          ErrorCode::AlignmentMismatch, "forecast grid and truth differ in shape");
  ForecastMetrics m;
  double se = 0.0, ae = 0.0, width = 0.0;
  std::size_t inside = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    double e = point(i) - truth(i);
    se += e * e;
    ae += std::abs(e);
    width += upper(i) - lower(i);
    if (truth(i) >= lower(i) && truth(i) <= upper(i)) ++inside;
  }
  m.cells = static_cast<std::size_t>(truth.size());
  require(m.cells > 0, ErrorCode::AlignmentMismatch, "empty forecast grid");
  const double n = static_cast<double>(m.cells);
  m.rmse = std::sqrt(se / n);
  m.mae = ae / n;
  m.cp = static_cast<double>(inside) / n;
  m.aiw = width / n;
  require(m.rmse + 1e-12 * std::max(1.0, m.rmse) >= m.mae, ErrorCode::NonFiniteForecast, "RMSE below MAE");
  return m;
}

ForecastMetrics forecast_metrics(const ForecastResult& result, const MatrixXd& truth,
                                 const std::vector<data::TransformRecord>& transforms, std::size_t first_period) {
  require(truth.rows() == result.median.rows() && truth.cols() == result.median.cols(), ErrorCode::AlignmentMismatch,
          "truth panel does not match the forecast grid");
  if (transforms.empty()) return metrics_from_cells(result.median, truth, result.lower, result.upper);
  const auto nv = static_cast<Eigen::Index>(transforms.size());
  MatrixXd pt = result.median, lo = result.lower, hi = result.upper, tr = truth;
  for (Eigen::Index i = 0; i < truth.rows(); ++i) {
    const auto& rec = transforms[static_cast<std::size_t>(i % nv)];
    for (Eigen::Index k = 0; k < truth.cols(); ++k) {
      std::size_t period = first_period + static_cast<std::size_t>(k);
      pt(i, k) = rec.invert(pt(i, k), period);
      lo(i, k) = rec.invert(lo(i, k), period);
      hi(i, k) = rec.invert(hi(i, k), period);
      tr(i, k) = rec.invert(tr(i, k), period);
    }
  }
  return metrics_from_cells(pt, tr, lo, hi);
}

std::string forecast_csv(const ForecastResult& result, const data::PanelDataset& layout) {
  std::ostringstream os;
  os << "site,step,median,lower,upper,n_draws\n";
  const int nv = std::max(1, layout.n_y_vars());
  for (Eigen::Index i = 0; i < result.median.rows(); ++i) {
    std::string site = layout.sites.at(static_cast<std::size_t>(i / nv));
    if (nv > 1) site += ":" + layout.y_vars[static_cast<std::size_t>(i % nv)];
    for (Eigen::Index k = 0; k < result.median.cols(); ++k)
      os << site << ',' << (k + 1) << ',' << io::format_double(result.median(i, k)) << ','
         << io::format_double(result.lower(i, k)) << ',' << io::format_double(result.upper(i, k)) << ','
         << result.n_draws() << '\n';
  }
  return os.str();
}

std::string metrics_json(const ForecastMetrics& m, const ForecastResult& result) {
  nlohmann::json j;
  j["rmse"] = m.rmse;
  j["mae"] = m.mae;
  j["cp"] = m.cp;
  j["aiw"] = m.aiw;
  j["cells"] = m.cells;
  j["level"] = result.level;
  j["n_draws"] = result.n_draws();
  j["n_explosive"] = result.n_explosive;
  j["n_skipped"] = result.n_skipped;
  return j.dump(2) + "\n";
}

}  // namespace sdsem::forecast
