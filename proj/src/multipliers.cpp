#include "sdsem/multipliers.hpp"

#include <algorithm>
#include <sstream>
#include <thread>

#include "sdsem/draws_io.hpp"
#include "sdsem/errors.hpp"
#include "sdsem/linalg.hpp"

namespace sdsem::irf {

CompanionJQB build_jqb(const ssm::FactorDynamics& dyn) {
  dyn.validate();
  const int m = dyn.m(), l = dyn.l();
  const int p = std::max<int>(1, static_cast<int>(dyn.C.size()));
  const int s = std::max<int>(1, static_cast<int>(dyn.D.size()));
  const int dim = m * p + l * s;
  CompanionJQB out;
  out.transition = MatrixXd::Zero(dim, dim);
  for (std::size_t i = 0; i < dyn.C.size(); ++i) {
    require(dyn.C[i].rows() == m && dyn.C[i].cols() == m, ErrorCode::DimensionMismatch, "C block shape");
    out.transition.block(0, static_cast<Eigen::Index>(i) * m, m, m) = dyn.C[i];
  }
  for (std::size_t i = 0; i < dyn.D.size(); ++i) {
    require(dyn.D[i].rows() == m && dyn.D[i].cols() == l, ErrorCode::DimensionMismatch, "D block shape");
    out.transition.block(0, m * p + static_cast<Eigen::Index>(i) * l, m, l) = dyn.D[i];
  }
  for (int i = 1; i < p; ++i) out.transition.block(i * m, (i - 1) * m, m, m).setIdentity();
  for (int i = 1; i < s; ++i) out.transition.block(m * p + i * l, m * p + (i - 1) * l, l, l).setIdentity();
  out.selector = MatrixXd::Zero(m, dim);
  out.selector.leftCols(m).setIdentity();
  out.input = MatrixXd::Zero(dim, l);
  out.input.block(m * p, 0, l, l).setIdentity();
  return out;
}

std::vector<MatrixXd> impulse_response(const CompanionJQB& jqb, const MatrixXd& h_y, const MatrixXd& h_x,
                                       int horizon) {
  require(horizon >= 0, ErrorCode::DimensionMismatch, "horizon must be nonnegative");
  require(h_y.cols() == jqb.selector.rows() && h_x.cols() == jqb.input.cols(), ErrorCode::DimensionMismatch,
          "loadings do not match the companion system");
  require(linalg::has_full_column_rank(h_x), ErrorCode::RankDeficientLoadings, "predictor loadings rank deficient");
  const MatrixXd hx_pinv = linalg::pinv(h_x);
  std::vector<MatrixXd> out;
  out.reserve(static_cast<std::size_t>(horizon) + 1);
  MatrixXd qb = jqb.input;
  for (int k = 0; k <= horizon; ++k) {
    out.push_back(h_y * (jqb.selector * qb) * hx_pinv);
    qb = jqb.transition * qb;
  }
  return out;
}

std::vector<MatrixXd> impulse_response(const SdSemParams& params, int horizon) {
  return impulse_response(build_jqb(params.dynamics()), params.meas.H_y, params.meas.H_x, horizon);
}

MultiplierSeries multiplier_posterior(const std::vector<mcmc::PosteriorDraws>& chains, int horizon) {
  std::vector<const SdSemParams*> all;
  for (const auto& c : chains)
    for (const auto& p : c.params) all.push_back(&p);
  require(!all.empty(), ErrorCode::EmptyChain, "no draws for multiplier analysis");

  MultiplierSeries out;
  out.horizon = horizon;
  out.draws.resize(all.size());
  const std::size_t workers = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t d = w; d < all.size(); d += workers) out.draws[d] = impulse_response(*all[d], horizon);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const Eigen::Index rows = out.draws[0][0].rows(), cols = out.draws[0][0].cols();
  std::vector<double> cell(all.size());
  for (int k = 0; k <= horizon; ++k) {
    MatrixXd mean(rows, cols), p16(rows, cols), p84(rows, cols), p05(rows, cols), p95(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        double sum = 0.0;
        for (std::size_t d = 0; d < all.size(); ++d) {
          cell[d] = out.draws[d][static_cast<std::size_t>(k)](i, j);
          sum += cell[d];
        }
        std::sort(cell.begin(), cell.end());
        mean(i, j) = sum / static_cast<double>(all.size());
        p16(i, j) = linalg::quantile(cell, 0.16);
        p84(i, j) = linalg::quantile(cell, 0.84);
        p05(i, j) = linalg::quantile(cell, 0.05);
        p95(i, j) = linalg::quantile(cell, 0.95);
      }
    out.mean.push_back(std::move(mean));
    out.p16.push_back(std::move(p16));
    out.p84.push_back(std::move(p84));
    out.p05.push_back(std::move(p05));
    out.p95.push_back(std::move(p95));
  }
  return out;
}

MultiplierSeries multiplier_posterior(const mcmc::PosteriorDraws& chain, int horizon) {
  return multiplier_posterior(std::vector<mcmc::PosteriorDraws>{chain}, horizon);
}

std::string irf_csv(const MultiplierSeries& s, const data::PanelDataset& layout) {
  std::ostringstream os;
  os << "response_site,shock_variable,shock_site,horizon,mean,p16,p84,p05,p95\n";
  const int ny = std::max(1, layout.n_y_vars());
  const int nx = std::max(1, static_cast<int>(layout.x_vars.size()));
  for (int k = 0; k <= s.horizon; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    for (Eigen::Index i = 0; i < s.mean[ks].rows(); ++i) {
      std::string resp = layout.sites.at(static_cast<std::size_t>(i / ny));
      if (ny > 1) resp += ":" + layout.y_vars[static_cast<std::size_t>(i % ny)];
      for (Eigen::Index j = 0; j < s.mean[ks].cols(); ++j)
        os << resp << ',' << layout.x_vars.at(static_cast<std::size_t>(j % nx)) << ','
           << layout.sites.at(static_cast<std::size_t>(j / nx)) << ',' << k << ','
           << io::format_double(s.mean[ks](i, j)) << ',' << io::format_double(s.p16[ks](i, j)) << ','
           << io::format_double(s.p84[ks](i, j)) << ',' << io::format_double(s.p05[ks](i, j)) << ','
           << io::format_double(s.p95[ks](i, j)) << '\n';
    }
  }
  return os.str();
}

}  // namespace sdsem::irf
