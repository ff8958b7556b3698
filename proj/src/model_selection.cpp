#include "sdsem/model_selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "sdsem/diagnostics.hpp"
#include "sdsem/draws_io.hpp"
#include "sdsem/errors.hpp"

namespace sdsem::select {

double pmcc_value(double goodness, double penalty, double zeta) {
  if (std::isinf(zeta)) return goodness + penalty;
  return zeta / (zeta + 1.0) * goodness + penalty;
}

ReplicateMoments::ReplicateMoments(Eigen::Index rows, Eigen::Index cols)
    : mean_(MatrixXd::Zero(rows, cols)), m2_(MatrixXd::Zero(rows, cols)) {}

void ReplicateMoments::add(const MatrixXd& r) {
  require(r.rows() == mean_.rows() && r.cols() == mean_.cols(), ErrorCode::DimensionMismatch, "replicate size");
  ++n_;
  MatrixXd delta = r - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta.cwiseProduct(r - mean_);
}

MatrixXd ReplicateMoments::mean() const { return mean_; }

MatrixXd ReplicateMoments::variance() const {
  if (n_ < 2) return MatrixXd::Zero(m2_.rows(), m2_.cols());
  return m2_ / static_cast<double>(n_ - 1);
}

PmccResult pmcc_from_moments(const ReplicateMoments& moments, const MatrixXd& observed, double zeta) {
  require(moments.count() > 0, ErrorCode::EmptyChain, "no replicates");
  PmccResult r;
  MatrixXd mean = moments.mean();
  require(mean.rows() == observed.rows() && mean.cols() == observed.cols(), ErrorCode::DimensionMismatch,
          "replicates and observed panel differ in shape");
  double g = 0.0;
  for (Eigen::Index i = 0; i < observed.size(); ++i)
    if (std::isfinite(observed(i))) g += (observed(i) - mean(i)) * (observed(i) - mean(i));
  r.goodness = g;
  r.penalty = moments.variance().sum();
  r.zeta = zeta;
  r.pmcc = pmcc_value(r.goodness, r.penalty, zeta);
  return r;
}

PmccResult pmcc(const std::vector<mcmc::PosteriorDraws>& chains, const MatrixXd& observed, RandomSource& rng,
                double zeta) {
  ReplicateMoments mom(observed.rows(), observed.cols());
  for (const auto& c : chains) {
    require(c.factors.size() == c.params.size(), ErrorCode::EmptyChain, "draws lack factor paths");
    for (std::size_t d = 0; d < c.size(); ++d) {
      const SdSemParams& p = c.params[d];
      const MatrixXd g = c.factors[d].values.leftCols(p.m());
      MatrixXd rep = (g * p.meas.H_y.transpose()).transpose();
      rep.colwise() += p.meas.mean_y;
      for (Eigen::Index i = 0; i < rep.rows(); ++i) {
        const double sd = std::sqrt(p.meas.obs_var_y(i));
        for (Eigen::Index t = 0; t < rep.cols(); ++t) rep(i, t) += sd * rng.normal();
      }
      mom.add(rep);
    }
  }
  require(mom.count() > 0, ErrorCode::EmptyChain, "no retained draws for PMCC");
  PmccResult r = pmcc_from_moments(mom, observed, zeta);
  if (!chains.empty() && !chains.front().empty()) {
    r.m = chains.front().params.front().m();
    r.l = chains.front().params.front().l();
  }
  return r;
}

std::vector<PmccResult> grid_search(const data::PanelDataset& data, const std::vector<std::pair<int, int>>& grid,
                                    const mcmc::McmcConfig& base, double zeta,
                                    std::vector<std::vector<mcmc::PosteriorDraws>>* fits) {
  require(!grid.empty(), ErrorCode::ConfigError, "empty model grid");
  std::vector<PmccResult> out;
  if (fits) fits->assign(grid.size(), {});
  std::size_t index = 0;
  for (const auto& [m, l] : grid) {
    PmccResult r;
    auto t0 = std::chrono::steady_clock::now();
    try {
      mcmc::McmcConfig c = base;
      c.m = m;
      c.l = l;
      c.rank_d = -1;
      c.rank_f = -1;
      c.anchors_y.clear();
      c.anchors_x.clear();
      c.ssvs_scales.reset();
      auto chains = mcmc::run_chains(data, c);
      RandomSource rng = RandomSource::stream(c.seed, 9000 + static_cast<std::uint64_t>(m * 100 + l));
      r = pmcc(chains, data.y, rng, zeta);
      if (chains.size() >= 2 && chains.front().size() >= 2) {
        try {
          r.converged = diag::convergence_report(chains).converged();
        } catch (const Error&) {
          r.converged = false;
        }
      }
      if (fits) (*fits)[index] = std::move(chains);
    } catch (const Error& e) {
      r.failed = true;
      r.error = e.what();
    }
    r.m = m;
    r.l = l;
    r.zeta = zeta;
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(r);
    ++index;
  }
  std::stable_sort(out.begin(), out.end(), [](const PmccResult& a, const PmccResult& b) {
    if (a.failed != b.failed) return !a.failed;
    return a.pmcc < b.pmcc;
  });
  return out;
}

std::string grid_csv(const std::vector<PmccResult>& results) {
  std::ostringstream os;
  os << "m,l,G,P,PMCC,runtime,convergence\n";
  for (const auto& r : results) {
    os << r.m << ',' << r.l << ',';
    if (r.failed)
      os << "nan,nan,nan";
    else
      os << io::format_double(r.goodness) << ',' << io::format_double(r.penalty) << ',' << io::format_double(r.pmcc);
    os << ',' << io::format_double(r.runtime_s) << ',' << (r.failed ? "failed" : (r.converged ? "converged" : "not_converged"))
       << '\n';
  }
  return os.str();
}

}  // namespace sdsem::select
