#include "sdsem/ecm.hpp"

#include <algorithm>
#include <cstdio>

#include "sdsem/errors.hpp"

namespace sdsem::ecm {

MatrixXd EcmBlocks::B() const {
  MatrixXd b(m + l, B1.cols());
  b << B1, B2;
  return b;
}

EcmBlocks EcmBlocks::zeros(int m, int l, int rank_d, int rank_f, int order) {
  EcmBlocks e;
  e.m = m;
  e.l = l;
  e.A = MatrixXd::Zero(m, rank_d);
  e.B1 = MatrixXd::Zero(m, rank_d);
  e.B2 = MatrixXd::Zero(l, rank_d);
  e.A2 = MatrixXd::Zero(m, rank_f);
  e.Af = MatrixXd::Zero(l, rank_f);
  e.Bf = MatrixXd::Zero(l, rank_f);
  e.E = MatrixXd::Identity(rank_d, rank_d);
  e.Ef = MatrixXd::Identity(rank_f, rank_f);
  for (int i = 1; i < order; ++i) {
    e.K.push_back(MatrixXd::Zero(m, m + l));
    e.Phi2.push_back(MatrixXd::Zero(l, l));
  }
  return e;
}

void EcmBlocks::validate() const {
  const auto rd = A.cols(), rf = Af.cols();
  require(A.rows() == m && B1.rows() == m && B1.cols() == rd && B2.rows() == l && B2.cols() == rd,
          ErrorCode::DimensionMismatch, "dependent-process cointegration blocks");
  require(A2.rows() == m && A2.cols() == rf && Af.rows() == l && Bf.rows() == l && Bf.cols() == rf,
          ErrorCode::DimensionMismatch, "predictor-process cointegration blocks");
  require(K.size() == Phi2.size(), ErrorCode::DimensionMismatch, "short-run lag counts differ");
  for (std::size_t i = 0; i < K.size(); ++i) {
    require(K[i].rows() == m && K[i].cols() == m + l, ErrorCode::DimensionMismatch, "short-run K block");
    require(Phi2[i].rows() == l && Phi2[i].cols() == l, ErrorCode::DimensionMismatch, "short-run predictor block");
  }
}

namespace {

void check_block_triangular(const MatrixXd& a, int m) {
  const auto k = a.rows();
  require(a.cols() == k && m <= k, ErrorCode::DimensionMismatch, "VAR matrices must be square");
  require(a.bottomLeftCorner(k - m, m).isZero(0.0), ErrorCode::BlockStructureViolation,
          "lower-left block must be exactly zero");
}

}  // namespace

EcmForm var_to_ecm(const std::vector<MatrixXd>& phis, int m) {
  require(!phis.empty(), ErrorCode::DimensionMismatch, "at least one VAR matrix required");
  const auto k = phis.front().rows();
  for (const auto& p : phis) {
    require(p.rows() == k && p.cols() == k, ErrorCode::DimensionMismatch, "VAR matrices differ in size");
    check_block_triangular(p, m);
  }
  const std::size_t p = phis.size();
  EcmForm e;
  e.longrun = -MatrixXd::Identity(k, k);
  for (const auto& phi : phis) e.longrun += phi;
  for (std::size_t i = 1; i < p; ++i) {
    MatrixXd s = MatrixXd::Zero(k, k);
    for (std::size_t j = i; j < p; ++j) s -= phis[j];
    e.shortrun.push_back(s);
  }
  return e;
}

std::vector<MatrixXd> ecm_to_var(const EcmForm& ecm) {
  const auto k = ecm.longrun.rows();
  require(ecm.longrun.cols() == k, ErrorCode::DimensionMismatch, "long-run matrix must be square");
  for (const auto& s : ecm.shortrun)
    require(s.rows() == k && s.cols() == k, ErrorCode::DimensionMismatch, "short-run matrix size");
  const std::size_t p = ecm.shortrun.size() + 1;
  std::vector<MatrixXd> phis(p);
  phis[0] = MatrixXd::Identity(k, k) + ecm.longrun;
  if (p > 1) phis[0] += ecm.shortrun[0];
  for (std::size_t i = 1; i + 1 < p; ++i) phis[i] = ecm.shortrun[i] - ecm.shortrun[i - 1];
  if (p > 1) phis[p - 1] = -ecm.shortrun[p - 2];
  return phis;
}

EcmForm blocks_to_ecm(const EcmBlocks& b) {
  b.validate();
  const int m = b.m, l = b.l;
  EcmForm e;
  e.longrun = MatrixXd::Zero(m + l, m + l);
  e.longrun.topLeftCorner(m, m) = b.A * b.B1.transpose();
  e.longrun.topRightCorner(m, l) = b.cross();
  e.longrun.bottomRightCorner(l, l) = b.pi_f();
  for (std::size_t i = 0; i < b.K.size(); ++i) {
    MatrixXd s = MatrixXd::Zero(m + l, m + l);
    s.topRows(m) = b.K[i];
    s.bottomRightCorner(l, l) = b.Phi2[i];
    e.shortrun.push_back(s);
  }
  return e;
}

int rank_estimate(const MatrixXd& a, double threshold) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  return static_cast<int>((svd.singularValues().array() > threshold).count());
}

CointRanks estimate_ranks(const EcmBlocks& b, double threshold) {
  CointRanks r;
  r.r_f = rank_estimate(b.pi_f(), threshold);
  r.r_d = rank_estimate(b.pi_gd(), threshold);
  r.r_c = rank_estimate(b.cross(), threshold);
  r.r_c1 = rank_estimate(b.A * b.B2.transpose(), threshold);
  r.r_c2 = rank_estimate(b.A2 * b.Bf.transpose(), threshold);
  return r;
}

RankPosterior rank_posterior(const std::vector<EcmBlocks>& draws, double threshold) {
  require(!draws.empty(), ErrorCode::EmptyChain, "rank posterior needs at least one draw");
  const int m = draws.front().m, l = draws.front().l;
  RankPosterior out;
  out.n_draws = draws.size();
  out.probs.assign(static_cast<std::size_t>(std::max(m, l) + 1), {0, 0, 0, 0, 0});
  const double w = 1.0 / static_cast<double>(draws.size());
  for (const auto& d : draws) {
    CointRanks r = estimate_ranks(d, threshold);
    out.probs[static_cast<std::size_t>(r.r_f)][0] += w;
    out.probs[static_cast<std::size_t>(r.r_d)][1] += w;
    out.probs[static_cast<std::size_t>(r.r_c)][2] += w;
    out.probs[static_cast<std::size_t>(r.r_c1)][3] += w;
    out.probs[static_cast<std::size_t>(r.r_c2)][4] += w;
  }
  return out;
}

int RankPosterior::mode(int which) const {
  int best = 0;
  for (std::size_t r = 1; r < probs.size(); ++r)
    if (probs[r][static_cast<std::size_t>(which)] > probs[static_cast<std::size_t>(best)][static_cast<std::size_t>(which)])
      best = static_cast<int>(r);
  return best;
}

std::string RankPosterior::to_csv() const {
  std::string out = "rank,r_f,r_d,r_c,r_c1,r_c2\n";
  char buf[64];
  for (std::size_t r = 0; r < probs.size(); ++r) {
    out += std::to_string(r);
    for (double p : probs[r]) {
      std::snprintf(buf, sizeof buf, ",%.17g", p);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace sdsem::ecm
