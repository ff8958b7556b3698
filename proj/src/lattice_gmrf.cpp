#include "sdsem/lattice_gmrf.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include "sdsem/errors.hpp"
#include "sdsem/linalg.hpp"

namespace sdsem::lattice {

int AdjacencyMatrix::n_edges() const {
  int count = 0;
  for (int i = 0; i < n_sites(); ++i)
    for (int j = i + 1; j < n_sites(); ++j) count += entries(i, j);
  return count;
}

void AdjacencyMatrix::validate() const {
  require(entries.rows() == entries.cols(), ErrorCode::DimensionMismatch, "adjacency matrix must be square");
  require(n_sites() > 0, ErrorCode::InvalidAdjacency, "adjacency matrix is empty");
  for (int i = 0; i < n_sites(); ++i) {
    require(entries(i, i) == 0, ErrorCode::InvalidAdjacency, "nonzero diagonal at site " + std::to_string(i));
    int degree = 0;
    for (int j = 0; j < n_sites(); ++j) {
      int v = entries(i, j);
      require(v == 0 || v == 1, ErrorCode::InvalidAdjacency, "adjacency entries must be 0 or 1");
      require(v == entries(j, i), ErrorCode::InvalidAdjacency,
              "adjacency not symmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      degree += v;
    }
    require(degree > 0 || allow_isolated || n_sites() == 1, ErrorCode::InvalidAdjacency,
            "isolated site " + std::to_string(i));
  }
}

AdjacencyMatrix AdjacencyMatrix::from_edges(int n_sites, const std::vector<std::pair<int, int>>& edges) {
  AdjacencyMatrix w;
  w.entries = Eigen::MatrixXi::Zero(n_sites, n_sites);
  for (auto [a, b] : edges) {
    require(a >= 0 && b >= 0 && a < n_sites && b < n_sites, ErrorCode::UnknownSiteInAdjacency,
            "edge references site outside range");
    require(a != b, ErrorCode::InvalidAdjacency, "self loop at site " + std::to_string(a));
    w.entries(a, b) = 1;
    w.entries(b, a) = 1;
  }
  return w;
}

AdjacencyMatrix AdjacencyMatrix::grid(int rows, int cols) {
  std::vector<std::pair<int, int>> edges;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      int s = r * cols + c;
      if (c + 1 < cols) edges.emplace_back(s, s + 1);
      if (r + 1 < rows) edges.emplace_back(s, s + cols);
    }
  return from_edges(rows * cols, edges);
}

MatrixXd GmrfSpec::spatial_coef() const {
  MatrixXd ts = linalg::spd_sqrt(cond_cov);
  MatrixXd tis = linalg::spd_inv_sqrt(cond_cov);
  return -ts * ftilde * tis;
}

GmrfSpec GmrfSpec::from_spatial_coef(const MatrixXd& cond_cov, const MatrixXd& spatial_coef, const MatrixXd& design,
                                     const VectorXd& coef) {
  GmrfSpec s;
  s.cond_cov = cond_cov;
  s.ftilde = -linalg::spd_inv_sqrt(cond_cov) * spatial_coef * linalg::spd_sqrt(cond_cov);
  s.mean_design = design;
  s.mean_coef = coef;
  return s;
}

GmrfSpec GmrfSpec::independent(int n_sites, const MatrixXd& cond_cov) {
  GmrfSpec s;
  s.cond_cov = cond_cov;
  s.ftilde = MatrixXd::Zero(cond_cov.rows(), cond_cov.cols());
  s.mean_design = intercept_design(n_sites, static_cast<int>(cond_cov.rows()));
  s.mean_coef = VectorXd::Zero(cond_cov.rows());
  return s;
}

MatrixXd intercept_design(int n_sites, int n_vars) {
  MatrixXd d(n_sites * n_vars, n_vars);
  for (int i = 0; i < n_sites; ++i) d.block(i * n_vars, 0, n_vars, n_vars).setIdentity();
  return d;
}

SparseMatrix assemble_precision(const AdjacencyMatrix& w, const MatrixXd& tis, const MatrixXd& ftilde) {
  const int n = w.n_sites();
  const int k = static_cast<int>(tis.rows());
  require(ftilde.rows() == k && ftilde.cols() == k, ErrorCode::DimensionMismatch, "spatial coefficient size");
  MatrixXd diag_block = linalg::symmetrize(tis * tis);
  MatrixXd upper = tis * ftilde * tis;
  MatrixXd lower = upper.transpose();

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(k * k * (n + 2 * w.n_edges())));
  auto put = [&](int bi, int bj, const MatrixXd& blk) {
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) trip.emplace_back(bi * k + a, bj * k + b, blk(a, b));
  };
  for (int i = 0; i < n; ++i) {
    put(i, i, diag_block);
    for (int u = i + 1; u < n; ++u) {
      if (w.entries(i, u) == 0) continue;
      put(i, u, upper);
      put(u, i, lower);
    }
  }
  SparseMatrix q(n * k, n * k);
  q.setFromTriplets(trip.begin(), trip.end());
  return q;
}

JointGmrf build_joint_precision(const AdjacencyMatrix& w, const GmrfSpec& spec) {
  w.validate();
  const int k = spec.n_vars();
  require(spec.cond_cov.cols() == k, ErrorCode::DimensionMismatch, "conditional covariance must be square");
  require(spec.mean_design.rows() == w.n_sites() * k, ErrorCode::DimensionMismatch, "mean design rows");
  require(spec.mean_design.cols() == spec.mean_coef.size(), ErrorCode::DimensionMismatch, "mean design columns");
  require(linalg::min_eigenvalue(linalg::symmetrize(spec.cond_cov)) > kPdTolerance, ErrorCode::NotPositiveDefinite,
          "conditional covariance not positive definite");
  JointGmrf g;
  g.precision = assemble_precision(w, linalg::spd_inv_sqrt(spec.cond_cov), spec.ftilde);
  g.mean = spec.mean();
  require(check_positive_definite(g), ErrorCode::NotPositiveDefinite,
          "joint precision not positive definite for the given spatial coefficients");
  return g;
}

bool check_positive_definite(const MatrixXd& q) {
  const Eigen::Index n = q.rows();
  bool dominant = true;
  for (Eigen::Index i = 0; i < n && dominant; ++i) {
    double off = q.row(i).cwiseAbs().sum() - std::abs(q(i, i));
    dominant = q(i, i) > 0.0 && q(i, i) - off > kPdTolerance;
  }
  if (dominant) return true;
  return linalg::min_eigenvalue(linalg::symmetrize(q)) > kPdTolerance;
}

bool check_positive_definite(const JointGmrf& g) { return check_positive_definite(MatrixXd(g.precision)); }

Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> fill_reducing_ordering(const SparseMatrix& q) {
  Eigen::AMDOrdering<int> amd;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm;
  SparseMatrix sym = q;
  amd(sym.selfadjointView<Eigen::Lower>(), perm);
  return perm;
}

namespace {

// x = P^{-1} L'^{-1} z with P Q P^{-1} = L L'.
VectorXd permuted_solve_upper(const Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>& perm,
                              const VectorXd& y) {
  return perm.inverse() * y;
}

}  // namespace

VectorXd sample_canonical(const SparseMatrix& q, const VectorXd& b, RandomSource& rng) {
  require(q.rows() == q.cols() && q.rows() == b.size(), ErrorCode::DimensionMismatch, "canonical sampler sizes");
  auto perm = fill_reducing_ordering(q);
  SparseMatrix qp = perm * q * perm.transpose();
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>> llt(qp);
  require(llt.info() == Eigen::Success, ErrorCode::FactorizationFailure, "sparse Cholesky of precision failed");
  VectorXd mean_p = llt.solve(perm * b);
  VectorXd z = rng.normal_vector(q.rows());
  VectorXd e = llt.matrixU().solve(z);
  return permuted_solve_upper(perm, mean_p + e);
}

VectorXd sample_gmrf(const JointGmrf& g, RandomSource& rng) {
  auto perm = fill_reducing_ordering(g.precision);
  SparseMatrix qp = perm * g.precision * perm.transpose();
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>> llt(qp);
  require(llt.info() == Eigen::Success, ErrorCode::FactorizationFailure, "sparse Cholesky of precision failed");
  VectorXd z = rng.normal_vector(g.precision.rows());
  VectorXd e = llt.matrixU().solve(z);
  return g.mean + permuted_solve_upper(perm, e);
}

VectorXd sample_gmrf_dense(const JointGmrf& g, RandomSource& rng) {
  auto perm = fill_reducing_ordering(g.precision);
  MatrixXd qp = perm * MatrixXd(g.precision) * perm.transpose();
  Eigen::LLT<MatrixXd> llt(qp);
  require(llt.info() == Eigen::Success, ErrorCode::FactorizationFailure, "dense Cholesky of precision failed");
  VectorXd z = rng.normal_vector(g.precision.rows());
  VectorXd e = llt.matrixU().solve(z);
  return g.mean + permuted_solve_upper(perm, e);
}

double log_density(const JointGmrf& g, const VectorXd& x) {
  Eigen::SimplicialLLT<SparseMatrix> llt(g.precision);
  require(llt.info() == Eigen::Success, ErrorCode::FactorizationFailure, "sparse Cholesky of precision failed");
  double logdet = 0.0;
  SparseMatrix l = llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) logdet += 2.0 * std::log(l.coeff(i, i));
  VectorXd r = x - g.mean;
  double quad = r.dot(g.precision * r);
  return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) + 0.5 * logdet - 0.5 * quad;
}

MatrixXd conditional_correlation(const GmrfSpec& spec) {
  const int k = spec.n_vars();
  MatrixXd tinv = linalg::spd_inverse(spec.cond_cov);
  MatrixXd off = -tinv * spec.spatial_coef();
  MatrixXd pair(2 * k, 2 * k);
  pair << tinv, off, off.transpose(), tinv;
  pair = linalg::symmetrize(pair);
  require(linalg::min_eigenvalue(pair) > kPdTolerance, ErrorCode::NotPositiveDefinite,
          "pair precision not positive definite");
  MatrixXd cov = linalg::spd_inverse(pair);
  VectorXd s = cov.diagonal().cwiseSqrt().cwiseInverse();
  MatrixXd omega = s.asDiagonal() * cov * s.asDiagonal();
  omega.diagonal().setOnes();
  return omega;
}

}  // namespace sdsem::lattice
