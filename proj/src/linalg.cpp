#include "sdsem/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sdsem/errors.hpp"

namespace sdsem::linalg {

double min_eigenvalue(const MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double log_det_spd(const MatrixXd& a) {
  Eigen::LLT<MatrixXd> llt(a);
  require(llt.info() == Eigen::Success, ErrorCode::NotPositiveDefinite, "log determinant of non-SPD matrix");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

namespace {
MatrixXd spectral_power(const MatrixXd& a, double power) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a));
  require(es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0.0, ErrorCode::NotPositiveDefinite,
          "spectral power of non-SPD matrix");
  VectorXd d = es.eigenvalues().array().pow(power);
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}
}  // namespace

MatrixXd spd_sqrt(const MatrixXd& a) { return spectral_power(a, 0.5); }
MatrixXd spd_inv_sqrt(const MatrixXd& a) { return spectral_power(a, -0.5); }

MatrixXd spd_inverse(const MatrixXd& a) {
  Eigen::LLT<MatrixXd> llt(a);
  require(llt.info() == Eigen::Success, ErrorCode::NotPositiveDefinite, "inverse of non-SPD matrix");
  return symmetrize(llt.solve(MatrixXd::Identity(a.rows(), a.cols())));
}

MatrixXd pinv(const MatrixXd& a, double rcond) {
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  double cut = s.size() > 0 ? rcond * s(0) : 0.0;
  VectorXd sinv(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) sinv(i) = s(i) > cut ? 1.0 / s(i) : 0.0;
  return svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose();
}

bool has_full_column_rank(const MatrixXd& a, double rcond) {
  if (a.cols() == 0) return true;
  if (a.rows() < a.cols()) return false;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  const VectorXd& s = svd.singularValues();
  return s(0) > 0.0 && s(s.size() - 1) > rcond * s(0);
}

VectorXd draw_psd(const MatrixXd& cov, RandomSource& rng) {
  const Eigen::Index n = cov.rows();
  if (n == 0) return VectorXd();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(cov));
  VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  VectorXd z = rng.normal_vector(n);
  return es.eigenvectors() * (d.asDiagonal() * z);
}

VectorXd draw_canonical(const MatrixXd& precision, const VectorXd& linear, RandomSource& rng) {
  Eigen::LLT<MatrixXd> llt(symmetrize(precision));
  require(llt.info() == Eigen::Success, ErrorCode::FactorizationFailure, "precision not positive definite");
  VectorXd mean = llt.solve(linear);
  VectorXd z = rng.normal_vector(precision.rows());
  VectorXd e = llt.matrixU().solve(z);
  return mean + e;
}

MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

VectorXd vec_rowmajor(const MatrixXd& a) {
  VectorXd v(a.size());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) v(i * a.cols() + j) = a(i, j);
  return v;
}

MatrixXd unvec_rowmajor(const VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  require(v.size() == rows * cols, ErrorCode::DimensionMismatch, "unvec size mismatch");
  MatrixXd a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = v(i * cols + j);
  return a;
}

double quantile(std::vector<double> values, double q) {
  require(!values.empty(), ErrorCode::EmptyChain, "quantile of empty sample");
  std::sort(values.begin(), values.end());
  double pos = q * static_cast<double>(values.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, values.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace sdsem::linalg
