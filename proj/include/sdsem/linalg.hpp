#pragma once

#include <vector>

#include <Eigen/Dense>

#include "sdsem/random.hpp"

namespace sdsem::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd symmetrize(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

double min_eigenvalue(const MatrixXd& symmetric);
double log_det_spd(const MatrixXd& a);

// Symmetric (spectral) square root and its inverse.
MatrixXd spd_sqrt(const MatrixXd& a);
MatrixXd spd_inv_sqrt(const MatrixXd& a);
MatrixXd spd_inverse(const MatrixXd& a);

MatrixXd pinv(const MatrixXd& a, double rcond = 1e-12);
bool has_full_column_rank(const MatrixXd& a, double rcond = 1e-10);

// Draw N(0, cov) for a possibly singular PSD covariance.
VectorXd draw_psd(const MatrixXd& cov, RandomSource& rng);

// Draw N(Q^{-1} b, Q^{-1}) for a dense SPD precision Q (canonical form).
VectorXd draw_canonical(const MatrixXd& precision, const VectorXd& linear, RandomSource& rng);

// Kronecker product of two dense matrices.
MatrixXd kron(const MatrixXd& a, const MatrixXd& b);

// Row-major vectorization (a_11, a_12, ..., a_21, ...) and its inverse.
VectorXd vec_rowmajor(const MatrixXd& a);
MatrixXd unvec_rowmajor(const VectorXd& v, Eigen::Index rows, Eigen::Index cols);

// Percentile with linear interpolation between order statistics (q in [0,1]).
double quantile(std::vector<double> values, double q);

}  // namespace sdsem::linalg
