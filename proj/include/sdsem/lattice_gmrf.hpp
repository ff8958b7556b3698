#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "sdsem/random.hpp"

namespace sdsem::lattice {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

constexpr double kPdTolerance = 1e-10;

struct AdjacencyMatrix {
  Eigen::MatrixXi entries;
  bool allow_isolated = false;

  int n_sites() const { return static_cast<int>(entries.rows()); }
  int n_edges() const;

  // Throws InvalidAdjacency / DimensionMismatch when the invariants fail.
  void validate() const;

  static AdjacencyMatrix from_edges(int n_sites, const std::vector<std::pair<int, int>>& edges);
  // Rook-neighbour lattice, sites numbered row-major.
  static AdjacencyMatrix grid(int rows, int cols);
};

// Multivariate GMRF prior for one loading column. `ftilde` is the
// reparametrized spatial coefficient, which is the coordinate the sampler
// moves in; the conditional-mean regression matrix is available through
// spatial_coef().
struct GmrfSpec {
  MatrixXd cond_cov;     // T
  MatrixXd ftilde;       // T^{-1/2} (-F) T^{1/2}
  MatrixXd mean_design;  // D*, (N n_vars) x q
  VectorXd mean_coef;    // beta, q

  int n_vars() const { return static_cast<int>(cond_cov.rows()); }
  MatrixXd spatial_coef() const;
  VectorXd mean() const { return mean_design * mean_coef; }

  static GmrfSpec from_spatial_coef(const MatrixXd& cond_cov, const MatrixXd& spatial_coef, const MatrixXd& design,
                                    const VectorXd& coef);
  // Spatially constant mean with zero coefficients and no interaction.
  static GmrfSpec independent(int n_sites, const MatrixXd& cond_cov);
};

struct JointGmrf {
  VectorXd mean;
  SparseMatrix precision;
};

MatrixXd intercept_design(int n_sites, int n_vars);

// Precision (I ⊗ T^{-1/2}) [I + W^U ⊗ F̃ + W^L ⊗ F̃'] (I ⊗ T^{-1/2}).
// Throws NotPositiveDefinite when the result is not SPD.
JointGmrf build_joint_precision(const AdjacencyMatrix& w, const GmrfSpec& spec);
// Same assembly without the PD check.
SparseMatrix assemble_precision(const AdjacencyMatrix& w, const MatrixXd& cond_cov_inv_sqrt, const MatrixXd& ftilde);

bool check_positive_definite(const JointGmrf& g);
bool check_positive_definite(const MatrixXd& precision);

// Fill-reducing permutation shared by the sparse and dense samplers.
Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> fill_reducing_ordering(const SparseMatrix& q);

VectorXd sample_gmrf(const JointGmrf& g, RandomSource& rng);
VectorXd sample_gmrf_dense(const JointGmrf& g, RandomSource& rng);

// Draw from N(Q^{-1} b, Q^{-1}) for sparse SPD Q.
VectorXd sample_canonical(const SparseMatrix& q, const VectorXd& b, RandomSource& rng);

// log N(x; mean, precision^{-1}).
double log_density(const JointGmrf& g, const VectorXd& x);

// Conditional correlation of a neighbouring site pair given all other sites;
// returns a 2 n_vars square matrix with unit diagonal.
MatrixXd conditional_correlation(const GmrfSpec& spec);

}  // namespace sdsem::lattice
