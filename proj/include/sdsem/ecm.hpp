#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sdsem::ecm {

using Eigen::MatrixXd;

// Delta d(t) = longrun d(t-1) + sum_i shortrun[i] Delta d(t-1-i) + e(t)
struct EcmForm {
  MatrixXd longrun;
  std::vector<MatrixXd> shortrun;

  int order() const { return static_cast<int>(shortrun.size()) + 1; }
};

// Factored long-run structure. With B = [B1; B2]:
//   Delta g = A B' d(t-1) + A2 Bf' f(t-1) + sum_i K_i Delta d(t-i) + xi
//   Delta f = Af Bf' f(t-1) + sum_i Phi2_i Delta f(t-i) + eta
struct EcmBlocks {
  int m = 0, l = 0;
  MatrixXd A, B1, B2, A2, Af, Bf;
  std::vector<MatrixXd> K, Phi2;
  // Mixing matrices linking the sampler's unidentified coordinates to the
  // blocks above: Abar = A E, Bbar = B E^{-1}, Afbar = Af Ef, A2bar = A2 Ef,
  // Bfbar = Bf Ef^{-1}.
  MatrixXd E, Ef;

  int rank_d() const { return static_cast<int>(A.cols()); }
  int rank_f() const { return static_cast<int>(Af.cols()); }
  MatrixXd B() const;
  MatrixXd pi_gd() const { return A * B().transpose(); }
  MatrixXd pi_f() const { return Af * Bf.transpose(); }
  MatrixXd cross() const { return A * B2.transpose() + A2 * Bf.transpose(); }

  static EcmBlocks zeros(int m, int l, int rank_d, int rank_f, int order);
  void validate() const;
};

struct CointRanks {
  int r_f = 0, r_d = 0, r_c = 0, r_c1 = 0, r_c2 = 0;
};

constexpr double kDefaultRankThreshold = 0.05;

EcmForm var_to_ecm(const std::vector<MatrixXd>& phis, int m);
std::vector<MatrixXd> ecm_to_var(const EcmForm& ecm);
EcmForm blocks_to_ecm(const EcmBlocks& blocks);

int rank_estimate(const MatrixXd& a, double threshold = kDefaultRankThreshold);
CointRanks estimate_ranks(const EcmBlocks& blocks, double threshold = kDefaultRankThreshold);

// probs[r] = {P(r_f = r), P(r_d = r), P(r_c = r), P(r_c1 = r), P(r_c2 = r)}
struct RankPosterior {
  std::vector<std::array<double, 5>> probs;
  std::size_t n_draws = 0;

  int mode(int which) const;
  std::string to_csv() const;
};

RankPosterior rank_posterior(const std::vector<EcmBlocks>& draws, double threshold = kDefaultRankThreshold);

}  // namespace sdsem::ecm
