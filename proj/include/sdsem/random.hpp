#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace sdsem {

// Seeded 64-bit Mersenne Twister with the handful of distributions the
// samplers need. Streams for parallel chains are derived from a master seed
// with std::seed_seq so that chain k is reproducible independently of how many
// other chains run.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0);
  static RandomSource stream(std::uint64_t master_seed, std::uint64_t stream_id);

  double normal();
  double uniform();  // open interval (0, 1)
  double gamma(double shape, double rate);
  bool bernoulli(double p);
  int uniform_int(int lo, int hi);  // inclusive bounds

  Eigen::VectorXd normal_vector(Eigen::Index n);
  // Draw from W(df, scale) via the Bartlett decomposition.
  Eigen::MatrixXd wishart(double df, const Eigen::MatrixXd& scale);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace sdsem
