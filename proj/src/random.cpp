#include "sdsem/random.hpp"

#include <cmath>

#include "sdsem/errors.hpp"

namespace sdsem {

RandomSource::RandomSource(std::uint64_t seed) : engine_(seed) {}

RandomSource RandomSource::stream(std::uint64_t master_seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed & 0xffffffffu),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream_id & 0xffffffffu),
                    static_cast<std::uint32_t>(stream_id >> 32), 0x5d5e3u};
  RandomSource rs(0);
  rs.engine_.seed(seq);
  return rs;
}

double RandomSource::normal() { return normal_(engine_); }

double RandomSource::uniform() {
  // 53 random bits mapped to (0,1); zero is rejected so log(u) is finite.
  for (;;) {
    double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    if (u > 0.0) return u;
  }
}

double RandomSource::gamma(double shape, double rate) {
  require(shape > 0.0 && rate > 0.0, ErrorCode::NonPositiveValue, "gamma shape and rate must be positive");
  if (shape < 1.0) {
    // Boost small shapes: G(a) = G(a+1) * U^(1/a)
    double g = gamma(shape + 1.0, 1.0);
    return g * std::pow(uniform(), 1.0 / shape) / rate;
  }
  // Marsaglia & Tsang
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

bool RandomSource::bernoulli(double p) { return uniform() < p; }

int RandomSource::uniform_int(int lo, int hi) {
  std::uniform_int_distribution<int> dist(lo, hi);
  return dist(engine_);
}

Eigen::VectorXd RandomSource::normal_vector(Eigen::Index n) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = normal();
  return z;
}

Eigen::MatrixXd RandomSource::wishart(double df, const Eigen::MatrixXd& scale) {
  const Eigen::Index k = scale.rows();
  require(df > static_cast<double>(k) - 1.0, ErrorCode::NonPositiveValue, "wishart df must exceed dimension - 1");
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  require(llt.info() == Eigen::Success, ErrorCode::NotPositiveDefinite, "wishart scale not positive definite");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    a(i, i) = std::sqrt(2.0 * gamma(0.5 * (df - static_cast<double>(i)), 1.0));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = normal();
  }
  Eigen::MatrixXd la = llt.matrixL() * a;
  return la * la.transpose();
}

}  // namespace sdsem
