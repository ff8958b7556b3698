#include <doctest.h>

#include "oracles.hpp"
#include "sdsem/errors.hpp"
#include "sdsem/state_space.hpp"

using namespace sdsem;
using namespace sdsem::ssm;

namespace {

StateSpaceForm scalar_system(double phi, double q, double h, double r) {
  StateSpaceForm ss;
  ss.transition = MatrixXd::Constant(1, 1, phi);
  ss.input = MatrixXd::Identity(1, 1);
  ss.state_noise_cov = MatrixXd::Constant(1, 1, q);
  ss.meas = MatrixXd::Constant(1, 1, h);
  ss.obs_noise_var = VectorXd::Constant(1, r);
  ss.obs_mean = VectorXd::Zero(1);
  return ss;
}

MatrixXd rnd(int r, int c, RandomSource& rng, double scale = 1.0) {
  MatrixXd a(r, c);
  for (int i = 0; i < a.size(); ++i) a(i) = scale * rng.normal();
  return a;
}

StateSpaceForm random_system(int k, int n, RandomSource& rng) {
  StateSpaceForm ss;
  ss.transition = rnd(k, k, rng, 0.4);
  ss.input = MatrixXd::Identity(k, k);
  MatrixXd a = rnd(k, k, rng);
  ss.state_noise_cov = a * a.transpose() + 0.5 * MatrixXd::Identity(k, k);
  ss.meas = rnd(n, k, rng);
  ss.obs_noise_var = (rnd(n, 1, rng).array().abs() + 0.2).matrix();
  ss.obs_mean = rnd(n, 1, rng);
  return ss;
}

MeasurementModel unit_meas(int m, int l) {
  MeasurementModel mm;
  mm.H_y = MatrixXd::Identity(m, m);
  mm.H_x = MatrixXd::Identity(l, l);
  mm.mean_y = VectorXd::Zero(m);
  mm.mean_x = VectorXd::Zero(l);
  mm.obs_var_y = VectorXd::Ones(m);
  mm.obs_var_x = VectorXd::Ones(l);
  return mm;
}

}  // namespace

TEST_CASE("companion assembly") {
  FactorDynamics dyn;
  dyn.C = {MatrixXd::Constant(1, 1, 0.4)};
  dyn.D = {MatrixXd::Constant(1, 1, 0.3)};
  dyn.R = {MatrixXd::Constant(1, 1, 0.9)};
  dyn.state_cov_g = MatrixXd::Identity(1, 1);
  dyn.state_cov_f = MatrixXd::Identity(1, 1);
  StateSpaceForm ss = assemble_companion(dyn, unit_meas(1, 1));
  MatrixXd expect(2, 2);
  expect << 0.4, 0.3, 0, 0.9;
  CHECK((ss.transition - expect).cwiseAbs().maxCoeff() == 0.0);

  FactorDynamics two;
  two.C = {MatrixXd::Constant(1, 1, 0.1), MatrixXd::Constant(1, 1, 0.2)};
  two.D = {MatrixXd::Constant(1, 1, 0.3), MatrixXd::Constant(1, 1, 0.4)};
  two.R = {MatrixXd::Constant(1, 1, 0.5), MatrixXd::Constant(1, 1, 0.6)};
  two.state_cov_g = two.state_cov_f = MatrixXd::Identity(1, 1);
  ss = assemble_companion(two, unit_meas(1, 1));
  REQUIRE(ss.transition.rows() == 4);
  CHECK(ss.transition.bottomLeftCorner(2, 2).isIdentity(0.0));
  CHECK(ss.transition.bottomRightCorner(2, 2).isZero(0.0));
  CHECK(ss.transition(1, 0) == 0.0);
  CHECK(ss.transition(1, 2) == 0.0);

  FactorDynamics back = extract_dynamics(ss, 1, 1);
  for (int i = 0; i < 2; ++i) {
    CHECK(back.C[i](0, 0) == two.C[i](0, 0));
    CHECK(back.D[i](0, 0) == two.D[i](0, 0));
    CHECK(back.R[i](0, 0) == two.R[i](0, 0));
  }

  FactorDynamics zero = two;
  for (auto* v : {&zero.C, &zero.D, &zero.R})
    for (auto& a : *v) a.setZero();
  ss = assemble_companion(zero, unit_meas(1, 1));
  CHECK(ss.transition.topRows(2).isZero(0.0));
  CHECK(ss.transition.bottomLeftCorner(2, 2).isIdentity(0.0));
}

TEST_CASE("scalar filter step") {
  StateSpaceForm ss = scalar_system(0.5, 1.0, 1.0, 1.0);
  MatrixXd z = MatrixXd::Constant(1, 1, 1.0);
  InitialState init{VectorXd::Zero(1), MatrixXd::Identity(1, 1)};
  FilterResult f = kalman_filter(ss, z, init);
  CHECK(f.pred_cov[0](0, 0) == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(f.filt_mean[0](0) == doctest::Approx(1.25 / 2.25).epsilon(1e-12));

  StateSpaceForm vague = scalar_system(0.5, 1.0, 1.0, 1e12);
  FilterResult g = kalman_filter(vague, z, init);
  CHECK(std::abs(g.filt_mean[0](0) - g.pred_mean[0](0)) < 1e-6);
}

TEST_CASE("filter and smoother against dense conditioning") {
  RandomSource rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    StateSpaceForm ss = random_system(2, 2, rng);
    const int T = 3;
    MatrixXd data = rnd(T, 2, rng);
    InitialState init{rnd(2, 1, rng), 2.0 * MatrixXd::Identity(2, 2)};
    auto law = oracle::joint_law(ss, init.mean, init.cov, T);
    FilterResult f = kalman_filter(ss, data, init);
    SmootherResult s = kalman_smoother(ss, f);
    for (int t = 1; t <= T; ++t) {
      auto [fm, fc] = oracle::conditional_state(law, data, t, t);
      CHECK((f.filt_mean[t - 1] - fm).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((f.filt_cov[t - 1] - fc).cwiseAbs().maxCoeff() < 1e-8);
      auto [sm, sc] = oracle::conditional_state(law, data, t, T);
      CHECK((s.mean[t - 1] - sm).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((s.cov[t - 1] - sc).cwiseAbs().maxCoeff() < 1e-8);
    }
    CHECK(std::abs(f.loglik - oracle::data_log_density(law, data)) < 1e-6);
  }
}

TEST_CASE("smoother edge cases") {
  RandomSource rng(12);
  StateSpaceForm ss = random_system(2, 3, rng);
  MatrixXd one = rnd(1, 3, rng);
  InitialState init = InitialState::diffuse(2, 10.0);
  FilterResult f = kalman_filter(ss, one, init);
  SmootherResult s = kalman_smoother(ss, f);
  CHECK((s.mean[0] - f.filt_mean[0]).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((s.cov[0] - f.filt_cov[0]).cwiseAbs().maxCoeff() < 1e-12);

  StateSpaceForm det = ss;
  det.transition << 0.9, 0.2, -0.1, 0.7;
  det.state_noise_cov.setZero();
  MatrixXd data = rnd(6, 3, rng);
  SmootherResult d = kalman_smoother(det, data, init);
  for (int t = 1; t < 6; ++t) CHECK((d.mean[t] - det.transition * d.mean[t - 1]).cwiseAbs().maxCoeff() < 1e-8);

  for (const auto& c : d.cov) CHECK((c - c.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ffbs draws") {
  RandomSource rng(13);
  StateSpaceForm ss = random_system(2, 2, rng);
  ss.meas << 1.0, 0.5, -0.3, 2.0;
  const int T = 4;
  MatrixXd data = rnd(T, 2, rng);
  InitialState init{VectorXd::Zero(2), MatrixXd::Identity(2, 2)};

  StateSpaceForm exact = ss;
  exact.obs_noise_var = VectorXd::Constant(2, 1e-14);
  MatrixXd a = ffbs_draw(exact, data, init, rng);
  MatrixXd hinv = exact.meas.inverse();
  for (int t = 1; t <= T; ++t) {
    VectorXd target = hinv * (data.row(t - 1).transpose() - exact.obs_mean);
    CHECK((a.row(t).transpose() - target).cwiseAbs().maxCoeff() < 1e-6);
  }

  RandomSource r1(77), r2(77);
  CHECK((ffbs_draw(ss, data, init, r1) - ffbs_draw(ss, data, init, r2)).cwiseAbs().maxCoeff() == 0.0);

  SmootherResult s = kalman_smoother(ss, data, init);
  const int n = 10000;
  MatrixXd sum = MatrixXd::Zero(T + 1, 2);
  for (int i = 0; i < n; ++i) sum += ffbs_draw(ss, data, init, rng);
  for (int t = 1; t <= T; ++t)
    for (int j = 0; j < 2; ++j) {
      double se = std::sqrt(s.cov[t - 1](j, j) / n);
      CHECK(std::abs(sum(t, j) / n - s.mean[t - 1](j)) < 4 * se);
    }
}

TEST_CASE("simulation") {
  RandomSource rng(14);
  StateSpaceForm ss = random_system(2, 3, rng);
  ss.state_noise_cov.setZero();
  ss.obs_noise_var = VectorXd::Constant(3, 1e-300);
  ss.obs_mean.setZero();
  auto [st, z] = simulate_states(ss, 10, VectorXd::Zero(2), rng, false);
  CHECK(st.cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);

  // AR(1) with coefficient 0.5
  StateSpaceForm ar = scalar_system(0.5, 1.0, 1.0, 1.0);
  auto [s2, z2] = simulate_states(ar, 5000, VectorXd::Zero(1), rng, true);
  VectorXd g = s2.col(0).tail(5000);
  double mu = g.mean();
  double num = 0, den = 0;
  for (int t = 0; t < 5000; ++t) {
    den += (g(t) - mu) * (g(t) - mu);
    if (t > 0) num += (g(t) - mu) * (g(t - 1) - mu);
  }
  CHECK(std::abs(num / den - 0.5) < 0.05);

  // all-ones loading column: cross-sectional average tracks the factor
  StateSpaceForm ones = scalar_system(0.5, 1.0, 1.0, 1e-4);
  ones.meas = MatrixXd::Ones(6, 1);
  ones.obs_noise_var = VectorXd::Constant(6, 1e-4);
  ones.obs_mean = VectorXd::Zero(6);
  auto [s3, z3] = simulate_states(ones, 500, VectorXd::Zero(1), rng, true);
  VectorXd avg = z3.rowwise().mean();
  VectorXd fac = s3.col(0).tail(500);
  double c = ((avg.array() - avg.mean()) * (fac.array() - fac.mean())).sum() /
             std::sqrt((avg.array() - avg.mean()).square().sum() * (fac.array() - fac.mean()).square().sum());
  CHECK(c > 0.99);
}

TEST_CASE("likelihood prefers the generating parameters") {
  RandomSource rng(15);
  int wins = 0;
  const int reps = 50;
  for (int rep = 0; rep < reps; ++rep) {
    StateSpaceForm ss = random_system(2, 4, rng);
    auto [st, z] = simulate_states(ss, 100, VectorXd::Zero(2), rng, true);
    InitialState init = InitialState::diffuse(2, 10.0);
    double base = kalman_filter(ss, z, init).loglik;
    // perturb transition, loadings and means by 20% of their norm along a random direction
    StateSpaceForm p = ss;
    VectorXd dir(4 + 8 + 4);
    for (int i = 0; i < dir.size(); ++i) dir(i) = rng.normal();
    dir.normalize();
    VectorXd theta(dir.size());
    theta << Eigen::Map<const VectorXd>(ss.transition.data(), 4), Eigen::Map<const VectorXd>(ss.meas.data(), 8),
        ss.obs_mean;
    theta += 0.2 * theta.norm() * dir;
    p.transition = Eigen::Map<MatrixXd>(theta.data(), 2, 2);
    p.meas = Eigen::Map<MatrixXd>(theta.data() + 4, 4, 2);
    p.obs_mean = theta.tail(4);
    if (base > kalman_filter(p, z, init).loglik) ++wins;
  }
  CHECK(wins >= 45);
}

TEST_CASE("factor path indexing") {
  MatrixXd states(4, 4);
  for (int i = 0; i < 16; ++i) states(i) = i;
  FactorPath p = to_factor_path(states, 2, 2);
  CHECK(p.length() == 3);
  CHECK((p.at(1) - states.row(1).head(2).transpose()).isZero(0.0));
  CHECK((p.at(0) - states.row(0).head(2).transpose()).isZero(0.0));
  CHECK((p.at(-1) - states.row(0).tail(2).transpose()).isZero(0.0));
  VectorXd expect(4);
  expect << states.row(3).head(2).transpose(), states.row(2).head(2).transpose();
  CHECK((companion_state(p, 3, 2) - expect).isZero(0.0));
}

TEST_CASE("dimension errors") {
  RandomSource rng(16);
  StateSpaceForm ss = random_system(2, 2, rng);
  InitialState init = InitialState::diffuse(2);
  CHECK_THROWS_AS(kalman_filter(ss, MatrixXd::Zero(3, 3), init), Error);
  StateSpaceForm bad = ss;
  bad.obs_noise_var(0) = 0.0;
  CHECK_THROWS_AS(kalman_filter(bad, MatrixXd::Zero(3, 2), init), Error);
}
