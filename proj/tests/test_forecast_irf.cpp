#include <doctest.h>

#include <cmath>

#include "sdsem/errors.hpp"
#include "sdsem/forecasting.hpp"
#include "sdsem/linalg.hpp"
#include "sdsem/multipliers.hpp"

using namespace sdsem;

namespace {

MatrixXd rnd(int r, int c, RandomSource& rng) {
  MatrixXd a(r, c);
  for (int i = 0; i < a.size(); ++i) a(i) = rng.normal();
  return a;
}

// m = l = 1, one lag: g(t) = c g(t-1) + d f(t-1) + xi, f(t) = r f(t-1) + eta.
SdSemParams scalar_params(double c, double d, double r, const VectorXd& h_y, const VectorXd& h_x, double state_var,
                          double obs_var) {
  SdSemParams p;
  p.ecm = ecm::EcmBlocks::zeros(1, 1, 1, 1, 1);
  p.ecm.A(0, 0) = c - 1.0;
  p.ecm.B1(0, 0) = 1.0;
  p.ecm.B2(0, 0) = 0.0;
  p.ecm.A2(0, 0) = d;
  p.ecm.Af(0, 0) = r - 1.0;
  p.ecm.Bf(0, 0) = 1.0;
  p.V_xi = precision_factor_from_cov(MatrixXd::Constant(1, 1, state_var));
  p.V_eta = precision_factor_from_cov(MatrixXd::Constant(1, 1, state_var));
  p.meas.H_y = h_y;
  p.meas.H_x = h_x;
  p.meas.mean_y = VectorXd::Zero(h_y.size());
  p.meas.mean_x = VectorXd::Zero(h_x.size());
  p.meas.obs_var_y = VectorXd::Constant(h_y.size(), obs_var);
  p.meas.obs_var_x = VectorXd::Constant(h_x.size(), obs_var);
  return p;
}

ssm::FactorPath last_state(double g, double f) {
  ssm::FactorPath path;
  path.values = MatrixXd(1, 2);
  path.values << g, f;
  path.presample = MatrixXd::Zero(1, 2);
  return path;
}

mcmc::PosteriorDraws single(const SdSemParams& p, const ssm::FactorPath& path) {
  mcmc::PosteriorDraws d;
  d.params.push_back(p);
  d.factors.push_back(path);
  d.deviance.push_back(0.0);
  return d;
}

}  // namespace

TEST_CASE("state moments") {
  MatrixXd phi = MatrixXd::Constant(1, 1, 0.5), sig = MatrixXd::Identity(1, 1);
  auto [m1, v1] = forecast::state_moments(phi, sig, VectorXd::Ones(1), 1);
  CHECK(m1(0) == 0.5);
  CHECK(v1(0, 0) == 1.0);
  auto [m2, v2] = forecast::state_moments(phi, sig, VectorXd::Ones(1), 2);
  CHECK(m2(0) == 0.25);
  CHECK(v2(0, 0) == 1.25);

  RandomSource rng(51);
  MatrixXd a = 0.3 * rnd(3, 3, rng);
  MatrixXd s = rnd(3, 3, rng);
  s = s * s.transpose();
  VectorXd x = rnd(3, 1, rng);
  auto [m5, v5] = forecast::state_moments(a, s, x, 5);
  MatrixXd pw = MatrixXd::Identity(3, 3), cov = MatrixXd::Zero(3, 3);
  for (int j = 0; j < 5; ++j) {
    cov += pw * s * pw.transpose();
    pw = a * pw;
  }
  CHECK((m5 - pw * x).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((v5 - cov).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("predictor factor recovery") {
  RandomSource rng(52);
  MatrixXd h = rnd(8, 2, rng);
  VectorXd mu = rnd(8, 1, rng);
  MatrixXd f = rnd(2, 4, rng);
  MatrixXd x = (h * f).colwise() + mu;
  CHECK((forecast::recover_predictor_factors(h, mu, x) - f).cwiseAbs().maxCoeff() < 1e-10);

  Eigen::HouseholderQR<MatrixXd> qr(rnd(8, 2, rng));
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(8, 2);
  MatrixXd xq = rnd(8, 3, rng);
  CHECK((forecast::recover_predictor_factors(q, VectorXd::Zero(8), xq) - q.transpose() * xq).cwiseAbs().maxCoeff() <
        1e-12);

  MatrixXd bad(8, 2);
  bad.col(0) = h.col(0);
  bad.col(1) = 2.0 * h.col(0);
  try {
    forecast::recover_predictor_factors(bad, mu, x);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficientLoadings);
  }
  CHECK_THROWS_AS(forecast::recover_predictor_factors(h, mu, x.topRows(5)), Error);
}

TEST_CASE("forecast metric identities") {
  MatrixXd truth(2, 2), zero = MatrixXd::Zero(2, 2);
  truth << 1, -1, 3, -3;
  auto m = forecast::metrics_from_cells(zero, truth, zero.array() - 2.0, zero.array() + 2.0);
  CHECK(m.mae == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(m.rmse == doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK(m.cp == 0.5);
  CHECK(m.aiw == 4.0);
  CHECK(m.cells == 4);

  MatrixXd biased = truth.array() + 0.7;
  m = forecast::metrics_from_cells(biased, truth, truth, biased);
  CHECK(m.rmse == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(m.mae == doctest::Approx(0.7).epsilon(1e-14));
  CHECK(m.cp == 1.0);

  m = forecast::metrics_from_cells(truth, truth, truth, truth);
  CHECK(m.rmse == 0.0);
  CHECK(m.mae == 0.0);
  CHECK(m.aiw == 0.0);

  try {
    forecast::metrics_from_cells(zero, MatrixXd::Zero(2, 3), zero, zero);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AlignmentMismatch);
  }

  RandomSource rng(53);
  for (int rep = 0; rep < 20; ++rep) {
    MatrixXd p = rnd(4, 3, rng), t = rnd(4, 3, rng);
    auto r = forecast::metrics_from_cells(p, t, p.array() - 1.0, p.array() + 1.0);
    CHECK(r.rmse >= r.mae);
  }
}

TEST_CASE("metrics on the original scale") {
  data::TransformRecord rec;
  rec.kind = data::TransformKind::Log;
  forecast::ForecastResult res;
  res.horizon = 2;
  res.median = MatrixXd::Constant(1, 2, std::log(100.0));
  res.lower = MatrixXd::Constant(1, 2, std::log(90.0));
  res.upper = MatrixXd::Constant(1, 2, std::log(110.0));
  MatrixXd truth(1, 2);
  truth << std::log(104.0), std::log(95.0);
  auto m = forecast::forecast_metrics(res, truth, {rec});
  CHECK(m.mae == doctest::Approx(4.5).epsilon(1e-10));
  CHECK(m.rmse == doctest::Approx(std::sqrt((16.0 + 25.0) / 2.0)).epsilon(1e-10));
  CHECK(m.aiw == doctest::Approx(20.0).epsilon(1e-10));
  CHECK(m.cp == 1.0);
}

TEST_CASE("unconditional predictive moments") {
  VectorXd hy(2), hx(1);
  hy << 1.0, 2.0;
  hx << 1.0;
  SdSemParams p = scalar_params(0.5, 0.0, 0.4, hy, hx, 1.0, 0.04);
  p.meas.mean_y << 0.3, -0.1;
  auto chain = single(p, last_state(2.0, 0.0));
  forecast::ForecastOptions opt;
  opt.horizon = 3;
  opt.replicates = 40000;
  RandomSource rng(54);
  auto res = forecast::forecast_unconditional({chain}, opt, rng);
  REQUIRE(res.n_draws() == 40000);
  const double n = 40000.0;
  for (int k = 1; k <= 3; ++k) {
    double mg = 2.0 * std::pow(0.5, k), vg = 0.0;
    for (int j = 0; j < k; ++j) vg += std::pow(0.25, j);
    for (int i = 0; i < 2; ++i) {
      double mu = p.meas.mean_y(i) + hy(i) * mg;
      double var = hy(i) * hy(i) * vg + 0.04;
      double s = 0.0, ss = 0.0;
      for (const auto& d : res.draws) {
        s += d(i, k - 1);
        ss += d(i, k - 1) * d(i, k - 1);
      }
      double mean = s / n, v = ss / n - mean * mean;
      CHECK(std::abs(mean - mu) < 4.0 * std::sqrt(var / n));
      CHECK(std::abs(v / var - 1.0) < 0.04);
    }
  }
  CHECK(res.lower(0, 0) < res.median(0, 0));
  CHECK(res.median(0, 0) < res.upper(0, 0));
}

TEST_CASE("conditional forecast follows the recursion") {
  VectorXd hy(3), hx(2);
  hy << 1.0, -0.5, 2.0;
  hx << 1.0, 0.5;
  SdSemParams p = scalar_params(0.6, 0.4, 0.9, hy, hx, 1.0, 0.01);
  p.meas.mean_x << 0.2, -0.3;
  auto chain = single(p, last_state(1.5, -1.0));
  VectorXd fpath(4);
  fpath << 0.5, 1.0, -2.0, 0.25;
  MatrixXd x = (hx * fpath.transpose()).colwise() + p.meas.mean_x;
  forecast::ForecastOptions opt;
  opt.deterministic = true;
  RandomSource rng(55);
  auto res = forecast::forecast_conditional({chain}, x, opt, rng);
  REQUIRE(res.n_draws() == 1);
  double g = 1.5, f = -1.0;
  for (int k = 0; k < 4; ++k) {
    g = 0.6 * g + 0.4 * f;
    f = fpath(k);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(res.draws[0](i, k) - hy(i) * g) < 1e-12);
  }

  opt.deterministic = false;
  opt.replicates = 20000;
  auto noisy = forecast::forecast_conditional({chain}, x, opt, rng);
  MatrixXd avg = MatrixXd::Zero(3, 4);
  for (const auto& d : noisy.draws) avg += d;
  avg /= 20000.0;
  CHECK((avg - res.draws[0]).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("explosive and rank-deficient draws are counted") {
  VectorXd hy = VectorXd::Ones(2), hx = VectorXd::Ones(2);
  SdSemParams ok = scalar_params(0.5, 0.1, 0.5, hy, hx, 0.1, 0.01);
  SdSemParams boom = scalar_params(3.0, 0.0, 0.5, hy, hx, 0.1, 0.01);
  SdSemParams flat = ok;
  flat.meas.H_x.setZero();
  mcmc::PosteriorDraws chain;
  for (const auto* p : {&ok, &boom, &flat}) {
    chain.params.push_back(*p);
    chain.factors.push_back(last_state(1e7, 0.0));
    chain.deviance.push_back(0.0);
  }
  chain.factors[0] = last_state(1.0, 0.0);
  chain.factors[2] = last_state(1.0, 0.0);
  forecast::ForecastOptions opt;
  opt.replicates = 5;
  RandomSource rng(56);
  auto u = forecast::forecast_unconditional({chain}, opt, rng);
  CHECK(u.n_explosive == 5);
  CHECK(u.n_draws() == 10);
  auto c = forecast::forecast_conditional({chain}, MatrixXd::Zero(2, 4), opt, rng);
  CHECK(c.n_skipped == 1);
  CHECK(c.n_explosive == 5);
  CHECK(c.n_draws() == 5);
  CHECK_THROWS_AS(forecast::forecast_unconditional({mcmc::PosteriorDraws{}}, opt, rng), Error);
}

TEST_CASE("companion system for multipliers") {
  ssm::FactorDynamics dyn;
  dyn.C = {MatrixXd::Constant(1, 1, 0.5), MatrixXd::Constant(1, 1, 0.2)};
  dyn.D = {MatrixXd::Constant(1, 1, 0.3), MatrixXd::Constant(1, 1, 0.1)};
  dyn.R = {MatrixXd::Constant(1, 1, 0.9), MatrixXd::Zero(1, 1)};
  dyn.state_cov_g = dyn.state_cov_f = MatrixXd::Identity(1, 1);
  auto jqb = irf::build_jqb(dyn);
  MatrixXd q(4, 4);
  q << 0.5, 0.2, 0.3, 0.1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0;
  CHECK(jqb.transition == q);
  CHECK(jqb.input == Eigen::Vector4d(0, 0, 1, 0));
  CHECK(jqb.selector == Eigen::RowVector4d(1, 0, 0, 0));

  // Gamma_k = J Q^k B by direct powers
  auto g = irf::impulse_response(jqb, MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1), 6);
  MatrixXd pw = MatrixXd::Identity(4, 4);
  for (int k = 0; k <= 6; ++k) {
    CHECK(std::abs(g[k](0, 0) - (jqb.selector * pw * jqb.input)(0, 0)) < 1e-14);
    pw = q * pw;
  }
  CHECK(g[0](0, 0) == 0.0);
  CHECK(g[1](0, 0) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(g[2](0, 0) == doctest::Approx(0.5 * 0.3 + 0.1).epsilon(1e-14));
}

TEST_CASE("scalar multipliers") {
  SdSemParams p = scalar_params(0.5, 0.3, 0.8, VectorXd::Ones(1), VectorXd::Ones(1), 1.0, 1.0);
  auto g = irf::impulse_response(p, 200);
  CHECK(g[0](0, 0) == 0.0);
  for (int k = 1; k <= 10; ++k) CHECK(std::abs(g[k](0, 0) - 0.3 * std::pow(0.5, k - 1)) < 1e-14);
  CHECK(std::abs(g[200](0, 0)) < 1e-12);

  RandomSource rng(57);
  MatrixXd hy = rnd(4, 2, rng), hx = rnd(5, 2, rng);
  ssm::FactorDynamics dyn;
  dyn.C = {0.4 * MatrixXd::Identity(2, 2)};
  dyn.D = {rnd(2, 2, rng)};
  dyn.R = {0.5 * MatrixXd::Identity(2, 2)};
  dyn.state_cov_g = dyn.state_cov_f = MatrixXd::Identity(2, 2);
  auto gm = irf::impulse_response(irf::build_jqb(dyn), hy, hx, 3);
  CHECK((gm[1] - hy * dyn.D[0] * linalg::pinv(hx)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(gm[0].isZero(0.0));
  CHECK(gm[1].rows() == 4);
  CHECK(gm[1].cols() == 5);

  MatrixXd flat = MatrixXd::Zero(5, 2);
  try {
    irf::impulse_response(irf::build_jqb(dyn), hy, flat, 3);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficientLoadings);
  }
}

TEST_CASE("multipliers match a perturbed conditional forecast") {
  RandomSource rng(58);
  SyntheticSpec spec;
  spec.T = 60;
  SdSemParams p = synthetic_params(spec, rng);
  SyntheticTruth sim = simulate(p, grid_layout(3, 3, 60), 60, rng);
  auto chain = single(p, sim.factors);
  const int K = 7;
  MatrixXd x = rnd(9, K, rng);
  forecast::ForecastOptions opt;
  opt.deterministic = true;
  auto base = forecast::forecast_conditional({chain}, x, opt, rng);
  auto gam = irf::impulse_response(p, K - 1);
  const double delta = 1e-3;
  for (int j : {0, 4, 8}) {
    MatrixXd xs = x;
    xs(j, 0) += delta;
    auto shocked = forecast::forecast_conditional({chain}, xs, opt, rng);
    for (int k = 0; k < K; ++k) {
      VectorXd resp = (shocked.draws[0].col(k) - base.draws[0].col(k)) / delta;
      CHECK((resp - gam[k].col(j)).cwiseAbs().maxCoeff() < 1e-7 * std::max(1.0, gam[k].col(j).cwiseAbs().maxCoeff()));
    }
    CHECK((shocked.draws[0].col(0) - base.draws[0].col(0)).isZero(0.0));
    CHECK_FALSE((shocked.draws[0].col(1) - base.draws[0].col(1)).isZero(0.0));
  }
}

TEST_CASE("multiplier posterior summaries") {
  RandomSource rng(59);
  mcmc::PosteriorDraws chain;
  for (int d = 0; d < 40; ++d) {
    double c = 0.2 + 0.6 * rng.uniform(), dd = rng.normal();
    chain.params.push_back(scalar_params(c, dd, 0.5, Eigen::Vector2d(1.0, 0.5), VectorXd::Ones(1), 1.0, 1.0));
    chain.factors.push_back(last_state(0.0, 0.0));
    chain.deviance.push_back(0.0);
  }
  auto s = irf::multiplier_posterior(chain, 5);
  REQUIRE(s.n_draws() == 40);
  for (int k = 0; k <= 5; ++k) {
    CHECK((s.p05[k].array() <= s.p16[k].array()).all());
    CHECK((s.p16[k].array() <= s.p84[k].array()).all());
    CHECK((s.p84[k].array() <= s.p95[k].array()).all());
    MatrixXd avg = MatrixXd::Zero(2, 1);
    for (const auto& d : s.draws) avg += d[k];
    CHECK((avg / 40.0 - s.mean[k]).cwiseAbs().maxCoeff() < 1e-12);
  }

  mcmc::PosteriorDraws one;
  one.params.push_back(chain.params[3]);
  one.factors.push_back(chain.factors[3]);
  auto s1 = irf::multiplier_posterior(one, 4);
  auto direct = irf::impulse_response(chain.params[3], 4);
  for (int k = 0; k <= 4; ++k) {
    CHECK(s1.mean[k] == direct[k]);
    CHECK(s1.p05[k] == direct[k]);
    CHECK(s1.p95[k] == direct[k]);
  }
  CHECK_THROWS_AS(irf::multiplier_posterior(mcmc::PosteriorDraws{}, 3), Error);
}
