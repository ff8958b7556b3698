#include <doctest.h>

#include "sdsem/ecm.hpp"
#include "sdsem/errors.hpp"
#include "sdsem/random.hpp"

using namespace sdsem;
using namespace sdsem::ecm;

namespace {

MatrixXd rnd(int r, int c, RandomSource& rng) {
  MatrixXd a(r, c);
  for (int i = 0; i < a.size(); ++i) a(i) = rng.normal();
  return a;
}

MatrixXd block_upper(int m, int l, RandomSource& rng) {
  MatrixXd a = rnd(m + l, m + l, rng);
  a.bottomLeftCorner(l, m).setZero();
  return a;
}

EcmBlocks random_blocks(int m, int l, int rd, int rf, int order, RandomSource& rng) {
  EcmBlocks b = EcmBlocks::zeros(m, l, rd, rf, order);
  b.A = rnd(m, rd, rng);
  b.B1 = rnd(m, rd, rng);
  b.B2 = rnd(l, rd, rng);
  b.A2 = rnd(m, rf, rng);
  b.Af = rnd(l, rf, rng);
  b.Bf = rnd(l, rf, rng);
  for (auto& k : b.K) k = rnd(m, m + l, rng);
  for (auto& p : b.Phi2) p = rnd(l, l, rng);
  return b;
}

}  // namespace

TEST_CASE("var to ecm examples") {
  EcmForm e = var_to_ecm({MatrixXd::Identity(2, 2)}, 1);
  CHECK(e.longrun.isZero(0.0));
  CHECK(e.shortrun.empty());
  e = var_to_ecm({MatrixXd::Constant(1, 1, 0.5)}, 1);
  CHECK(e.longrun(0, 0) == -0.5);
  e = var_to_ecm({0.5 * MatrixXd::Identity(2, 2), 0.3 * MatrixXd::Identity(2, 2)}, 1);
  CHECK((e.longrun + 0.2 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((e.shortrun[0] + 0.3 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);

  EcmForm f;
  f.longrun = -0.2 * MatrixXd::Identity(2, 2);
  f.shortrun = {-0.3 * MatrixXd::Identity(2, 2)};
  auto phis = ecm_to_var(f);
  CHECK((phis[0] - 0.5 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((phis[1] - 0.3 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);

  EcmForm zero;
  zero.longrun = MatrixXd::Zero(3, 3);
  CHECK(ecm_to_var(zero)[0].isIdentity(0.0));
}

TEST_CASE("var ecm round trip") {
  RandomSource rng(21);
  for (int m = 1; m <= 3; ++m)
    for (int l = 1; l <= 3; ++l)
      for (int p = 1; p <= 3; ++p)
        for (int rep = 0; rep < 4; ++rep) {
          std::vector<MatrixXd> phis;
          for (int i = 0; i < p; ++i) phis.push_back(block_upper(m, l, rng));
          EcmForm e = var_to_ecm(phis, m);
          CHECK(e.longrun.bottomLeftCorner(l, m).isZero(0.0));
          auto back = ecm_to_var(e);
          REQUIRE(back.size() == phis.size());
          for (int i = 0; i < p; ++i) CHECK((back[i] - phis[i]).cwiseAbs().maxCoeff() < 1e-12);
          EcmForm again = var_to_ecm(back, m);
          CHECK((again.longrun - e.longrun).cwiseAbs().maxCoeff() < 1e-12);
        }
}

TEST_CASE("block structure is enforced") {
  MatrixXd bad = MatrixXd::Identity(3, 3);
  bad(2, 0) = 0.1;
  try {
    var_to_ecm({bad}, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BlockStructureViolation);
  }
}

TEST_CASE("blocks to ecm") {
  CHECK(blocks_to_ecm(EcmBlocks::zeros(2, 2, 1, 1, 2)).longrun.isZero(0.0));
  CHECK(blocks_to_ecm(EcmBlocks::zeros(1, 1, 0, 0, 1)).longrun.isZero(0.0));

  EcmBlocks b = EcmBlocks::zeros(2, 2, 1, 2, 1);
  b.A << 1, 0;
  b.B1 << 1, -1;
  b.Af = -0.5 * MatrixXd::Identity(2, 2);
  b.Bf = MatrixXd::Identity(2, 2);
  EcmForm e = blocks_to_ecm(b);
  MatrixXd ul(2, 2);
  ul << 1, -1, 0, 0;
  CHECK((e.longrun.topLeftCorner(2, 2) - ul).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((e.longrun.bottomRightCorner(2, 2) + 0.5 * MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(e.longrun.topRightCorner(2, 2).isZero(0.0));

  RandomSource rng(22);
  for (int rep = 0; rep < 50; ++rep) {
    EcmBlocks r = random_blocks(3, 2, 2, 1, 3, rng);
    EcmForm f = blocks_to_ecm(r);
    // dense reconstruction: Atilde = -[[-A B1', -(A B2' + A2 Bf')], [0, -Af Bf']]
    MatrixXd inner = MatrixXd::Zero(5, 5);
    inner.topLeftCorner(3, 3) = -r.A * r.B1.transpose();
    inner.topRightCorner(3, 2) = -(r.A * r.B2.transpose() + r.A2 * r.Bf.transpose());
    inner.bottomRightCorner(2, 2) = -r.Af * r.Bf.transpose();
    CHECK((f.longrun - (-inner)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(f.longrun.bottomLeftCorner(2, 3).isZero(0.0));
    for (std::size_t i = 0; i < f.shortrun.size(); ++i) {
      CHECK(f.shortrun[i].bottomLeftCorner(2, 3).isZero(0.0));
      CHECK((f.shortrun[i].topRows(3) - r.K[i]).isZero(0.0));
      CHECK((f.shortrun[i].bottomRightCorner(2, 2) - r.Phi2[i]).isZero(0.0));
    }
  }
}

TEST_CASE("no cross cointegration iff the cross block vanishes") {
  RandomSource rng(23);
  EcmBlocks b = random_blocks(2, 2, 1, 1, 1, rng);
  b.B2.setZero();
  b.A2.setZero();
  CHECK(estimate_ranks(b).r_c == 0);
  CHECK(blocks_to_ecm(b).longrun.topRightCorner(2, 2).isZero(0.0));
  b.A2(0, 0) = 1.0;
  CHECK(estimate_ranks(b).r_c > 0);
  CHECK_FALSE(blocks_to_ecm(b).longrun.topRightCorner(2, 2).isZero(0.0));
}

TEST_CASE("rank estimate") {
  CHECK(rank_estimate(MatrixXd::Zero(3, 3)) == 0);
  MatrixXd d = Eigen::Vector3d(1.2, 0.3, 0.04).asDiagonal();
  CHECK(rank_estimate(d, 0.05) == 2);
  CHECK(rank_estimate(MatrixXd::Identity(3, 3)) == 3);
  RandomSource rng(24);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::HouseholderQR<MatrixXd> q1(rnd(3, 3, rng)), q2(rnd(3, 3, rng));
    MatrixXd u = q1.householderQ(), v = q2.householderQ();
    CHECK(rank_estimate(u * d * v) == 2);
  }
}

TEST_CASE("rank posterior tables") {
  RandomSource rng(25);
  std::vector<EcmBlocks> same(5, EcmBlocks::zeros(2, 2, 1, 1, 1));
  RankPosterior p = rank_posterior(same);
  CHECK(p.probs[0][0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.mode(0) == 0);

  std::vector<EcmBlocks> mixed;
  for (int i = 0; i < 37; ++i) mixed.push_back(random_blocks(2, 2, 1, 1, 2, rng));
  for (int i = 0; i < 13; ++i) mixed.push_back(EcmBlocks::zeros(2, 2, 1, 1, 2));
  p = rank_posterior(mixed);
  for (int c = 0; c < 5; ++c) {
    double total = 0;
    for (const auto& row : p.probs) total += row[static_cast<std::size_t>(c)];
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
  CHECK(p.to_csv().rfind("rank,r_f,r_d,r_c,r_c1,r_c2\n", 0) == 0);
  CHECK_THROWS_AS(rank_posterior({}), Error);
}
