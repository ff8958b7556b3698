#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "sdsem/config.hpp"
#include "sdsem/draws_io.hpp"
#include "sdsem/errors.hpp"
#include "sdsem/panel.hpp"

namespace fs = std::filesystem;
using namespace sdsem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("sdsem_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoError;
}

int run(const std::string& cmd) {
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kPanel =
    "site,period,variable,value,region\n"
    "b,2001Q1,y,1.0,north\nb,2001Q1,x,2.0,north\nb,2001Q2,y,1.5,north\nb,2001Q2,x,2.5,north\n"
    "a,2001Q1,y,3.0,south\na,2001Q1,x,4.0,south\na,2001Q2,y,3.5,south\na,2001Q2,x,4.5,south\n"
    "a,2001Q2,z,9.0,south\n";

}  // namespace

TEST_CASE("panel loading") {
  fs::path d = scratch("panel");
  put(d / "panel.csv", kPanel);
  put(d / "adj.csv", "site_a,site_b\na,b\n");
  auto p = data::load_panel((d / "panel.csv").string(), (d / "adj.csv").string(), {"y", {"x"}});
  CHECK(p.sites == std::vector<std::string>{"a", "b"});
  CHECK(p.regions == std::vector<std::string>{"south", "north"});
  CHECK(p.periods == std::vector<std::string>{"2001Q1", "2001Q2"});
  CHECK(p.y(0, 1) == 3.5);
  CHECK(p.x(1, 0) == 2.0);
  CHECK(p.adjacency.entries(0, 1) == 1);
  CHECK(p.head(1).n_periods() == 1);
  CHECK(p.tail(1).periods.front() == "2001Q2");

  put(d / "gap.csv", "site,period,variable,value\na,2001Q1,y,1\na,2001Q1,x,1\na,2001Q3,y,1\na,2001Q3,x,1\n");
  CHECK(code_of([&] { data::load_panel((d / "gap.csv").string(), "", {"y", {"x"}}); }) == ErrorCode::GapInTimeIndex);

  put(d / "bad_adj.csv", "site_a,site_b\na,c\n");
  CHECK(code_of([&] { data::load_panel((d / "panel.csv").string(), (d / "bad_adj.csv").string(), {"y", {"x"}}); }) ==
        ErrorCode::UnknownSiteInAdjacency);
  put(d / "loop.csv", "site_a,site_b\na,a\n");
  CHECK(code_of([&] { data::load_adjacency((d / "loop.csv").string(), {"a", "b"}); }) == ErrorCode::InvalidAdjacency);
  put(d / "matrix.csv", ",a,b\na,0,1\nb,1,0\n");
  CHECK(data::load_adjacency((d / "matrix.csv").string(), {"a", "b"}).n_edges() == 1);

  put(d / "dup.csv", "site,period,variable,value\na,2001Q1,y,1\na,2001Q1,y,2\na,2001Q1,x,1\n");
  CHECK(code_of([&] { data::load_panel((d / "dup.csv").string(), "", {"y", {"x"}}); }) == ErrorCode::SchemaError);
  CHECK(code_of([&] { data::load_panel((d / "missing.csv").string(), "", {"y", {"x"}}); }) == ErrorCode::IoError);

  fs::path again = d / "written.csv";
  data::write_panel(p, again.string(), (d / "written_adj.csv").string());
  auto q = data::load_panel(again.string(), (d / "written_adj.csv").string(), {"y", {"x"}});
  CHECK(q.y == p.y);
  CHECK(q.x == p.x);
  CHECK(q.adjacency.entries == p.adjacency.entries);
}

TEST_CASE("quarter labels") {
  auto q = data::Quarter::parse("1999Q4");
  CHECK(q.next().label() == "2000Q1");
  CHECK(code_of([] { data::Quarter::parse("1999Q5"); }) == ErrorCode::SchemaError);
  CHECK(code_of([] { data::Quarter::parse("1999-4"); }) == ErrorCode::SchemaError);
}

TEST_CASE("geometric interpolation") {
  auto flat = data::geometric_interpolate({50.0, 50.0, 50.0});
  REQUIRE(flat.size() == 12);
  for (double v : flat) CHECK(v == doctest::Approx(50.0).epsilon(1e-14));

  const double next = 100.0 * std::pow(1.04, 4);
  auto g = data::geometric_interpolate({100.0, next});
  REQUIRE(g.size() == 8);
  CHECK(g[0] == 100.0);
  CHECK(g[1] == doctest::Approx(104.0).epsilon(1e-13));
  CHECK(g[2] == doctest::Approx(108.16).epsilon(1e-13));
  CHECK(g[3] == doctest::Approx(112.4864).epsilon(1e-13));
  CHECK(g[4] == doctest::Approx(next).epsilon(1e-13));
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] / g[i - 1] == doctest::Approx(1.04).epsilon(1e-12));
  CHECK(code_of([] { data::geometric_interpolate({1.0, -1.0}); }) == ErrorCode::NonPositiveValue);
}

TEST_CASE("deflate and log") {
  auto t = data::deflate_and_log({200.0, 330.0, 47.5}, {2.0, 1.1, 0.95});
  CHECK(t.values[0] == doctest::Approx(std::log(100.0)).epsilon(1e-14));
  CHECK(t.values[0] == doctest::Approx(4.60517).epsilon(1e-6));
  auto back = data::invert_transform(t);
  CHECK(back[0] == doctest::Approx(200.0).epsilon(1e-13));
  CHECK(back[1] == doctest::Approx(330.0).epsilon(1e-13));
  CHECK(back[2] == doctest::Approx(47.5).epsilon(1e-13));
  CHECK(code_of([] { data::deflate_and_log({1.0, 0.0}, {1.0, 1.0}); }) == ErrorCode::NonPositiveValue);
  CHECK(code_of([] { data::deflate_and_log({1.0}, {1.0, 1.0}); }) == ErrorCode::AlignmentMismatch);
  CHECK(code_of([&] { t.record.invert(0.0, 3); }) == ErrorCode::AlignmentMismatch);
}

TEST_CASE("run configuration") {
  RunConfig a = parse_config("# comment\nm = 3\nseed = 17\nx_vars = x1, x2\n");
  CHECK(a.m == 3);
  CHECK(a.require_seed() == 17);
  CHECK(a.x_vars == std::vector<std::string>{"x1", "x2"});
  RunConfig b = parse_config("m = 3\nseed = 17\nx_vars = x1, x2\n");
  CHECK(a.hash() == b.hash());
  b.set("thin", "7");
  CHECK(a.hash() != b.hash());
  b.set("thin", "5");
  CHECK(a.hash() == b.hash());
  b.set("seed", "18");
  CHECK(a.hash() != b.hash());

  CHECK(code_of([] { parse_config("colour = blue\nseed = 1\n"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config("m = two\nseed = 1\n"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config("m = 2\n").require_seed(); }) == ErrorCode::ConfigError);
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);

  RunConfig desk = load_config(SDSEM_SOURCE_DIR "/configs/desk.cfg");
  CHECK(desk.require_seed() == 20240611);
  CHECK(desk.chains == 4);
}

TEST_CASE("chain files round trip") {
  fs::path d = scratch("draws");
  RandomSource rng(71);
  SyntheticSpec spec;
  spec.T = 30;
  SyntheticTruth sim = simulate(synthetic_params(spec, rng), grid_layout(3, 3, 30), 30, rng);
  mcmc::McmcConfig c;
  c.iterations = 40;
  c.burn_in = 20;
  c.thin = 4;
  c.seed = 71;
  c.ssvs_scales = uniform_scales(2, 2, 1, 1, 2, 1.0);
  auto chain = mcmc::run_chain(sim.panel, c, 0);
  std::string prefix = (d / "chain_0").string();
  io::write_chain(prefix, chain, "abc", sim.panel);
  auto back = io::read_chain(prefix);
  REQUIRE(back.size() == chain.size());
  CHECK(back.deviance == chain.deviance);
  for (std::size_t i = 0; i < chain.size(); ++i) {
    CHECK(io::param_columns(back.params[i]) == io::param_columns(chain.params[i]));
    CHECK(back.factors[i].values == chain.factors[i].values);
    CHECK(back.factors[i].presample == chain.factors[i].presample);
  }
  CHECK(back.meta.seed == 71);
  CHECK(io::chain_prefixes(d.string()) == std::vector<std::string>{prefix});
  CHECK(code_of([&] { io::read_chain((d / "chain_9").string()); }) == ErrorCode::IoError);
}

TEST_CASE("future predictor files") {
  fs::path d = scratch("future");
  put(d / "fx.csv",
      "site,period,variable,value\nb,2002Q1,x,2\na,2002Q1,x,1\na,2001Q4,x,0.5\nb,2001Q4,x,1.5\na,2002Q1,y,7\n");
  auto fx = data::load_future_x((d / "fx.csv").string(), {"a", "b"}, {"x"});
  CHECK(fx.periods == std::vector<std::string>{"2001Q4", "2002Q1"});
  Eigen::MatrixXd expect(2, 2);
  expect << 0.5, 1, 1.5, 2;
  CHECK(fx.x == expect);
  put(d / "gap.csv", "site,period,variable,value\na,2001Q4,x,1\na,2002Q2,x,1\n");
  CHECK(code_of([&] { data::load_future_x((d / "gap.csv").string(), {"a"}, {"x"}); }) == ErrorCode::GapInTimeIndex);
  put(d / "stranger.csv", "site,period,variable,value\nq,2001Q4,x,1\n");
  CHECK(code_of([&] { data::load_future_x((d / "stranger.csv").string(), {"a"}, {"x"}); }) == ErrorCode::SchemaError);
}

TEST_CASE("command line") {
  const std::string cli = SDSEM_CLI_PATH;
  fs::path d = scratch("cli");
  const std::string err = (d / "err.txt").string();
  put(d / "tiny.cfg",
      "iterations = 60\nburn_in = 30\nthin = 3\nchains = 2\nprelim_iterations = 20\nseed = 5\n"
      "sim_periods = 40\nholdout = 4\nhorizon = 4\nirf_horizon = 3\n");
  const std::string cfg = " -c " + (d / "tiny.cfg").string();

  CHECK(run(cli + " >/dev/null 2>" + err) == 2);
  CHECK(run(cli + " launch >/dev/null 2>" + err) == 2);
  CHECK(slurp(err).find("\"error\":\"UsageError\"") != std::string::npos);
  CHECK(run(cli + " fit --data /nonexistent.csv" + cfg + " >/dev/null 2>" + err) == 1);
  CHECK(slurp(err).find("\"error\":\"IoError\"") != std::string::npos);
  put(d / "noseed.cfg", "m = 2\n");
  CHECK(run(cli + " simulate -c " + (d / "noseed.cfg").string() + " --out-dir " + (d / "x").string() +
            " >/dev/null 2>" + err) == 1);
  CHECK(slurp(err).find("ConfigError") != std::string::npos);

  for (const char* tag : {"r1", "r2"}) {
    const std::string out = (d / tag).string();
    const std::string data = " --data " + out + "/panel.csv --adjacency " + out + "/adjacency.csv";
    REQUIRE(run(cli + " simulate" + cfg + " --out-dir " + out + " >" + out + ".log 2>&1") == 0);
    REQUIRE(run(cli + " fit" + cfg + data + " --out-dir " + out + "/draws >>" + out + ".log 2>&1") == 0);
    REQUIRE(run(cli + " forecast" + cfg + data + " --draws " + out + "/draws --out " + out + "/fc.csv >>" + out +
                ".log 2>&1") == 0);
    REQUIRE(run(cli + " irf" + cfg + data + " --draws " + out + "/draws --out " + out + "/irf.csv >>" + out +
                ".log 2>&1") == 0);
    REQUIRE(run(cli + " ranks" + cfg + " --draws " + out + "/draws --out " + out + "/ranks.csv >>" + out +
                ".log 2>&1") == 0);
    CHECK(run(cli + " forecast --conditional" + cfg + data + " --draws " + out + "/draws --out " + out +
              "/c.csv 2>" + err + " >/dev/null") == 2);
    CHECK(slurp(err).find("--future-x") != std::string::npos);
  }
  CHECK(slurp(d / "r1.log").find("seed=5 config_hash=") != std::string::npos);
  for (const char* f : {"panel.csv", "draws/chain_0.draws.csv", "draws/chain_1.factors.csv", "fc.csv",
                        "fc.csv.metrics.json", "irf.csv", "ranks.csv"}) {
    INFO(f);
    std::string a = slurp(d / "r1" / f);
    CHECK(!a.empty());
    CHECK(a == slurp(d / "r2" / f));
  }
  CHECK(slurp(d / "r1/fc.csv").rfind("site,step,median,lower,upper,n_draws\n", 0) == 0);
  CHECK(slurp(d / "r1/irf.csv").rfind("response_site,shock_variable,shock_site,horizon,", 0) == 0);
  fs::remove_all(d.parent_path());
}
