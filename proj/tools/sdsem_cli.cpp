#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdsem/config.hpp"
#include "sdsem/diagnostics.hpp"
#include "sdsem/draws_io.hpp"
#include "sdsem/ecm.hpp"
#include "sdsem/errors.hpp"
#include "sdsem/forecasting.hpp"
#include "sdsem/model_selection.hpp"
#include "sdsem/multipliers.hpp"

namespace fs = std::filesystem;
using namespace sdsem;

namespace {

struct Common {
  std::string config_path;
  std::string seed;
  std::string data = "panel.csv";
  std::string adjacency;
};

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  if (!c.seed.empty()) cfg.set("seed", c.seed);
  cfg.validate();
  cfg.require_seed();
  std::cout << "seed=" << *cfg.seed << " config_hash=" << cfg.hash() << std::endl;
  return cfg;
}

data::PanelDataset load_data(const Common& c, const RunConfig& cfg) {
  return data::load_panel(c.data, c.adjacency, data::PanelSchema{cfg.y_var, cfg.x_vars});
}

std::vector<mcmc::PosteriorDraws> load_chains(const std::string& dir) {
  std::vector<mcmc::PosteriorDraws> chains;
  for (const auto& prefix : io::chain_prefixes(dir)) chains.push_back(io::read_chain(prefix));
  require(!chains.empty(), ErrorCode::EmptyChain, "no chain files under " + dir);
  return chains;
}

void ensure_parent(const std::string& path) {
  fs::path p = fs::path(path).parent_path();
  if (!p.empty()) fs::create_directories(p);
}

void cmd_simulate(const Common& c, const std::string& out_dir) {
  RunConfig cfg = resolve_config(c);
  fs::create_directories(out_dir);
  SyntheticSpec spec;
  spec.grid_rows = cfg.sim_rows;
  spec.grid_cols = cfg.sim_cols;
  spec.m = cfg.m;
  spec.l = cfg.l;
  spec.order = cfg.order;
  spec.T = cfg.sim_periods;
  spec.obs_sd = cfg.sim_obs_sd;
  spec.state_sd = cfg.sim_state_sd;
  spec.spatial_ftilde = cfg.sim_spatial;
  RandomSource rng = RandomSource::stream(*cfg.seed, 7000);
  SdSemParams truth = synthetic_params(spec, rng);
  SyntheticTruth sim = simulate(truth, grid_layout(spec.grid_rows, spec.grid_cols, spec.T), spec.T, rng);
  sim.panel.y_vars = {cfg.y_var};
  sim.panel.x_vars = cfg.x_vars.empty() ? std::vector<std::string>{"x"} : std::vector<std::string>{cfg.x_vars[0]};
  data::write_panel(sim.panel, (fs::path(out_dir) / "panel.csv").string(),
                    (fs::path(out_dir) / "adjacency.csv").string());
  mcmc::PosteriorDraws one;
  one.params.push_back(sim.params);
  one.factors.push_back(sim.factors);
  one.deviance.push_back(deviance(sim.params, sim.panel.y, sim.panel.x, sim.factors));
  one.meta.seed = *cfg.seed;
  io::write_chain((fs::path(out_dir) / "truth").string(), one, cfg.hash(), sim.panel);
  std::cout << "wrote " << out_dir << "/panel.csv, adjacency.csv, truth.*" << std::endl;
}

void cmd_fit(const Common& c, const std::string& out_dir) {
  RunConfig cfg = resolve_config(c);
  data::PanelDataset panel = load_data(c, cfg);
  if (cfg.holdout > 0) {
    require(cfg.holdout < panel.n_periods(), ErrorCode::ConfigError, "holdout leaves no periods to fit");
    panel = panel.head(panel.n_periods() - cfg.holdout);
  }
  mcmc::McmcConfig mc = to_mcmc_config(cfg, panel);
  auto chains = mcmc::run_chains(panel, mc);
  fs::create_directories(out_dir);
  for (std::size_t k = 0; k < chains.size(); ++k)
    io::write_chain((fs::path(out_dir) / ("chain_" + std::to_string(k))).string(), chains[k], cfg.hash(), panel);
  std::cout << "wrote " << chains.size() << " chains of " << chains.front().size() << " draws to " << out_dir
            << std::endl;
}

void cmd_ranks(const Common& c, const std::string& draws_dir, const std::string& out) {
  RunConfig cfg = resolve_config(c);
  auto chains = load_chains(draws_dir);
  std::vector<ecm::EcmBlocks> blocks;
  for (const auto& ch : chains)
    for (const auto& p : ch.params) blocks.push_back(p.ecm);
  ecm::RankPosterior post = ecm::rank_posterior(blocks, cfg.rank_threshold);
  ensure_parent(out);
  io::write_file_atomic(out, post.to_csv());
  std::cout << "modal ranks r_f=" << post.mode(0) << " r_d=" << post.mode(1) << " r_c=" << post.mode(2)
            << " r_c1=" << post.mode(3) << " r_c2=" << post.mode(4) << std::endl;
}

void cmd_forecast(const Common& c, const std::string& draws_dir, const std::string& out, bool conditional,
                  const std::string& future_x) {
  if (conditional && future_x.empty())
    throw Error(ErrorCode::UsageError, "--conditional requires --future-x");
  if (!conditional && !future_x.empty()) throw Error(ErrorCode::UsageError, "--future-x requires --conditional");
  RunConfig cfg = resolve_config(c);
  data::PanelDataset panel = load_data(c, cfg);
  auto chains = load_chains(draws_dir);
  const int fitted = chains.front().factors.front().length();
  require(fitted <= panel.n_periods(), ErrorCode::AlignmentMismatch, "draws cover more periods than the panel");

  forecast::ForecastOptions opt;
  opt.horizon = cfg.horizon;
  opt.level = cfg.level;
  opt.replicates = cfg.forecast_replicates;
  opt.deterministic = cfg.deterministic_conditional;
  RandomSource rng = RandomSource::stream(*cfg.seed, 5000);
  forecast::ForecastResult res;
  if (conditional) {
    auto fx = data::load_future_x(future_x, panel.sites, panel.x_vars);
    res = forecast::forecast_conditional(chains, fx.x, opt, rng);
  } else {
    res = forecast::forecast_unconditional(chains, opt, rng);
  }
  ensure_parent(out);
  data::PanelDataset layout = panel;
  io::write_file_atomic(out, forecast::forecast_csv(res, layout));

  const int available = panel.n_periods() - fitted;
  const int cells = std::min(available, res.horizon);
  if (cells > 0) {
    forecast::ForecastResult cut = res;
    cut.median = res.median.leftCols(cells);
    cut.lower = res.lower.leftCols(cells);
    cut.upper = res.upper.leftCols(cells);
    MatrixXd truth = panel.y.middleCols(fitted, cells);
    auto metrics = forecast::forecast_metrics(cut, truth, panel.y_transforms, static_cast<std::size_t>(fitted));
    io::write_file_atomic(out + ".metrics.json", forecast::metrics_json(metrics, res));
    std::cout << "rmse=" << metrics.rmse << " mae=" << metrics.mae << " cp=" << metrics.cp << " aiw=" << metrics.aiw
              << std::endl;
  }
  std::cout << "draws=" << res.n_draws() << " explosive=" << res.n_explosive << " skipped=" << res.n_skipped
            << std::endl;
}

void cmd_irf(const Common& c, const std::string& draws_dir, const std::string& out) {
  RunConfig cfg = resolve_config(c);
  data::PanelDataset panel = load_data(c, cfg);
  auto chains = load_chains(draws_dir);
  irf::MultiplierSeries series = irf::multiplier_posterior(chains, cfg.irf_horizon);
  ensure_parent(out);
  io::write_file_atomic(out, irf::irf_csv(series, panel));
  std::cout << "irf horizons 0.." << series.horizon << " over " << series.n_draws() << " draws" << std::endl;
}

int cmd_diagnose(const Common& c, const std::string& draws_dir, const std::string& out) {
  resolve_config(c);
  auto chains = load_chains(draws_dir);
  diag::ConvergenceReport rep = diag::convergence_report(chains);
  ensure_parent(out);
  io::write_file_atomic(out, rep.to_csv());
  std::cout << "deviance_rhat=" << rep.deviance_rhat << " max_rhat=" << rep.max_rhat
            << " converged=" << (rep.converged() ? "yes" : "no") << std::endl;
  return 0;
}

void cmd_select(const Common& c, const std::string& out) {
  RunConfig cfg = resolve_config(c);
  data::PanelDataset panel = load_data(c, cfg);
  if (cfg.holdout > 0) panel = panel.head(panel.n_periods() - cfg.holdout);
  mcmc::McmcConfig base = to_mcmc_config(cfg, panel);
  auto results = select::grid_search(panel, cfg.grid, base, cfg.zeta);
  ensure_parent(out);
  io::write_file_atomic(out, select::grid_csv(results));
  if (!results.empty() && !results.front().failed)
    std::cout << "best (m,l)=(" << results.front().m << "," << results.front().l << ") pmcc=" << results.front().pmcc
              << std::endl;
}

void emit_error(const std::string& code, const std::string& message) {
  nlohmann::json j;
  j["error"] = code;
  j["message"] = message;
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial dynamic factor models on lattice panels"};
  app.require_subcommand(1);
  Common common;
  std::string out_dir = "out", draws_dir = "out", out_file, future_x;
  bool conditional = false;

  auto add_common = [&](CLI::App* sub, bool needs_data) {
    sub->add_option("-c,--config", common.config_path, "configuration file");
    sub->add_option("--seed", common.seed, "override the configured seed");
    if (needs_data) {
      sub->add_option("--data", common.data, "long-format panel CSV");
      sub->add_option("--adjacency", common.adjacency, "adjacency edge list");
    }
  };
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic panel with known parameters");
  add_common(simulate, false);
  simulate->add_option("--out-dir", out_dir, "output directory");

  auto* fit = app.add_subcommand("fit", "run the MCMC chains");
  add_common(fit, true);
  fit->add_option("--out-dir", out_dir, "directory for chain files");

  auto* ranks = app.add_subcommand("ranks", "posterior of the cointegrating ranks");
  add_common(ranks, false);
  ranks->add_option("--draws", draws_dir, "directory with chain files");
  ranks->add_option("--out", out_file, "rank table CSV")->required();

  auto* fc = app.add_subcommand("forecast", "k-step predictive distribution");
  add_common(fc, true);
  fc->add_option("--draws", draws_dir, "directory with chain files");
  fc->add_option("--out", out_file, "forecast CSV")->required();
  fc->add_flag("--conditional", conditional, "condition on future predictor values");
  fc->add_option("--future-x", future_x, "future predictor panel (long CSV)");

  auto* irf_cmd = app.add_subcommand("irf", "dynamic multipliers");
  add_common(irf_cmd, true);
  irf_cmd->add_option("--draws", draws_dir, "directory with chain files");
  irf_cmd->add_option("--out", out_file, "multiplier CSV")->required();

  auto* diagnose = app.add_subcommand("diagnose", "Gelman-Rubin statistics across chains");
  add_common(diagnose, false);
  diagnose->add_option("--draws", draws_dir, "directory with chain files");
  diagnose->add_option("--out", out_file, "report CSV")->required();

  auto* sel = app.add_subcommand("select", "PMCC over the (m, l) grid");
  add_common(sel, true);
  sel->add_option("--out", out_file, "grid CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("UsageError", e.what());
    return 2;
  }

  try {
    if (*simulate) cmd_simulate(common, out_dir);
    else if (*fit) cmd_fit(common, out_dir);
    else if (*ranks) cmd_ranks(common, draws_dir, out_file);
    else if (*fc) cmd_forecast(common, draws_dir, out_file, conditional, future_x);
    else if (*irf_cmd) cmd_irf(common, draws_dir, out_file);
    else if (*diagnose) cmd_diagnose(common, draws_dir, out_file);
    else if (*sel) cmd_select(common, out_file);
  } catch (const Error& e) {
    emit_error(std::string(error_name(e.code())), e.detail());
    return e.code() == ErrorCode::UsageError ? 2 : 1;
  } catch (const std::exception& e) {
    emit_error("IoError", e.what());
    return 1;
  }
  return 0;
}
