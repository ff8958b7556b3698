#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sdsem/mcmc.hpp"

namespace sdsem {

// Flat key=value run configuration. Unknown keys are rejected; every field
// has a default except the seed.
struct RunConfig {
  int m = 2, l = 2, order = 2;
  int iterations = 5000, burn_in = 2000, thin = 5, chains = 4;
  std::optional<std::uint64_t> seed;
  int prelim_iterations = 1000;
  int rank_d = -1, rank_f = -1;
  StateNoiseMode state_noise = StateNoiseMode::Diagonal;
  bool ssvs = true;
  PriorConfig prior;
  std::vector<std::string> anchors_y, anchors_x;  // site ids
  std::string y_var = "y";
  std::vector<std::string> x_vars{"x"};
  int holdout = 0;
  int horizon = 4;
  double level = 0.95;
  int forecast_replicates = 1;
  bool deterministic_conditional = false;
  int irf_horizon = 8;
  double rank_threshold = 0.05;
  double zeta = std::numeric_limits<double>::infinity();
  std::vector<std::pair<int, int>> grid{{1, 1}, {2, 2}, {4, 4}};
  // synthetic data generator
  int sim_rows = 3, sim_cols = 3, sim_periods = 300;
  double sim_obs_sd = 0.1, sim_state_sd = 0.2, sim_spatial = 0.3;

  void validate() const;
  std::uint64_t require_seed() const;
  // Canonical text of every field in sorted key order.
  std::string canonical() const;
  std::string hash() const;
  void set(const std::string& key, const std::string& value);
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::uint64_t fnv1a64(const std::string& text);

// Resolves anchor site ids to series rows (first variable of each site).
mcmc::McmcConfig to_mcmc_config(const RunConfig& cfg, const data::PanelDataset& data);

}  // namespace sdsem
