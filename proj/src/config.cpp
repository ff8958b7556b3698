#include "sdsem/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "sdsem/errors.hpp"

namespace sdsem {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(x);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "'" + key + "' expects an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "'" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::ConfigError, "'" + key + "' expects true or false, got '" + v + "'");
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field int_field(T RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = to_int(k, v); },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(double RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = to_double(k, v); },
          [member](const RunConfig& c) { return num(c.*member); }};
}

Field prior_field(double PriorConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.prior.*member = to_double(k, v); },
          [member](const RunConfig& c) { return num(c.prior.*member); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["m"] = int_field(&RunConfig::m);
    t["l"] = int_field(&RunConfig::l);
    t["order"] = int_field(&RunConfig::order);
    t["iterations"] = int_field(&RunConfig::iterations);
    t["burn_in"] = int_field(&RunConfig::burn_in);
    t["thin"] = int_field(&RunConfig::thin);
    t["chains"] = int_field(&RunConfig::chains);
    t["prelim_iterations"] = int_field(&RunConfig::prelim_iterations);
    t["rank_d"] = int_field(&RunConfig::rank_d);
    t["rank_f"] = int_field(&RunConfig::rank_f);
    t["holdout"] = int_field(&RunConfig::holdout);
    t["horizon"] = int_field(&RunConfig::horizon);
    t["forecast_replicates"] = int_field(&RunConfig::forecast_replicates);
    t["irf_horizon"] = int_field(&RunConfig::irf_horizon);
    t["sim_rows"] = int_field(&RunConfig::sim_rows);
    t["sim_cols"] = int_field(&RunConfig::sim_cols);
    t["sim_periods"] = int_field(&RunConfig::sim_periods);
    t["level"] = double_field(&RunConfig::level);
    t["rank_threshold"] = double_field(&RunConfig::rank_threshold);
    t["zeta"] = double_field(&RunConfig::zeta);
    t["sim_obs_sd"] = double_field(&RunConfig::sim_obs_sd);
    t["sim_state_sd"] = double_field(&RunConfig::sim_state_sd);
    t["sim_spatial"] = double_field(&RunConfig::sim_spatial);
    t["seed"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                   try {
                     std::size_t pos = 0;
                     unsigned long long s = std::stoull(v, &pos);
                     if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
                     c.seed = s;
                   } catch (const std::exception&) {
                     throw Error(ErrorCode::ConfigError, "'" + k + "' expects a non-negative integer");
                   }
                 },
                 [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string("unset"); }};
    t["state_noise"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                          if (v == "diagonal")
                            c.state_noise = StateNoiseMode::Diagonal;
                          else if (v == "full")
                            c.state_noise = StateNoiseMode::Full;
                          else
                            throw Error(ErrorCode::ConfigError, "'" + k + "' must be diagonal or full");
                        },
                        [](const RunConfig& c) {
                          return std::string(c.state_noise == StateNoiseMode::Full ? "full" : "diagonal");
                        }};
    t["ssvs"] = {[](RunConfig& c, const std::string& k, const std::string& v) { c.ssvs = to_bool(k, v); },
                 [](const RunConfig& c) { return std::string(c.ssvs ? "true" : "false"); }};
    t["deterministic_conditional"] = {
        [](RunConfig& c, const std::string& k, const std::string& v) { c.deterministic_conditional = to_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.deterministic_conditional ? "true" : "false"); }};
    t["y_var"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.y_var = v; },
                  [](const RunConfig& c) { return c.y_var; }};
    t["x_vars"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.x_vars = split(v, ','); },
                   [](const RunConfig& c) { return join(c.x_vars); }};
    t["anchors_y"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.anchors_y = split(v, ','); },
                      [](const RunConfig& c) { return join(c.anchors_y); }};
    t["anchors_x"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.anchors_x = split(v, ','); },
                      [](const RunConfig& c) { return join(c.anchors_x); }};
    t["grid"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                   c.grid.clear();
                   for (const auto& item : split(v, ';')) {
                     auto parts = split(item, ',');
                     if (parts.size() != 2) throw Error(ErrorCode::ConfigError, "'" + k + "' expects m,l;m,l;...");
                     c.grid.emplace_back(to_int(k, parts[0]), to_int(k, parts[1]));
                   }
                 },
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.grid.size(); ++i)
                     out += (i ? ";" : "") + std::to_string(c.grid[i].first) + "," + std::to_string(c.grid[i].second);
                   return out;
                 }};
    t["prior.obs_shape"] = prior_field(&PriorConfig::obs_shape);
    t["prior.obs_rate"] = prior_field(&PriorConfig::obs_rate);
    t["prior.loading_mean_var"] = prior_field(&PriorConfig::loading_mean_var);
    t["prior.wishart_df"] = prior_field(&PriorConfig::wishart_df);
    t["prior.wishart_scale"] = prior_field(&PriorConfig::wishart_scale);
    t["prior.gmrf_coef_scale"] = prior_field(&PriorConfig::gmrf_coef_scale);
    t["prior.ssvs_inclusion"] = prior_field(&PriorConfig::ssvs_inclusion);
    t["prior.ssvs_spike_mult"] = prior_field(&PriorConfig::ssvs_spike_mult);
    t["prior.ssvs_slab_mult"] = prior_field(&PriorConfig::ssvs_slab_mult);
    t["prior.state_shape"] = prior_field(&PriorConfig::state_shape);
    t["prior.state_rate"] = prior_field(&PriorConfig::state_rate);
    t["prior.mean_var"] = prior_field(&PriorConfig::mean_var);
    t["prior.coint_space_var"] = prior_field(&PriorConfig::coint_space_var);
    t["prior.prelim_var"] = prior_field(&PriorConfig::prelim_var);
    t["prior.init_kappa"] = prior_field(&PriorConfig::init_kappa);
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = fields().find(key);
  require(it != fields().end(), ErrorCode::ConfigError, "unknown config key '" + key + "'");
  it->second.set(*this, key, value);
}

void RunConfig::validate() const {
  require(m >= 1 && l >= 1 && order >= 1, ErrorCode::ConfigError, "m, l and order must be positive");
  require(iterations >= 0 && burn_in >= 0 && thin >= 1 && chains >= 1, ErrorCode::ConfigError,
          "iterations/burn_in must be non-negative, thin and chains positive");
  require(prelim_iterations >= 0, ErrorCode::ConfigError, "prelim_iterations must be non-negative");
  require(holdout >= 0 && horizon >= 1 && irf_horizon >= 0 && forecast_replicates >= 1, ErrorCode::ConfigError,
          "holdout, horizon and replicate counts out of range");
  require(level > 0.0 && level < 1.0, ErrorCode::ConfigError, "level must lie in (0, 1)");
  require(zeta > 0.0, ErrorCode::ConfigError, "zeta must be positive");
  require(!grid.empty(), ErrorCode::ConfigError, "grid must not be empty");
  require(anchors_y.empty() || static_cast<int>(anchors_y.size()) == m, ErrorCode::ConfigError,
          "anchors_y must list m sites");
  require(anchors_x.empty() || static_cast<int>(anchors_x.size()) == l, ErrorCode::ConfigError,
          "anchors_x must list l sites");
  require(prior.wishart_df > 0 && prior.wishart_scale > 0 && prior.gmrf_coef_scale > 0 && prior.obs_shape > 0 &&
              prior.obs_rate > 0 && prior.state_shape > 0 && prior.state_rate > 0 && prior.mean_var > 0 &&
              prior.loading_mean_var > 0 && prior.coint_space_var > 0 && prior.prelim_var > 0,
          ErrorCode::ConfigError, "prior scales must be positive");
}

std::uint64_t RunConfig::require_seed() const {
  require(seed.has_value(), ErrorCode::ConfigError, "seed is mandatory");
  return *seed;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + "=" + f.get(*this) + "\n";
  return out;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::ConfigError, "line " + std::to_string(lineno) + " is not key=value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::IoError, "cannot open config " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

mcmc::McmcConfig to_mcmc_config(const RunConfig& cfg, const data::PanelDataset& data) {
  mcmc::McmcConfig c;
  c.m = cfg.m;
  c.l = cfg.l;
  c.order = cfg.order;
  c.iterations = cfg.iterations;
  c.burn_in = cfg.burn_in;
  c.thin = cfg.thin;
  c.chains = cfg.chains;
  c.seed = cfg.require_seed();
  c.prior = cfg.prior;
  c.rank_d = cfg.rank_d;
  c.rank_f = cfg.rank_f;
  c.state_noise = cfg.state_noise;
  c.ssvs_enabled = cfg.ssvs;
  c.prelim_iterations = cfg.prelim_iterations;
  auto rows = [&](const std::vector<std::string>& ids, int n_vars) {
    std::vector<int> out;
    for (const auto& id : ids) {
      auto it = std::find(data.sites.begin(), data.sites.end(), id);
      require(it != data.sites.end(), ErrorCode::ConfigError, "anchor site '" + id + "' not in panel");
      out.push_back(static_cast<int>(it - data.sites.begin()) * std::max(1, n_vars));
    }
    return out;
  };
  if (!cfg.anchors_y.empty() && !cfg.anchors_x.empty()) {
    c.anchors_y = rows(cfg.anchors_y, data.n_y_vars());
    c.anchors_x = rows(cfg.anchors_x, data.n_x_vars());
  }
  return c;
}

}  // namespace sdsem
