#include "sdsem/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sdsem/errors.hpp"

namespace sdsem::data {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_value(const std::string& s, const std::string& where) {
  if (s.empty() || s == "NA" || s == "NaN" || s == "nan") return std::nan("");
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::SchemaError, "non-numeric value '" + s + "' at " + where);
  }
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void atomic_write(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), ErrorCode::IoError, "cannot write " + tmp);
    os << content;
    require(static_cast<bool>(os), ErrorCode::IoError, "write failed for " + tmp);
  }
  require(std::rename(tmp.c_str(), path.c_str()) == 0, ErrorCode::IoError, "cannot rename " + tmp + " to " + path);
}

}  // namespace

double TransformRecord::invert(double value, std::size_t period) const {
  switch (kind) {
    case TransformKind::Identity: return value;
    case TransformKind::Log: return std::exp(value);
    case TransformKind::DeflatedLog:
      require(period < deflator.size(), ErrorCode::AlignmentMismatch, "period outside deflator range");
      return std::exp(value) * deflator[period];
  }
  return value;
}

void PanelDataset::validate() const {
  const auto n = static_cast<Eigen::Index>(sites.size());
  require(n > 0, ErrorCode::SchemaError, "panel has no sites");
  require(regions.empty() || regions.size() == sites.size(), ErrorCode::SchemaError, "one region per site");
  require(y.rows() == n * std::max<Eigen::Index>(1, static_cast<Eigen::Index>(y_vars.size())) &&
              x.rows() == n * static_cast<Eigen::Index>(x_vars.size()),
          ErrorCode::DimensionMismatch, "panel rows must be sites x variables");
  require(y.cols() == x.cols() && y.cols() == static_cast<Eigen::Index>(periods.size()),
          ErrorCode::DimensionMismatch, "y, x and periods differ in length");
  require(adjacency.n_sites() == n, ErrorCode::DimensionMismatch, "adjacency size differs from site count");
  adjacency.validate();
}

PanelDataset PanelDataset::head(int keep) const {
  require(keep >= 1 && keep <= n_periods(), ErrorCode::ConfigError, "head length out of range");
  PanelDataset out = *this;
  out.periods.assign(periods.begin(), periods.begin() + keep);
  out.y = y.leftCols(keep);
  out.x = x.leftCols(keep);
  for (auto& t : out.y_transforms)
    if (!t.deflator.empty()) t.deflator.resize(static_cast<std::size_t>(keep));
  return out;
}

PanelDataset PanelDataset::tail(int count) const {
  require(count >= 1 && count <= n_periods(), ErrorCode::ConfigError, "tail length out of range");
  PanelDataset out = *this;
  const int start = n_periods() - count;
  out.periods.assign(periods.begin() + start, periods.end());
  out.y = y.rightCols(count);
  out.x = x.rightCols(count);
  for (auto& t : out.y_transforms)
    if (!t.deflator.empty())
      t.deflator.assign(t.deflator.begin() + start, t.deflator.end());
  return out;
}

Quarter Quarter::parse(const std::string& label) {
  std::string s = trim(label);
  auto q = s.find_first_of("Qq");
  require(q != std::string::npos && q > 0 && q + 2 == s.size(), ErrorCode::SchemaError,
          "period '" + label + "' is not YYYYQn");
  Quarter out;
  try {
    out.year = std::stoi(s.substr(0, q));
    out.quarter = std::stoi(s.substr(q + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::SchemaError, "period '" + label + "' is not YYYYQn");
  }
  require(out.quarter >= 1 && out.quarter <= 4, ErrorCode::SchemaError, "quarter out of range in '" + label + "'");
  return out;
}

std::string Quarter::label() const { return std::to_string(year) + "Q" + std::to_string(quarter); }

Quarter Quarter::next() const { return quarter == 4 ? Quarter{year + 1, 1} : Quarter{year, quarter + 1}; }

lattice::AdjacencyMatrix load_adjacency(const std::string& path, const std::vector<std::string>& sites) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::IoError, "cannot open adjacency file " + path);
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < sites.size(); ++i) index[sites[i]] = static_cast<int>(i);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_csv(line));
  }
  const int n = static_cast<int>(sites.size());
  auto site_of = [&](const std::string& id) {
    auto it = index.find(id);
    require(it != index.end(), ErrorCode::UnknownSiteInAdjacency, "adjacency references unknown site '" + id + "'");
    return it->second;
  };
  if (!rows.empty() && rows[0].size() == 2 && rows[0][0] == "site_a" && rows[0][1] == "site_b") {
    std::set<std::pair<int, int>> edges;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      require(rows[r].size() == 2, ErrorCode::SchemaError, "edge list rows need two site ids");
      int a = site_of(rows[r][0]), b = site_of(rows[r][1]);
      require(a != b, ErrorCode::InvalidAdjacency, "self-loop at site '" + rows[r][0] + "'");
      edges.insert({std::min(a, b), std::max(a, b)});
    }
    return lattice::AdjacencyMatrix::from_edges(n, {edges.begin(), edges.end()});
  }
  // Full matrix, optionally with a header row and a leading site-id column.
  std::vector<int> order;
  std::size_t first = 0, offset = 0;
  if (!rows.empty() && !rows[0].empty()) {
    bool header = std::any_of(rows[0].begin(), rows[0].end(), [](const std::string& c) {
      return !c.empty() && c != "0" && c != "1";
    });
    if (header) {
      offset = rows[0].size() == sites.size() + 1 ? 1 : 0;
      for (std::size_t c = offset; c < rows[0].size(); ++c) order.push_back(site_of(rows[0][c]));
      first = 1;
    }
  }
  if (order.empty())
    for (int i = 0; i < n; ++i) order.push_back(i);
  require(rows.size() - first == order.size() && static_cast<int>(order.size()) == n, ErrorCode::InvalidAdjacency,
          "adjacency matrix must be N x N");
  lattice::AdjacencyMatrix w;
  w.entries = Eigen::MatrixXi::Zero(n, n);
  for (std::size_t r = first; r < rows.size(); ++r) {
    std::size_t off = offset;
    if (offset == 0 && rows[r].size() == static_cast<std::size_t>(n) + 1) off = 1;
    require(rows[r].size() == static_cast<std::size_t>(n) + off, ErrorCode::InvalidAdjacency,
            "adjacency matrix row has wrong length");
    int i = order[r - first];
    if (off == 1 && first == 1) i = site_of(rows[r][0]);
    for (int c = 0; c < n; ++c) {
      const std::string& v = rows[r][off + static_cast<std::size_t>(c)];
      require(v == "0" || v == "1", ErrorCode::InvalidAdjacency, "adjacency entries must be 0 or 1");
      w.entries(i, order[static_cast<std::size_t>(c)]) = v == "1" ? 1 : 0;
    }
  }
  w.validate();
  return w;
}

PanelDataset load_panel(const std::string& data_path, const std::string& adjacency_path, const PanelSchema& schema) {
  std::ifstream is(data_path);
  require(static_cast<bool>(is), ErrorCode::IoError, "cannot open panel file " + data_path);
  require(!schema.y_var.empty(), ErrorCode::SchemaError, "schema must name the y variable");
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::SchemaError, "empty panel file");
  auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* name : {"site", "period", "variable", "value"})
    require(col.count(name) > 0, ErrorCode::SchemaError, std::string("panel header lacks column '") + name + "'");
  const bool has_region = col.count("region") > 0;

  std::map<std::string, std::string> region_of;
  std::map<std::string, std::map<std::string, std::map<Quarter, double>>> cells;  // site -> var -> period
  std::set<Quarter> all_periods;
  std::set<std::string> wanted{schema.y_var};
  for (const auto& v : schema.x_vars) wanted.insert(v);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_csv(line);
    require(f.size() == header.size(), ErrorCode::SchemaError, "wrong field count on line " + std::to_string(lineno));
    const std::string& site = f[col["site"]];
    const std::string& var = f[col["variable"]];
    require(!site.empty(), ErrorCode::SchemaError, "empty site id on line " + std::to_string(lineno));
    Quarter q = Quarter::parse(f[col["period"]]);
    if (has_region) {
      auto [it, fresh] = region_of.emplace(site, f[col["region"]]);
      require(fresh || it->second == f[col["region"]], ErrorCode::SchemaError, "site '" + site + "' has two regions");
    } else {
      region_of.emplace(site, "");
    }
    if (!wanted.count(var)) continue;
    double v = parse_value(f[col["value"]], "line " + std::to_string(lineno));
    auto [it, fresh] = cells[site][var].emplace(q, v);
    require(fresh, ErrorCode::SchemaError,
            "duplicate record for site '" + site + "', variable '" + var + "', period " + q.label());
    all_periods.insert(q);
  }
  require(!cells.empty() && !all_periods.empty(), ErrorCode::SchemaError, "panel has no usable records");

  PanelDataset out;
  for (const auto& [site, reg] : region_of) {
    out.sites.push_back(site);
    if (has_region) out.regions.push_back(reg);
  }
  const Quarter first = *all_periods.begin(), last = *all_periods.rbegin();
  std::vector<Quarter> periods;
  for (Quarter q = first; q <= last; q = q.next()) periods.push_back(q);
  for (const auto& q : periods) out.periods.push_back(q.label());
  out.y_vars = {schema.y_var};
  out.x_vars = schema.x_vars;
  const auto N = static_cast<Eigen::Index>(out.sites.size());
  const auto T = static_cast<Eigen::Index>(periods.size());
  auto fill = [&](const std::vector<std::string>& vars, MatrixXd& target) {
    const auto nv = static_cast<Eigen::Index>(vars.size());
    target.resize(N * nv, T);
    for (Eigen::Index s = 0; s < N; ++s)
      for (Eigen::Index v = 0; v < nv; ++v) {
        const std::string& site = out.sites[static_cast<std::size_t>(s)];
        const std::string& var = vars[static_cast<std::size_t>(v)];
        auto sit = cells.find(site);
        require(sit != cells.end() && sit->second.count(var), ErrorCode::SchemaError,
                "site '" + site + "' has no records for variable '" + var + "'");
        const auto& series = sit->second.at(var);
        for (Eigen::Index t = 0; t < T; ++t) {
          auto it = series.find(periods[static_cast<std::size_t>(t)]);
          require(it != series.end(), ErrorCode::GapInTimeIndex,
                  "site '" + site + "' variable '" + var + "' is missing period " +
                      periods[static_cast<std::size_t>(t)].label());
          target(s * nv + v, t) = it->second;
        }
      }
  };
  fill(out.y_vars, out.y);
  fill(out.x_vars, out.x);
  out.y_transforms.assign(1, TransformRecord{});
  if (adjacency_path.empty()) {
    out.adjacency.entries = Eigen::MatrixXi::Zero(N, N);
    out.adjacency.allow_isolated = true;
  } else {
    out.adjacency = load_adjacency(adjacency_path, out.sites);
  }
  out.validate();
  return out;
}

void write_panel(const PanelDataset& panel, const std::string& data_path, const std::string& adjacency_path) {
  panel.validate();
  const bool has_region = !panel.regions.empty();
  std::ostringstream os;
  os << "site,period,variable,value" << (has_region ? ",region" : "") << "\n";
  const int ny = std::max(1, panel.n_y_vars()), nx = panel.n_x_vars();
  for (int s = 0; s < panel.n_sites(); ++s) {
    const auto su = static_cast<std::size_t>(s);
    for (int t = 0; t < panel.n_periods(); ++t) {
      auto row = [&](const std::string& var, double v) {
        os << panel.sites[su] << ',' << panel.periods[static_cast<std::size_t>(t)] << ',' << var << ',' << fmt(v);
        if (has_region) os << ',' << panel.regions[su];
        os << '\n';
      };
      for (int v = 0; v < ny; ++v) row(panel.y_vars[static_cast<std::size_t>(v)], panel.y(s * ny + v, t));
      for (int v = 0; v < nx; ++v) row(panel.x_vars[static_cast<std::size_t>(v)], panel.x(s * nx + v, t));
    }
  }
  atomic_write(data_path, os.str());
  if (!adjacency_path.empty()) {
    std::ostringstream as;
    as << "site_a,site_b\n";
    const auto& e = panel.adjacency.entries;
    for (int i = 0; i < e.rows(); ++i)
      for (int j = i + 1; j < e.cols(); ++j)
        if (e(i, j)) as << panel.sites[static_cast<std::size_t>(i)] << ',' << panel.sites[static_cast<std::size_t>(j)] << '\n';
    atomic_write(adjacency_path, as.str());
  }
}

std::vector<double> geometric_interpolate(const std::vector<double>& annual, int subperiods) {
  require(subperiods >= 1, ErrorCode::ConfigError, "subperiods must be positive");
  for (double v : annual) require(v > 0.0 && std::isfinite(v), ErrorCode::NonPositiveValue, "annual values must be positive");
  std::vector<double> out;
  if (annual.empty()) return out;
  double growth = 1.0;
  for (std::size_t y = 0; y < annual.size(); ++y) {
    if (y + 1 < annual.size()) growth = std::pow(annual[y + 1] / annual[y], 1.0 / subperiods);
    double v = annual[y];
    for (int q = 0; q < subperiods; ++q) {
      out.push_back(v);
      v *= growth;
    }
  }
  return out;
}

Transformed deflate_and_log(const std::vector<double>& series, const std::vector<double>& deflator) {
  require(series.size() == deflator.size(), ErrorCode::AlignmentMismatch, "series and deflator differ in length");
  Transformed out;
  out.record.kind = TransformKind::DeflatedLog;
  out.record.deflator = deflator;
  for (std::size_t i = 0; i < series.size(); ++i) {
    require(series[i] > 0.0 && deflator[i] > 0.0, ErrorCode::NonPositiveValue,
            "series and deflator must be strictly positive");
    out.values.push_back(std::log(series[i] / deflator[i]));
  }
  return out;
}

std::vector<double> invert_transform(const Transformed& t) {
  std::vector<double> out;
  out.reserve(t.values.size());
  for (std::size_t i = 0; i < t.values.size(); ++i) out.push_back(t.record.invert(t.values[i], i));
  return out;
}

}  // namespace sdsem::data

namespace sdsem::data {

FuturePredictors load_future_x(const std::string& path, const std::vector<std::string>& sites,
                               const std::vector<std::string>& x_vars) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorCode::IoError, "cannot open future predictor file " + path);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::SchemaError, "empty future predictor file");
  auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* name : {"site", "period", "variable", "value"})
    require(col.count(name) > 0, ErrorCode::SchemaError, std::string("future predictor header lacks '") + name + "'");
  std::map<std::pair<std::string, std::string>, std::map<Quarter, double>> cells;
  std::set<Quarter> all_periods;
  std::set<std::string> known(sites.begin(), sites.end());
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_csv(line);
    require(f.size() == header.size(), ErrorCode::SchemaError, "wrong field count on line " + std::to_string(lineno));
    const std::string& site = f[col["site"]];
    const std::string& var = f[col["variable"]];
    if (std::find(x_vars.begin(), x_vars.end(), var) == x_vars.end()) continue;
    require(known.count(site) > 0, ErrorCode::SchemaError, "future predictor file names unknown site '" + site + "'");
    Quarter q = Quarter::parse(f[col["period"]]);
    auto [it, fresh] = cells[{site, var}].emplace(q, parse_value(f[col["value"]], "line " + std::to_string(lineno)));
    require(fresh, ErrorCode::SchemaError, "duplicate future record for site '" + site + "' period " + q.label());
    all_periods.insert(q);
  }
  require(!all_periods.empty(), ErrorCode::SchemaError, "future predictor file has no usable records");
  FuturePredictors out;
  std::vector<Quarter> periods;
  for (Quarter q = *all_periods.begin(); q <= *all_periods.rbegin(); q = q.next()) periods.push_back(q);
  for (const auto& q : periods) out.periods.push_back(q.label());
  const auto nv = static_cast<Eigen::Index>(x_vars.size());
  out.x.resize(static_cast<Eigen::Index>(sites.size()) * nv, static_cast<Eigen::Index>(periods.size()));
  for (std::size_t s = 0; s < sites.size(); ++s)
    for (Eigen::Index v = 0; v < nv; ++v) {
      const auto& series = cells[{sites[s], x_vars[static_cast<std::size_t>(v)]}];
      for (std::size_t t = 0; t < periods.size(); ++t) {
        auto it = series.find(periods[t]);
        require(it != series.end(), ErrorCode::GapInTimeIndex,
                "future predictor for site '" + sites[s] + "' is missing period " + periods[t].label());
        out.x(static_cast<Eigen::Index>(s) * nv + v, static_cast<Eigen::Index>(t)) = it->second;
      }
    }
  return out;
}

}  // namespace sdsem::data
