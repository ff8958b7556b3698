#include "sdsem/draws_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "sdsem/errors.hpp"

namespace sdsem::io {

using nlohmann::json;

ChainFiles ChainFiles::for_prefix(const std::string& prefix) {
  return {prefix + ".draws.csv", prefix + ".factors.csv", prefix + ".meta.json"};
}

void write_file_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), ErrorCode::IoError, "cannot write " + tmp);
    os << content;
    os.flush();
    require(static_cast<bool>(os), ErrorCode::IoError, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorCode::IoError, "cannot rename " + tmp + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorCode::IoError, "cannot open " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void put(std::vector<std::pair<std::string, double>>& out, const std::string& name, int block, const MatrixXd& a) {
  for (Eigen::Index i = 0; i < a.size(); ++i)
    out.emplace_back(name + "." + std::to_string(block) + "." + std::to_string(i), a(i));
}

void put_int(std::vector<std::pair<std::string, double>>& out, const std::string& name, const MatrixXi& a) {
  put(out, name, 0, a.cast<double>());
}

}  // namespace

std::vector<std::pair<std::string, double>> param_columns(const SdSemParams& p) {
  std::vector<std::pair<std::string, double>> out;
  for (Eigen::Index j = 0; j < p.meas.H_y.cols(); ++j) put(out, "H_y", static_cast<int>(j), p.meas.H_y.col(j));
  for (Eigen::Index j = 0; j < p.meas.H_x.cols(); ++j) put(out, "H_x", static_cast<int>(j), p.meas.H_x.col(j));
  put(out, "mean_y", 0, p.meas.mean_y);
  put(out, "mean_x", 0, p.meas.mean_x);
  put(out, "obs_var_y", 0, p.meas.obs_var_y);
  put(out, "obs_var_x", 0, p.meas.obs_var_x);
  for (std::size_t j = 0; j < p.gmrf_y.size(); ++j) {
    put(out, "gmrf_y_cond_cov", static_cast<int>(j), p.gmrf_y[j].cond_cov);
    put(out, "gmrf_y_ftilde", static_cast<int>(j), p.gmrf_y[j].ftilde);
    put(out, "gmrf_y_beta", static_cast<int>(j), p.gmrf_y[j].mean_coef);
  }
  for (std::size_t j = 0; j < p.gmrf_x.size(); ++j) {
    put(out, "gmrf_x_cond_cov", static_cast<int>(j), p.gmrf_x[j].cond_cov);
    put(out, "gmrf_x_ftilde", static_cast<int>(j), p.gmrf_x[j].ftilde);
    put(out, "gmrf_x_beta", static_cast<int>(j), p.gmrf_x[j].mean_coef);
  }
  const auto& e = p.ecm;
  put(out, "ecm_A", 0, e.A);
  put(out, "ecm_B1", 0, e.B1);
  put(out, "ecm_B2", 0, e.B2);
  put(out, "ecm_A2", 0, e.A2);
  put(out, "ecm_Af", 0, e.Af);
  put(out, "ecm_Bf", 0, e.Bf);
  put(out, "ecm_E", 0, e.E);
  put(out, "ecm_Ef", 0, e.Ef);
  for (std::size_t i = 0; i < e.K.size(); ++i) put(out, "ecm_K", static_cast<int>(i), e.K[i]);
  for (std::size_t i = 0; i < e.Phi2.size(); ++i) put(out, "ecm_Phi2", static_cast<int>(i), e.Phi2[i]);
  put(out, "V_xi", 0, p.V_xi);
  put(out, "V_eta", 0, p.V_eta);
  put_int(out, "ssvs_a", p.ssvs.a.include);
  put_int(out, "ssvs_a2", p.ssvs.a2.include);
  put_int(out, "ssvs_af", p.ssvs.af.include);
  put_int(out, "ssvs_k", p.ssvs.k.include);
  put_int(out, "ssvs_phi", p.ssvs.phi.include);
  put_int(out, "ssvs_v_xi", p.ssvs.v_xi.include);
  put_int(out, "ssvs_v_eta", p.ssvs.v_eta.include);
  return out;
}

namespace {

json matrix_json(const MatrixXd& a) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) r.push_back(a(i, j));
    rows.push_back(r);
  }
  return json{{"rows", a.rows()}, {"cols", a.cols()}, {"data", rows}};
}

MatrixXd matrix_from_json(const json& j) {
  MatrixXd a(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index c = 0; c < a.cols(); ++c) a(i, c) = j.at("data").at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
  return a;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw Error(ErrorCode::SchemaError, "bad numeric field '" + s + "' in draw file");
  }
}

struct Table {
  std::vector<std::string> header;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<double>> rows;
};

Table read_table(const std::string& path) {
  std::stringstream ss(read_file(path));
  Table t;
  std::string line;
  require(static_cast<bool>(std::getline(ss, line)), ErrorCode::SchemaError, "empty file " + path);
  t.header = split_line(line);
  for (std::size_t i = 0; i < t.header.size(); ++i) t.index[t.header[i]] = i;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    require(cells.size() == t.header.size(), ErrorCode::SchemaError, "ragged row in " + path);
    std::vector<double> r;
    r.reserve(cells.size());
    for (const auto& c : cells) r.push_back(parse_double(c));
    t.rows.push_back(std::move(r));
  }
  return t;
}

MatrixXd get(const Table& t, const std::vector<double>& row, const std::string& name, int block, Eigen::Index rows,
             Eigen::Index cols) {
  MatrixXd a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    auto it = t.index.find(name + "." + std::to_string(block) + "." + std::to_string(i));
    require(it != t.index.end(), ErrorCode::SchemaError, "draw file lacks column " + name + "." + std::to_string(block));
    a(i) = row[it->second];
  }
  return a;
}

const std::vector<std::string> kSsvsGroups{"a", "a2", "af", "k", "phi", "v_xi", "v_eta"};

std::vector<SsvsGroup*> ssvs_groups(SsvsState& s) { return {&s.a, &s.a2, &s.af, &s.k, &s.phi, &s.v_xi, &s.v_eta}; }

}  // namespace

void write_chain(const std::string& prefix, const mcmc::PosteriorDraws& draws, const std::string& config_hash,
                 const data::PanelDataset& data) {
  auto files = ChainFiles::for_prefix(prefix);
  std::ostringstream dr, fr;
  json meta;
  meta["seed"] = draws.meta.seed;
  meta["chain_id"] = draws.meta.chain_id;
  meta["config_hash"] = config_hash;
  meta["iterations"] = draws.meta.iterations;
  meta["burn_in"] = draws.meta.burn_in;
  meta["thin"] = draws.meta.thin;
  meta["retained"] = draws.size();
  meta["acceptance"] = draws.meta.acceptance;
  meta["sites"] = data.sites;
  meta["periods"] = data.periods;
  meta["y_vars"] = data.y_vars;
  meta["x_vars"] = data.x_vars;
  if (!draws.empty()) {
    const SdSemParams& p = draws.params.front();
    meta["m"] = p.m();
    meta["l"] = p.l();
    meta["order"] = p.order();
    meta["rank_d"] = p.ecm.rank_d();
    meta["rank_f"] = p.ecm.rank_f();
    meta["anchors_y"] = p.anchors_y;
    meta["anchors_x"] = p.anchors_x;
    json spike, slab;
    SsvsState s = p.ssvs;
    auto groups = ssvs_groups(s);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      spike[kSsvsGroups[g]] = matrix_json(groups[g]->spike_var);
      slab[kSsvsGroups[g]] = matrix_json(groups[g]->slab_var);
    }
    meta["ssvs_spike"] = spike;
    meta["ssvs_slab"] = slab;

    auto cols = param_columns(p);
    for (std::size_t i = 0; i < cols.size(); ++i) dr << (i ? "," : "") << cols[i].first;
    dr << ",deviance.0.0\n";
    for (std::size_t d = 0; d < draws.size(); ++d) {
      auto c = param_columns(draws.params[d]);
      for (std::size_t i = 0; i < c.size(); ++i) dr << (i ? "," : "") << format_double(c[i].second);
      dr << ',' << format_double(draws.deviance[d]) << '\n';
    }
    const auto& f0 = draws.factors.front();
    const int k = static_cast<int>(f0.values.cols());
    const int order = static_cast<int>(f0.presample.rows());
    const int T = f0.length();
    meta["factor_periods"] = T;
    bool first = true;
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < order + T; ++i) {
        fr << (first ? "" : ",") << "factor." << j << "." << i;
        first = false;
      }
    fr << '\n';
    for (const auto& f : draws.factors) {
      first = true;
      for (int j = 0; j < k; ++j)
        for (int i = 0; i < order + T; ++i) {
          double v = i < order ? f.presample(order - 1 - i, j) : f.values(i - order, j);
          fr << (first ? "" : ",") << format_double(v);
          first = false;
        }
      fr << '\n';
    }
  }
  write_file_atomic(files.draws, dr.str());
  write_file_atomic(files.factors, fr.str());
  write_file_atomic(files.meta, meta.dump(2) + "\n");
}

mcmc::PosteriorDraws read_chain(const std::string& prefix) {
  auto files = ChainFiles::for_prefix(prefix);
  json meta;
  try {
    meta = json::parse(read_file(files.meta));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("bad metadata file: ") + e.what());
  }
  mcmc::PosteriorDraws out;
  out.meta.seed = meta.at("seed").get<std::uint64_t>();
  out.meta.chain_id = meta.at("chain_id").get<int>();
  out.meta.iterations = meta.at("iterations").get<int>();
  out.meta.burn_in = meta.at("burn_in").get<int>();
  out.meta.thin = meta.at("thin").get<int>();
  out.meta.acceptance = meta.at("acceptance").get<std::map<std::string, double>>();
  if (meta.at("retained").get<std::size_t>() == 0) return out;

  const int m = meta.at("m"), l = meta.at("l"), order = meta.at("order");
  const int rd = meta.at("rank_d"), rf = meta.at("rank_f");
  const int n_sites = static_cast<int>(meta.at("sites").size());
  const int nyv = std::max<int>(1, static_cast<int>(meta.at("y_vars").size()));
  const int nxv = static_cast<int>(meta.at("x_vars").size());
  const int ny = n_sites * nyv, nx = n_sites * nxv;
  Table t = read_table(files.draws);
  require(t.rows.size() == meta.at("retained").get<std::size_t>(), ErrorCode::SchemaError,
          "draw file row count disagrees with metadata");

  SdSemParams base;
  base.anchors_y = meta.at("anchors_y").get<std::vector<int>>();
  base.anchors_x = meta.at("anchors_x").get<std::vector<int>>();
  base.ecm = ecm::EcmBlocks::zeros(m, l, rd, rf, order);
  auto groups = ssvs_groups(base.ssvs);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    groups[g]->spike_var = matrix_from_json(meta.at("ssvs_spike").at(kSsvsGroups[g]));
    groups[g]->slab_var = matrix_from_json(meta.at("ssvs_slab").at(kSsvsGroups[g]));
  }
  for (const auto& row : t.rows) {
    SdSemParams p = base;
    p.meas.H_y.resize(ny, m);
    for (int j = 0; j < m; ++j) p.meas.H_y.col(j) = get(t, row, "H_y", j, ny, 1);
    p.meas.H_x.resize(nx, l);
    for (int j = 0; j < l; ++j) p.meas.H_x.col(j) = get(t, row, "H_x", j, nx, 1);
    p.meas.mean_y = get(t, row, "mean_y", 0, ny, 1);
    p.meas.mean_x = get(t, row, "mean_x", 0, nx, 1);
    p.meas.obs_var_y = get(t, row, "obs_var_y", 0, ny, 1);
    p.meas.obs_var_x = get(t, row, "obs_var_x", 0, nx, 1);
    auto gm = [&](const std::string& tag, int count, int nv) {
      std::vector<lattice::GmrfSpec> out;
      for (int j = 0; j < count; ++j) {
        lattice::GmrfSpec g;
        g.cond_cov = get(t, row, "gmrf_" + tag + "_cond_cov", j, nv, nv);
        g.ftilde = get(t, row, "gmrf_" + tag + "_ftilde", j, nv, nv);
        g.mean_design = lattice::intercept_design(n_sites, nv);
        g.mean_coef = get(t, row, "gmrf_" + tag + "_beta", j, g.mean_design.cols(), 1);
        out.push_back(g);
      }
      return out;
    };
    p.gmrf_y = gm("y", m, nyv);
    p.gmrf_x = gm("x", l, nxv);
    auto& e = p.ecm;
    e.A = get(t, row, "ecm_A", 0, m, rd);
    e.B1 = get(t, row, "ecm_B1", 0, m, rd);
    e.B2 = get(t, row, "ecm_B2", 0, l, rd);
    e.A2 = get(t, row, "ecm_A2", 0, m, rf);
    e.Af = get(t, row, "ecm_Af", 0, l, rf);
    e.Bf = get(t, row, "ecm_Bf", 0, l, rf);
    e.E = get(t, row, "ecm_E", 0, rd, rd);
    e.Ef = get(t, row, "ecm_Ef", 0, rf, rf);
    for (int i = 0; i + 1 < order; ++i) {
      e.K[static_cast<std::size_t>(i)] = get(t, row, "ecm_K", i, m, m + l);
      e.Phi2[static_cast<std::size_t>(i)] = get(t, row, "ecm_Phi2", i, l, l);
    }
    p.V_xi = get(t, row, "V_xi", 0, m, m);
    p.V_eta = get(t, row, "V_eta", 0, l, l);
    auto pg = ssvs_groups(p.ssvs);
    for (std::size_t g = 0; g < pg.size(); ++g)
      pg[g]->include = get(t, row, "ssvs_" + kSsvsGroups[g], 0, pg[g]->spike_var.rows(), pg[g]->spike_var.cols())
                           .array()
                           .round()
                           .cast<int>()
                           .matrix();
    out.params.push_back(std::move(p));
    out.deviance.push_back(get(t, row, "deviance", 0, 1, 1)(0));
  }

  if (std::filesystem::exists(files.factors)) {
    Table f = read_table(files.factors);
    require(f.rows.size() == out.params.size(), ErrorCode::SchemaError, "factor file row count disagrees");
    const int T = meta.at("factor_periods");
    const int k = m + l;
    for (const auto& row : f.rows) {
      ssm::FactorPath path;
      path.values.resize(T, k);
      path.presample.resize(order, k);
      for (int j = 0; j < k; ++j) {
        MatrixXd all = get(f, row, "factor", j, order + T, 1);
        for (int i = 0; i < order; ++i) path.presample(order - 1 - i, j) = all(i);
        for (int s = 0; s < T; ++s) path.values(s, j) = all(order + s);
      }
      out.factors.push_back(std::move(path));
    }
  }
  return out;
}

std::vector<std::string> chain_prefixes(const std::string& dir) {
  std::vector<std::string> out;
  for (int c = 0;; ++c) {
    std::string prefix = (std::filesystem::path(dir) / ("chain_" + std::to_string(c))).string();
    if (!std::filesystem::exists(prefix + ".meta.json")) break;
    out.push_back(prefix);
  }
  return out;
}

}  // namespace sdsem::io
