#include "sdsem/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sdsem/draws_io.hpp"
#include "sdsem/errors.hpp"

namespace sdsem::diag {

std::vector<std::string> monitored_names(const mcmc::PosteriorDraws& chain) {
  require(!chain.empty(), ErrorCode::EmptyChain, "no draws to monitor");
  std::vector<std::string> out;
  for (const auto& [name, value] : mcmc::scalar_summaries(chain.params.front()))
    if (name.rfind("mean_", 0) != 0) out.push_back(name);
  return out;
}

std::vector<std::vector<double>> traces(const std::vector<mcmc::PosteriorDraws>& chains, const std::string& name) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    std::vector<double> t;
    t.reserve(c.size());
    if (name == "deviance") {
      t = c.deviance;
    } else {
      for (const auto& p : c.params) {
        auto s = mcmc::scalar_summaries(p);
        auto it = std::find_if(s.begin(), s.end(), [&](const auto& kv) { return kv.first == name; });
        require(it != s.end(), ErrorCode::SchemaError, "unknown parameter '" + name + "'");
        t.push_back(it->second);
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::string ConvergenceReport::to_csv() const {
  std::ostringstream os;
  os << "parameter,rhat\n";
  os << "deviance," << io::format_double(deviance_rhat) << '\n';
  for (const auto& e : params) os << e.name << ',' << io::format_double(e.rhat) << '\n';
  return os.str();
}

ConvergenceReport convergence_report(const std::vector<mcmc::PosteriorDraws>& chains,
                                     const std::vector<std::string>& names) {
  require(chains.size() >= 2, ErrorCode::EmptyChain, "convergence report needs at least two chains");
  std::vector<std::string> use = names.empty() ? monitored_names(chains.front()) : names;
  // Summaries are computed once per draw and then indexed by name.
  std::vector<std::vector<std::vector<std::pair<std::string, double>>>> summaries;
  for (const auto& c : chains) {
    std::vector<std::vector<std::pair<std::string, double>>> s;
    for (const auto& p : c.params) s.push_back(mcmc::scalar_summaries(p));
    summaries.push_back(std::move(s));
  }
  ConvergenceReport r;
  r.deviance_rhat = mcmc::gelman_rubin(traces(chains, "deviance"));
  r.max_rhat = r.deviance_rhat;
  const auto& first = summaries.front().front();
  for (const auto& name : use) {
    auto it = std::find_if(first.begin(), first.end(), [&](const auto& kv) { return kv.first == name; });
    require(it != first.end(), ErrorCode::SchemaError, "unknown parameter '" + name + "'");
    const auto idx = static_cast<std::size_t>(it - first.begin());
    std::vector<std::vector<double>> tr;
    for (const auto& s : summaries) {
      std::vector<double> t;
      for (const auto& d : s) t.push_back(d[idx].second);
      tr.push_back(std::move(t));
    }
    try {
      double v = mcmc::gelman_rubin(tr);
      r.params.push_back({name, v});
      r.max_rhat = std::max(r.max_rhat, v);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroWithinVariance) throw;
      ++r.skipped_constant;
    }
  }
  return r;
}

std::vector<std::string> random_parameter_names(const mcmc::PosteriorDraws& chain, std::size_t count,
                                                std::uint64_t seed) {
  auto names = monitored_names(chain);
  RandomSource rng(seed);
  std::shuffle(names.begin(), names.end(), rng.engine());
  if (names.size() > count) names.resize(count);
  return names;
}

}  // namespace sdsem::diag
