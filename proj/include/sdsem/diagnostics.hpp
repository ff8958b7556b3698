#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdsem/mcmc.hpp"

namespace sdsem::diag {

// Identified scalar parameters eligible for convergence checks. Overall
// levels (mean_y, mean_x) trade off against the factor level and are left out.
std::vector<std::string> monitored_names(const mcmc::PosteriorDraws& chain);

// Per-chain traces of one named scalar; "deviance" selects the deviance.
std::vector<std::vector<double>> traces(const std::vector<mcmc::PosteriorDraws>& chains, const std::string& name);

struct RhatEntry {
  std::string name;
  double rhat = 0.0;
};

struct ConvergenceReport {
  double deviance_rhat = 0.0;
  std::vector<RhatEntry> params;
  std::size_t skipped_constant = 0;
  double max_rhat = 0.0;
  bool converged(double threshold = 1.1) const { return max_rhat < threshold; }
  std::string to_csv() const;
};

ConvergenceReport convergence_report(const std::vector<mcmc::PosteriorDraws>& chains,
                                     const std::vector<std::string>& names = {});

// `count` distinct names drawn uniformly from monitored_names.
std::vector<std::string> random_parameter_names(const mcmc::PosteriorDraws& chain, std::size_t count,
                                                std::uint64_t seed);

}  // namespace sdsem::diag
