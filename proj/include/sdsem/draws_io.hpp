#pragma once

#include <string>
#include <vector>

#include "sdsem/mcmc.hpp"

namespace sdsem::io {

// Chain files share a prefix: <prefix>.draws.csv (one row per retained draw,
// columns `param.block.index`), <prefix>.factors.csv and <prefix>.meta.json.
struct ChainFiles {
  std::string draws, factors, meta;
  static ChainFiles for_prefix(const std::string& prefix);
};

void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);
std::string format_double(double v);

// Named scalar columns that fully describe one parameter draw.
std::vector<std::pair<std::string, double>> param_columns(const SdSemParams& p);

void write_chain(const std::string& prefix, const mcmc::PosteriorDraws& draws, const std::string& config_hash,
                 const data::PanelDataset& data);
mcmc::PosteriorDraws read_chain(const std::string& prefix);

// Chain prefixes <dir>/chain_<c> for c = 0, 1, ... that exist on disk.
std::vector<std::string> chain_prefixes(const std::string& dir);

}  // namespace sdsem::io
