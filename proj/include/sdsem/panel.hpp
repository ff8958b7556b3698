#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdsem/lattice_gmrf.hpp"

namespace sdsem::data {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class TransformKind { Identity, Log, DeflatedLog };

// Enough information to map a transformed series back to the original scale.
struct TransformRecord {
  TransformKind kind = TransformKind::Identity;
  std::vector<double> deflator;  // per period, only for DeflatedLog

  double invert(double value, std::size_t period) const;
};

// Series rows are site-major: row = site * n_vars + variable.
struct PanelDataset {
  std::vector<std::string> sites;
  std::vector<std::string> regions;  // empty or one per site
  std::vector<std::string> periods;
  std::vector<std::string> y_vars, x_vars;
  MatrixXd y;  // (N n_y) x T
  MatrixXd x;  // (N n_x) x T
  lattice::AdjacencyMatrix adjacency;
  std::vector<TransformRecord> y_transforms;  // one per y variable

  int n_sites() const { return static_cast<int>(sites.size()); }
  int n_periods() const { return static_cast<int>(y.cols()); }
  int n_y_vars() const { return static_cast<int>(y_vars.size()); }
  int n_x_vars() const { return static_cast<int>(x_vars.size()); }
  void validate() const;

  // First `keep` periods (for holdout splits).
  PanelDataset head(int keep) const;
  PanelDataset tail(int count) const;
};

struct PanelSchema {
  std::string y_var;
  std::vector<std::string> x_vars;
};

// Long CSV with header site,period,variable,value[,region].
PanelDataset load_panel(const std::string& data_path, const std::string& adjacency_path, const PanelSchema& schema);
// Predictor values for future periods from a long CSV (site,period,variable,value):
// rows follow `sites` x `x_vars` (site-major), columns consecutive quarters.
struct FuturePredictors {
  std::vector<std::string> periods;
  MatrixXd x;
};
FuturePredictors load_future_x(const std::string& path, const std::vector<std::string>& sites,
                               const std::vector<std::string>& x_vars);

void write_panel(const PanelDataset& panel, const std::string& data_path, const std::string& adjacency_path);

// Edge list (site_a,site_b) or square 0/1 matrix; sites given in model order.
lattice::AdjacencyMatrix load_adjacency(const std::string& path, const std::vector<std::string>& sites);

// Period labels "YYYYQn".
struct Quarter {
  int year = 0, quarter = 0;
  static Quarter parse(const std::string& label);
  std::string label() const;
  Quarter next() const;
  bool operator==(const Quarter&) const = default;
  auto operator<=>(const Quarter&) const = default;
};

std::vector<double> geometric_interpolate(const std::vector<double>& annual, int subperiods = 4);

struct Transformed {
  std::vector<double> values;
  TransformRecord record;
};
Transformed deflate_and_log(const std::vector<double>& series, const std::vector<double>& deflator);
std::vector<double> invert_transform(const Transformed& t);

}  // namespace sdsem::data
