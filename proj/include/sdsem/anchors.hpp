#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sdsem {

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centers;
  double inertia = 0.0;
};

// Lloyd's algorithm with k-means++ seeding, best of n_init restarts. Rows of
// `points` are observations. Throws EmptyCluster if every attempt leaves a
// cluster empty.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int n_init = 10, int max_iter = 200);

// One anchor series per cluster of the rows of `series` (n x T). Within a
// cluster the pick prefers a region label not yet used, then the highest
// series mean, then the largest distance to anchors already chosen. A member
// of `preferred` wins when its cluster contains one. Result is ordered by
// descending series mean.
std::vector<int> select_anchor_states(const Eigen::MatrixXd& series, int count, std::uint64_t seed,
                                      const std::vector<std::string>& regions = {},
                                      const std::vector<int>& preferred = {});

}  // namespace sdsem
