#include "sdsem/anchors.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>

#include "sdsem/errors.hpp"
#include "sdsem/random.hpp"

namespace sdsem {

namespace {

KMeansResult lloyd(const Eigen::MatrixXd& x, int k, RandomSource& rng, int max_iter, bool& empty) {
  const Eigen::Index n = x.rows();
  KMeansResult r;
  r.centers.resize(k, x.cols());
  // k-means++ seeding
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  r.centers.row(0) = x.row(rng.uniform_int(0, static_cast<int>(n) - 1));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], (x.row(i) - r.centers.row(c - 1)).squaredNorm());
      total += d2[static_cast<std::size_t>(i)];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total, acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (acc >= u) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = rng.uniform_int(0, static_cast<int>(n) - 1);
    }
    r.centers.row(c) = x.row(pick);
  }

  r.labels.assign(static_cast<std::size_t>(n), -1);
  empty = false;
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double d = (x.row(i) - r.centers.row(c)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (r.labels[static_cast<std::size_t>(i)] != best) {
        r.labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(r.labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(r.labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        empty = true;
        return r;
      }
      r.centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
    }
    if (!changed) break;
  }
  r.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    r.inertia += (x.row(i) - r.centers.row(r.labels[static_cast<std::size_t>(i)])).squaredNorm();
  return r;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int n_init, int max_iter) {
  require(k >= 1 && k <= points.rows(), ErrorCode::DimensionMismatch, "cluster count must be in [1, rows]");
  RandomSource rng = RandomSource::stream(seed, 0x6b6du);
  KMeansResult best;
  bool have = false;
  const int max_attempts = 10 * n_init;
  int good = 0;
  for (int attempt = 0; attempt < max_attempts && good < n_init; ++attempt) {
    bool empty = false;
    KMeansResult r = lloyd(points, k, rng, max_iter, empty);
    if (empty) continue;
    ++good;
    if (!have || r.inertia < best.inertia) {
      best = std::move(r);
      have = true;
    }
  }
  require(have, ErrorCode::EmptyCluster, "k-means left a cluster empty on every attempt");
  return best;
}

std::vector<int> select_anchor_states(const Eigen::MatrixXd& series, int count, std::uint64_t seed,
                                      const std::vector<std::string>& regions, const std::vector<int>& preferred) {
  const int n = static_cast<int>(series.rows());
  require(count >= 1 && count <= n, ErrorCode::DimensionMismatch, "anchor count must be in [1, series]");
  Eigen::VectorXd means = series.rowwise().mean();
  std::vector<int> labels(static_cast<std::size_t>(n));
  if (count == n) {
    std::iota(labels.begin(), labels.end(), 0);
  } else {
    labels = kmeans(series, count, seed).labels;
  }

  std::vector<int> chosen;
  std::set<std::string> used_regions;
  // Visit clusters from the one with the highest top mean down, so earlier
  // picks get first claim on regions.
  std::vector<int> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> top(static_cast<std::size_t>(count), -std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i)
    top[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] =
        std::max(top[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])], means(i));
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return top[static_cast<std::size_t>(a)] > top[static_cast<std::size_t>(b)]; });

  for (int c : order) {
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (labels[static_cast<std::size_t>(i)] == c) members.push_back(i);
    int pick = -1;
    for (int p : preferred)
      if (std::find(members.begin(), members.end(), p) != members.end()) {
        pick = p;
        break;
      }
    if (pick < 0) {
      auto fresh_region = [&](int i) {
        return !regions.empty() && !used_regions.count(regions[static_cast<std::size_t>(i)]);
      };
      auto min_dist = [&](int i) {
        double d = std::numeric_limits<double>::infinity();
        for (int a : chosen) d = std::min(d, (series.row(i) - series.row(a)).norm());
        return d;
      };
      for (int i : members) {
        if (pick < 0) {
          pick = i;
          continue;
        }
        bool fi = fresh_region(i), fp = fresh_region(pick);
        if (fi != fp) {
          if (fi) pick = i;
          continue;
        }
        if (means(i) != means(pick)) {
          if (means(i) > means(pick)) pick = i;
          continue;
        }
        if (min_dist(i) > min_dist(pick)) pick = i;
      }
    }
    chosen.push_back(pick);
    if (!regions.empty()) used_regions.insert(regions[static_cast<std::size_t>(pick)]);
  }
  std::stable_sort(chosen.begin(), chosen.end(), [&](int a, int b) { return means(a) > means(b); });
  return chosen;
}

}  // namespace sdsem
