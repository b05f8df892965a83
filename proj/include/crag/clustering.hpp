// Copyright 2026 The crag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "crag/embedding.hpp"
#include "crag/error.hpp"

namespace crag {

inline constexpr std::size_t kDefaultBeta = 18;

struct Cluster {
  std::size_t cluster_id = 0;
  std::vector<double> centroid;  // member mean, not re-normalized
  std::vector<std::size_t> member_ids;  // sorted ascending
  double sse = 0.0;

  bool operator==(const Cluster&) const = default;
};

struct ClusterSet {
  std::vector<Cluster> clusters;
  std::size_t d = 0;
  std::size_t n = 0;

  std::size_t size() const { return clusters.size(); }
  bool operator==(const ClusterSet&) const = default;
};

struct KMeansParams {
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double tol = 1e-4;  // on maximum centroid displacement
};

struct BisectingParams {
  std::uint64_t seed = 0;
  std::size_t n_trials = 5;
  std::size_t max_iters = 100;
  double tol = 1e-4;
};

/// One bisecting step, kept for auditing the split invariants.
struct SplitRecord {
  std::size_t parent_id = 0;
  std::size_t parent_size = 0;
  double parent_sse = 0.0;
  double child_sse[2] = {0.0, 0.0};
  double max_other_sse = 0.0;  // largest SSE among the clusters not split
  std::vector<std::size_t> child_members[2];
};

namespace detail {

inline double sq_dist(std::span<const float> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = static_cast<double>(a[i]) - b[i];
    s += t * t;
  }
  return s;
}

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::vector<double> mean_of(MatrixView pts, std::span<const std::size_t> ids) {
  std::vector<double> m(pts.cols, 0.0);
  for (std::size_t id : ids) {
    const auto r = pts.row(id);
    for (std::size_t j = 0; j < pts.cols; ++j) m[j] += r[j];
  }
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (double& x : m) x *= inv;
  return m;
}

inline double sse_about(MatrixView pts, std::span<const std::size_t> ids, std::span<const double> centroid) {
  double s = 0.0;
  for (std::size_t id : ids) s += sq_dist(pts.row(id), centroid);
  return s;
}

inline Cluster make_cluster(MatrixView pts, std::vector<std::size_t> ids, std::size_t cluster_id) {
  std::sort(ids.begin(), ids.end());
  Cluster c;
  c.cluster_id = cluster_id;
  c.centroid = mean_of(pts, ids);
  c.sse = sse_about(pts, ids, c.centroid);
  c.member_ids = std::move(ids);
  return c;
}

// Lloyd iterations over the rows listed in `ids`. Returns, per k, the member
// ids (global row indices) of each cluster; every group is non-empty.
inline std::vector<std::vector<std::size_t>> lloyd(MatrixView pts, std::span<const std::size_t> ids,
                                                   std::size_t k, const KMeansParams& p) {
  const std::size_t m = ids.size();
  const std::size_t d = pts.cols;
  std::mt19937_64 rng(p.seed);

  // Greedy k-means++ seeding: each step samples several candidates by D^2
  // weight and keeps the one giving the lowest potential.
  std::vector<std::vector<double>> centroids;
  centroids.reserve(k);
  std::vector<char> chosen(m, 0);
  auto seed_at = [&](std::size_t local) {
    chosen[local] = 1;
    const auto r = pts.row(ids[local]);
    centroids.emplace_back(r.begin(), r.end());
  };
  auto dist_to = [&](std::size_t a, std::size_t b) {
    const auto ra = pts.row(ids[a]);
    const auto rb = pts.row(ids[b]);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double t = static_cast<double>(ra[j]) - rb[j];
      s += t * t;
    }
    return s;
  };
  const std::size_t n_local = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  const std::size_t first = static_cast<std::size_t>(rng() % m);
  seed_at(first);
  std::vector<double> d2(m);
  for (std::size_t i = 0; i < m; ++i) d2[i] = dist_to(i, first);
  while (centroids.size() < k) {
    double total = 0.0;
    for (double x : d2) total += x;
    std::size_t pick = m;
    if (total > 0.0) {
      double best_pot = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < n_local; ++t) {
        const double target = uniform01(rng) * total;
        double run = 0.0;
        std::size_t cand = m;
        for (std::size_t i = 0; i < m; ++i) {
          if (d2[i] <= 0.0) continue;
          run += d2[i];
          cand = i;
          if (run > target) break;
        }
        double pot = 0.0;
        for (std::size_t i = 0; i < m; ++i) pot += std::min(d2[i], dist_to(i, cand));
        if (pot < best_pot) {
          best_pot = pot;
          pick = cand;
        }
      }
    } else {
      // All remaining mass is zero: take the first unchosen point.
      for (std::size_t i = 0; i < m; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    seed_at(pick);
    for (std::size_t i = 0; i < m; ++i) d2[i] = std::min(d2[i], dist_to(i, pick));
  }

  std::vector<std::size_t> assign(m, 0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(p.max_iters, 1); ++iter) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < m; ++i) {
      const auto r = pts.row(ids[i]);
      std::size_t best = 0;
      double best_d = sq_dist(r, centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double dd = sq_dist(r, centroids[c]);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      assign[i] = best;
      ++counts[best];
    }

    // Empty-cluster repair: move the point farthest from its centroid.
    std::vector<char> moved(m, 0);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = m;
      double far_d = -1.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (moved[i] || counts[assign[i]] < 2) continue;
        const double dd = sq_dist(pts.row(ids[i]), centroids[assign[i]]);
        if (dd > far_d) {
          far_d = dd;
          far = i;
        }
      }
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
      moved[far] = 1;
    }

    std::vector<std::vector<double>> next(k, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
      const auto r = pts.row(ids[i]);
      auto& acc = next[assign[i]];
      for (std::size_t j = 0; j < d; ++j) acc[j] += r[j];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double inv = 1.0 / static_cast<double>(counts[c]);
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        next[c][j] *= inv;
        const double t = next[c][j] - centroids[c][j];
        s += t * t;
      }
      shift = std::max(shift, std::sqrt(s));
    }
    centroids = std::move(next);
    if (shift < p.tol) break;
  }

  std::vector<std::vector<std::size_t>> groups(k);
  for (std::size_t i = 0; i < m; ++i) groups[assign[i]].push_back(ids[i]);
  return groups;
}

}  // namespace detail

/// Sum of squared Euclidean distances of the points to their component-wise mean.
inline double sse(MatrixView points) {
  CRAG_REQUIRE(points.rows > 0, "sse of an empty point set");
  std::vector<std::size_t> ids(points.rows);
  std::iota(ids.begin(), ids.end(), 0);
  const auto mean = detail::mean_of(points, ids);
  return detail::sse_about(points, ids, mean);
}

inline double sse(MatrixView points, std::span<const std::size_t> ids) {
  CRAG_REQUIRE(!ids.empty(), "sse of an empty point set");
  const auto mean = detail::mean_of(points, ids);
  return detail::sse_about(points, ids, mean);
}

inline double total_sse(const ClusterSet& cs) {
  double s = 0.0;
  for (const auto& c : cs.clusters) s += c.sse;
  return s;
}

/// Regular K-Means: seeded k-means++ initialization followed by Lloyd
/// iterations until the largest centroid move is below `tol`. Cluster ids are
/// 0..k-1 in seeding order.
inline ClusterSet kmeans(MatrixView points, std::size_t k, const KMeansParams& params = {}) {
  CRAG_REQUIRE(k >= 1, "kmeans requires k >= 1");
  CRAG_REQUIRE(k <= points.rows, "kmeans requires k <= number of points (k=" + std::to_string(k) +
                                     ", n=" + std::to_string(points.rows) + ")");
  std::vector<std::size_t> ids(points.rows);
  std::iota(ids.begin(), ids.end(), 0);
  auto groups = detail::lloyd(points, ids, k, params);
  ClusterSet cs;
  cs.d = points.cols;
  cs.n = points.rows;
  for (std::size_t c = 0; c < k; ++c) cs.clusters.push_back(detail::make_cluster(points, std::move(groups[c]), c));
  return cs;
}

struct BisectingResult {
  ClusterSet clusters;
  std::vector<SplitRecord> splits;
};

/// Bisecting K-Means: start with one cluster holding every point, then
/// repeatedly split the cluster with the largest SSE (ties: lowest id; only
/// clusters with at least two members are eligible) by 2-means, keeping the
/// best of `n_trials` restarts. The child holding the smallest member id keeps
/// the parent's id; the other is appended.
inline BisectingResult bisecting_kmeans_traced(MatrixView points, std::size_t beta,
                                               const BisectingParams& params = {}) {
  CRAG_REQUIRE(beta >= 1, "bisecting_kmeans requires beta >= 1");
  CRAG_REQUIRE(beta <= points.rows, "bisecting_kmeans requires beta <= number of points (beta=" +
                                        std::to_string(beta) + ", n=" + std::to_string(points.rows) + ")");
  CRAG_REQUIRE(params.n_trials >= 1, "n_trials must be >= 1");
  BisectingResult out;
  out.clusters.d = points.cols;
  out.clusters.n = points.rows;
  std::vector<std::size_t> all(points.rows);
  std::iota(all.begin(), all.end(), 0);
  auto& cl = out.clusters.clusters;
  cl.push_back(detail::make_cluster(points, std::move(all), 0));

  for (std::size_t step = 0; step + 1 < beta; ++step) {
    std::size_t target = cl.size();
    for (std::size_t c = 0; c < cl.size(); ++c) {
      if (cl[c].member_ids.size() < 2) continue;
      if (target == cl.size() || cl[c].sse > cl[target].sse) target = c;
    }
    const Cluster parent = cl[target];

    std::optional<std::pair<Cluster, Cluster>> best;
    double best_sse = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < params.n_trials; ++t) {
      KMeansParams kp;
      kp.seed = hashing::splitmix64(params.seed ^ hashing::splitmix64((step << 16) | t));
      kp.max_iters = params.max_iters;
      kp.tol = params.tol;
      auto groups = detail::lloyd(points, parent.member_ids, 2, kp);
      Cluster a = detail::make_cluster(points, std::move(groups[0]), 0);
      Cluster b = detail::make_cluster(points, std::move(groups[1]), 0);
      if (b.member_ids.front() < a.member_ids.front()) std::swap(a, b);
      const double s = a.sse + b.sse;
      if (s < best_sse) {
        best_sse = s;
        best.emplace(std::move(a), std::move(b));
      }
    }

    SplitRecord rec;
    rec.parent_id = parent.cluster_id;
    rec.parent_size = parent.member_ids.size();
    rec.parent_sse = parent.sse;
    rec.child_sse[0] = best->first.sse;
    rec.child_sse[1] = best->second.sse;
    rec.child_members[0] = best->first.member_ids;
    rec.child_members[1] = best->second.member_ids;
    for (std::size_t c = 0; c < cl.size(); ++c) {
      if (c != target) rec.max_other_sse = std::max(rec.max_other_sse, cl[c].sse);
    }
    out.splits.push_back(rec);

    best->first.cluster_id = target;
    best->second.cluster_id = cl.size();
    cl[target] = std::move(best->first);
    cl.push_back(std::move(best->second));
  }
  return out;
}

inline ClusterSet bisecting_kmeans(MatrixView points, std::size_t beta, const BisectingParams& params = {}) {
  return bisecting_kmeans_traced(points, beta, params).clusters;
}

/// Returns a description of the first structural violation, or nullopt when
/// the clusters partition {0..n-1} with consistent ids and shapes.
inline std::optional<std::string> partition_violation(const ClusterSet& cs) {
  std::vector<char> seen(cs.n, 0);
  std::size_t total = 0;
  for (std::size_t c = 0; c < cs.clusters.size(); ++c) {
    const auto& cl = cs.clusters[c];
    if (cl.cluster_id != c) return "cluster at position " + std::to_string(c) + " has id " + std::to_string(cl.cluster_id);
    if (cl.member_ids.empty()) return "cluster " + std::to_string(c) + " is empty";
    if (cl.centroid.size() != cs.d) return "cluster " + std::to_string(c) + " centroid has wrong dimension";
    for (std::size_t i = 0; i < cl.member_ids.size(); ++i) {
      const auto id = cl.member_ids[i];
      if (i > 0 && cl.member_ids[i - 1] >= id) return "cluster " + std::to_string(c) + " members not strictly sorted";
      if (id >= cs.n) return "member id " + std::to_string(id) + " out of range";
      if (seen[id]) return "member id " + std::to_string(id) + " appears in two clusters";
      seen[id] = 1;
    }
    total += cl.member_ids.size();
  }
  if (total != cs.n) return "clusters cover " + std::to_string(total) + " of " + std::to_string(cs.n) + " ids";
  return std::nullopt;
}

}  // namespace crag
