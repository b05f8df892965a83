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
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "crag/clustering.hpp"
#include "crag/routing.hpp"
#include "crag/store.hpp"
#include "crag/synthetic.hpp"

namespace crag::bench {

enum class Method { kBisecting, kKMeans };

inline const char* to_string(Method m) { return m == Method::kBisecting ? "bisecting" : "kmeans"; }

struct QueryDump {
  std::vector<std::size_t> gold;
  std::vector<std::size_t> retrieved;
};

struct BenchRow {
  Method method = Method::kBisecting;
  std::uint64_t seed = 0;
  std::size_t beta = 0;
  std::size_t gamma = 0;
  std::size_t delta = 0;
  std::size_t chunk_len = 0;
  std::size_t n_chunks = 0;
  double recall_at_delta = 0.0;
  double mean_vectors_scanned = 0.0;
  double scan_fraction = 0.0;
  double latency_us_p50 = 0.0;
  double latency_us_p95 = 0.0;
  double total_sse = 0.0;
  std::vector<QueryDump> queries;  // filled when dumping is requested
};

struct BenchReport {
  std::vector<BenchRow> rows;
};

struct SweepSpec {
  std::vector<std::size_t> betas = {kDefaultBeta};
  std::vector<std::size_t> gammas = {1, 2, 4, kDefaultGamma, kDefaultBeta};
  std::vector<std::size_t> deltas = {10};
  std::vector<std::uint64_t> seeds = {0};
  std::size_t n_trials = 5;
  bool dump_queries = false;
};

/// |gold ∩ retrieved| / |gold|.
inline double recall(const std::vector<std::size_t>& gold, const std::vector<std::size_t>& retrieved) {
  if (gold.empty()) return 1.0;
  std::size_t hit = 0;
  for (auto g : gold) hit += std::find(retrieved.begin(), retrieved.end(), g) != retrieved.end();
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()))) ;
  return v[std::min(v.size() - 1, idx == 0 ? 0 : idx - 1)];
}

/// Clusters `points` with both methods for every beta and measures pruned
/// search (centroid ranking, top-gamma clusters) against the full scan.
inline std::vector<BenchRow> bench_corpus(const EmbeddingMatrix& points, const EmbeddingMatrix& queries,
                                          const SweepSpec& spec, std::uint64_t seed, std::size_t chunk_len = 0) {
  std::vector<BenchRow> rows;
  const std::size_t n = points.rows();
  std::vector<Chunk> chunks(n);
  for (std::size_t i = 0; i < n; ++i) chunks[i].chunk_id = i;

  for (const auto beta : spec.betas) {
    CRAG_REQUIRE(beta >= 1 && beta <= n, "beta " + std::to_string(beta) + " out of range for " + std::to_string(n) + " points");
    for (const auto method : {Method::kBisecting, Method::kKMeans}) {
      ClusterSet cs;
      if (method == Method::kBisecting) {
        BisectingParams bp;
        bp.seed = seed;
        bp.n_trials = spec.n_trials;
        cs = bisecting_kmeans(points.view(), beta, bp);
      } else {
        KMeansParams kp;
        kp.seed = seed;
        cs = kmeans(points.view(), beta, kp);
      }
      const double sse_total = total_sse(cs);
      StoreManifest m;
      m.d = points.cols();
      m.n_chunks = n;
      m.beta = beta;
      m.chunk_len = chunk_len;
      m.embed_provider_tag = "bench";
      m.build_seed = seed;
      const Store store = make_store(chunks, points, Glossary{}, std::move(cs), m);

      for (const auto delta : spec.deltas) {
        std::vector<std::vector<std::size_t>> gold(queries.rows());
        for (std::size_t q = 0; q < queries.rows(); ++q) gold[q] = search_all(store, queries.row(q), delta).ids();
        for (const auto gamma : spec.gammas) {
          if (gamma > beta) continue;
          BenchRow row;
          row.method = method;
          row.seed = seed;
          row.beta = beta;
          row.gamma = gamma;
          row.delta = delta;
          row.chunk_len = chunk_len;
          row.n_chunks = n;
          row.total_sse = sse_total;
          std::vector<double> lat;
          double rec = 0.0, scanned = 0.0;
          for (std::size_t q = 0; q < queries.rows(); ++q) {
            const auto routed = route_oracle(queries.row(q), store.clusters, gamma);
            const auto t0 = std::chrono::steady_clock::now();
            const auto hits = search_clusters(store, queries.row(q), routed, delta);
            const auto t1 = std::chrono::steady_clock::now();
            lat.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
            const auto got = hits.ids();
            rec += recall(gold[q], got);
            scanned += static_cast<double>(hits.vectors_scanned);
            if (spec.dump_queries) row.queries.push_back({gold[q], got});
          }
          const double nq = static_cast<double>(std::max<std::size_t>(queries.rows(), 1));
          row.recall_at_delta = rec / nq;
          row.mean_vectors_scanned = scanned / nq;
          row.scan_fraction = row.mean_vectors_scanned / static_cast<double>(n);
          row.latency_us_p50 = percentile(lat, 0.50);
          row.latency_us_p95 = percentile(lat, 0.95);
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

/// Synthetic sweep: one blob corpus plus in-blob queries per seed.
inline BenchReport run_synthetic_sweep(const SweepSpec& spec, synthetic::BlobSpec blobs, std::size_t n_queries) {
  BenchReport report;
  for (const auto seed : spec.seeds) {
    blobs.seed = seed;
    const auto data = synthetic::make_blobs(blobs);
    const auto queries = synthetic::blob_queries(data, blobs, n_queries, hashing::splitmix64(seed + 1));
    auto rows = bench_corpus(data.points, queries, spec, seed);
    for (auto& r : rows) report.rows.push_back(std::move(r));
  }
  return report;
}

inline nlohmann::json to_json(const BenchRow& r, bool include_timing = true) {
  nlohmann::json j = {{"method", to_string(r.method)},
                      {"seed", r.seed},
                      {"beta", r.beta},
                      {"gamma", r.gamma},
                      {"delta", r.delta},
                      {"chunk_len", r.chunk_len},
                      {"n_chunks", r.n_chunks},
                      {"recall_at_delta", r.recall_at_delta},
                      {"mean_vectors_scanned", r.mean_vectors_scanned},
                      {"scan_fraction", r.scan_fraction},
                      {"total_sse", r.total_sse}};
  j["latency_us_p50"] = include_timing ? nlohmann::json(r.latency_us_p50) : nlohmann::json(nullptr);
  j["latency_us_p95"] = include_timing ? nlohmann::json(r.latency_us_p95) : nlohmann::json(nullptr);
  if (!r.queries.empty()) {
    j["queries"] = nlohmann::json::array();
    for (const auto& q : r.queries) j["queries"].push_back({{"gold", q.gold}, {"retrieved", q.retrieved}});
  }
  return j;
}

inline nlohmann::json to_json(const BenchReport& rep, bool include_timing = true) {
  nlohmann::json j;
  j["note"] =
      "total_sse and recall_at_delta are geometric proxies for clustering quality; "
      "downstream answer accuracy is not measured here";
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rep.rows) j["rows"].push_back(to_json(r, include_timing));
  return j;
}

}  // namespace crag::bench
