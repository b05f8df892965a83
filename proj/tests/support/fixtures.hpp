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

// Small hand-built point sets used by several suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "crag/clustering.hpp"
#include "crag/corpus.hpp"
#include "crag/embedding.hpp"
#include "crag/routing.hpp"
#include "crag/store.hpp"
#include "crag/synthetic.hpp"

namespace crag::fixtures {

struct PointSet {
  std::string name;
  EmbeddingMatrix points;
};

inline std::vector<PointSet> two_cluster_sets() {
  auto make = [](std::string name, std::size_t cols, std::vector<float> v) {
    const std::size_t rows = v.size() / cols;
    return PointSet{std::move(name), EmbeddingMatrix(rows, cols, std::move(v))};
  };
  return {
      make("line_pairs", 1, {0, 1, 10, 11}),
      make("line_runs", 1, {0, 0.5f, 1, 1.5f, 8, 9, 9.5f, 10, 10.5f}),
      make("line_outlier", 1, {0, 1, 2, 3, 4, 5, 6, 7, 20}),
      make("squares", 2, {0, 0, 0, 1, 1, 0, 1, 1, 5, 5, 5, 6, 6, 5, 6, 6}),
      make("unbalanced", 2, {0, 0, 0.5f, 0, 0, 0.5f, 0.5f, 0.5f, 1, 0, 0, 1, 1, 1, 0.5f, 1, 1, 0.5f,
                             10, 0, 10, 1, 11, 0}),
      make("parallel_rows", 2, {0, 0, 1, 0, 2, 0, 3, 0, 4, 0, 5, 0, 0, 5, 1, 5, 2, 5, 3, 5, 4, 5, 5, 5}),
  };
}

/// In-memory store over synthetic blob points, clustered with bisecting K-Means.
inline Store blob_store(const synthetic::BlobData& data, std::size_t beta, std::uint64_t seed) {
  const std::size_t n = data.points.rows();
  std::vector<Chunk> chunks(n);
  for (std::size_t i = 0; i < n; ++i) {
    chunks[i].chunk_id = i;
    chunks[i].doc_id = "blob-" + std::to_string(data.labels[i]);
    chunks[i].char_offset = 0;
    chunks[i].text = "point " + std::to_string(i);
  }
  auto clusters = bisecting_kmeans(data.points.view(), beta, {.seed = seed});
  StoreManifest m;
  m.d = data.points.cols();
  m.n_chunks = n;
  m.beta = beta;
  m.chunk_len = 0;
  m.embed_provider_tag = "synthetic-blobs";
  m.build_seed = seed;
  return make_store(std::move(chunks), data.points, {}, std::move(clusters), m);
}

struct RouterFixture {
  ClusterSet clusters;
  std::vector<RouterExample> examples;
};

/// Queries labelled with their nearest centroid over a clustered blob corpus.
inline RouterFixture router_fixture(const synthetic::BlobSpec& spec, std::size_t queries_per_cluster,
                                    std::uint64_t seed) {
  const auto data = synthetic::make_blobs(spec);
  RouterFixture f;
  f.clusters = bisecting_kmeans(data.points.view(), spec.n_blobs, {.seed = seed});
  const auto q = synthetic::blob_queries(data, spec, queries_per_cluster * spec.n_blobs, seed + 1);
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto r = q.row(i);
    f.examples.push_back({std::vector<float>(r.begin(), r.end()), nearest_centroid(r, f.clusters)});
  }
  return f;
}

/// 3 clusters in 8 dimensions with a 4-unit router, for gradient checks.
inline RouterFixture tiny_router_fixture() {
  return router_fixture({.n_blobs = 3, .per_blob = 10, .d = 8, .spread = 0.05, .seed = 5}, 2, 5);
}

/// Largest relative difference between the analytic router gradient and
/// central finite differences over every parameter, including the mixing
/// weights. Entries where both magnitudes are below `floor` are compared
/// against `floor` instead, so exact zeros do not divide by zero.
inline double router_gradient_error(const RouterModel& model, const RouterFixture& f, double h = 1e-5,
                                    double floor = 1e-8) {
  const auto analytic = router_loss_and_gradient(model, f.clusters, f.examples);
  double worst = 0.0;
  auto check = [&](double numeric, double exact) {
    const double scale = std::max({std::abs(numeric), std::abs(exact), floor});
    worst = std::max(worst, std::abs(numeric - exact) / scale);
  };
  RouterModel m = model;
  auto probe = [&](double& param, double exact) {
    const double saved = param;
    param = saved + h;
    const double up = router_loss(m, f.clusters, f.examples);
    param = saved - h;
    const double down = router_loss(m, f.clusters, f.examples);
    param = saved;
    check((up - down) / (2 * h), exact);
  };
  std::vector<double>* params[] = {&m.w1, &m.b1, &m.w2, &m.b2, &m.wc, &m.bc};
  const std::vector<double>* grads[] = {&analytic.grad.w1, &analytic.grad.b1, &analytic.grad.w2,
                                        &analytic.grad.b2, &analytic.grad.wc, &analytic.grad.bc};
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t i = 0; i < params[t]->size(); ++i) probe((*params[t])[i], (*grads[t])[i]);
  }
  probe(m.mix_a, analytic.grad.mix_a);
  probe(m.mix_b, analytic.grad.mix_b);
  return worst;
}

/// A small model with non-zero biases, so every parameter has a gradient.
inline RouterModel tiny_router_model(std::uint64_t seed) {
  RouterModel m = RouterModel::initialized(3, 8, 4, seed);
  std::mt19937_64 rng(seed + 99);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (double& b : m.b1) b = u(rng);
  for (double& b : m.b2) b = u(rng);
  for (double& b : m.bc) b = u(rng);
  return m;
}

/// Topical filler text: each document draws its words from one topic's
/// vocabulary plus shared function words, so trigram embeddings separate by
/// topic without any document being trivially identical to another.
inline std::vector<Document> topic_documents(std::size_t n_docs, std::size_t words_per_doc, std::uint64_t seed) {
  static const std::vector<std::vector<std::string>> topics = {
      {"handover", "cell", "measurement", "report", "neighbour", "trigger", "threshold", "serving", "target",
       "mobility", "hysteresis", "offset"},
      {"bearer", "qos", "flow", "priority", "latency", "budget", "packet", "delay", "guaranteed", "bitrate",
       "scheduling", "queue"},
      {"authentication", "key", "cipher", "integrity", "protection", "subscriber", "identity", "vector",
       "challenge", "secret", "derivation", "anchor"},
      {"synchronization", "clock", "grandmaster", "timestamp", "precision", "offset", "bridge", "domain",
       "boundary", "transparent", "phase", "frequency"},
      {"slice", "tenant", "isolation", "orchestration", "template", "instance", "lifecycle", "policy",
       "admission", "quota", "catalogue", "blueprint"},
      {"antenna", "beam", "sweep", "codebook", "precoding", "array", "element", "steering", "azimuth",
       "elevation", "gain", "sidelobe"},
  };
  static const std::vector<std::string> common = {"the", "of", "and", "is", "a", "to", "for", "each", "when"};
  std::mt19937_64 rng(seed);
  std::vector<Document> docs;
  for (std::size_t i = 0; i < n_docs; ++i) {
    const auto& topic = topics[i % topics.size()];
    Document d;
    d.doc_id = "doc" + std::to_string(100 + i);
    d.title = d.doc_id;
    for (std::size_t w = 0; w < words_per_doc; ++w) {
      if (w) d.body += (w % 12 == 11) ? ". " : " ";
      const bool filler = rng() % 3 == 0;
      d.body += filler ? common[rng() % common.size()] : topic[rng() % topic.size()];
    }
    d.body += ".";
    docs.push_back(std::move(d));
  }
  return docs;
}

/// In-memory store over chunked documents, built the same way ingestion does.
inline Store text_store(const std::vector<Document>& docs, std::size_t chunk_len, const Embedder& embedder,
                        std::size_t beta, std::uint64_t seed, Glossary glossary = {}) {
  auto chunks = chunk_corpus(docs, chunk_len);
  std::vector<std::string> texts;
  for (const auto& c : chunks) texts.push_back(c.text);
  auto vectors = embed_texts(embedder, texts);
  auto clusters = bisecting_kmeans(vectors.view(), beta, {.seed = seed});
  StoreManifest m;
  m.d = embedder.dim();
  m.n_chunks = chunks.size();
  m.beta = beta;
  m.chunk_len = chunk_len;
  m.embed_provider_tag = embedder.tag();
  m.build_seed = seed;
  return make_store(std::move(chunks), std::move(vectors), std::move(glossary), std::move(clusters), m);
}

}  // namespace crag::fixtures
