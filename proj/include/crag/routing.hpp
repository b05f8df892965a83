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
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "crag/binary_io.hpp"
#include "crag/clustering.hpp"
#include "crag/embedding.hpp"
#include "crag/error.hpp"

namespace crag {

inline constexpr std::size_t kDefaultGamma = 8;
inline constexpr std::size_t kRouterHidden = 256;

/// Entry j is the inner product of the query with centroid j.
inline std::vector<double> centroid_scores(std::span<const float> query, const ClusterSet& cs) {
  CRAG_REQUIRE(query.size() == cs.d, "query dimension " + std::to_string(query.size()) + " != cluster dimension " +
                                         std::to_string(cs.d));
  std::vector<double> s(cs.size());
  for (std::size_t j = 0; j < cs.size(); ++j) s[j] = dot(query, std::span<const double>(cs.clusters[j].centroid));
  return s;
}

/// Indices of the `k` largest values, descending, ties by ascending index.
inline std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto before = [&](std::size_t a, std::size_t b) {
    return values[a] > values[b] || (values[a] == values[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  idx.resize(k);
  return idx;
}

/// Routes by ranking centroid inner products directly.
inline std::vector<std::size_t> route_oracle(std::span<const float> query, const ClusterSet& cs,
                                             std::size_t gamma = kDefaultGamma) {
  CRAG_REQUIRE(gamma >= 1 && gamma <= cs.size(), "gamma must be in [1, " + std::to_string(cs.size()) + "], got " +
                                                     std::to_string(gamma));
  const auto s = centroid_scores(query, cs);
  return top_indices(s, gamma);
}

/// Cluster whose centroid is closest in squared Euclidean distance (ties: lowest id).
inline std::size_t nearest_centroid(std::span<const float> query, const ClusterSet& cs) {
  CRAG_REQUIRE(cs.size() > 0, "nearest_centroid on an empty cluster set");
  CRAG_REQUIRE(query.size() == cs.d, "query dimension mismatch");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cs.size(); ++j) {
    const double dd = detail::sq_dist(query, cs.clusters[j].centroid);
    if (dd < best_d) {
      best_d = dd;
      best = j;
    }
  }
  return best;
}

enum class Activation : std::uint32_t { kRelu = 0, kIdentity = 1 };

/// Learned router: the centroid-score vector and the query are each projected
/// to `hidden` units, mixed as mix_a * I1 + mix_b * I2, and mapped to one logit
/// per cluster followed by a softmax. Matrices are row-major, output-major
/// (w1 is hidden x n_clusters, w2 is hidden x d, wc is n_clusters x hidden).
struct RouterModel {
  std::size_t n_clusters = 0;
  std::size_t d = 0;
  std::size_t hidden = kRouterHidden;
  Activation activation = Activation::kRelu;
  std::vector<double> w1, b1, w2, b2, wc, bc;
  double mix_a = 0.5;
  double mix_b = 0.5;

  bool operator==(const RouterModel&) const = default;

  static RouterModel zeros(std::size_t n_clusters, std::size_t d, std::size_t hidden = kRouterHidden) {
    RouterModel m;
    m.n_clusters = n_clusters;
    m.d = d;
    m.hidden = hidden;
    m.w1.assign(hidden * n_clusters, 0.0);
    m.b1.assign(hidden, 0.0);
    m.w2.assign(hidden * d, 0.0);
    m.b2.assign(hidden, 0.0);
    m.wc.assign(n_clusters * hidden, 0.0);
    m.bc.assign(n_clusters, 0.0);
    return m;
  }

  /// Weights uniform in ±1/sqrt(fan_in), biases zero.
  static RouterModel initialized(std::size_t n_clusters, std::size_t d, std::size_t hidden, std::uint64_t seed) {
    RouterModel m = zeros(n_clusters, d, hidden);
    std::mt19937_64 rng(seed);
    auto fill = [&](std::vector<double>& w, std::size_t fan_in) {
      const double lim = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& x : w) x = (2.0 * detail::uniform01(rng) - 1.0) * lim;
    };
    fill(m.w1, n_clusters);
    fill(m.w2, d);
    fill(m.wc, hidden);
    return m;
  }

  bool shapes_valid() const {
    return w1.size() == hidden * n_clusters && b1.size() == hidden && w2.size() == hidden * d && b2.size() == hidden &&
           wc.size() == n_clusters * hidden && bc.size() == n_clusters;
  }
};

struct ClusterDistribution {
  std::vector<double> probs;
};

namespace detail {

struct RouterTrace {
  std::vector<double> scores, z1, h1, z2, h2, mixed, logits, probs;
};

inline double activate(Activation a, double z) { return a == Activation::kRelu ? std::max(0.0, z) : z; }
inline double activate_grad(Activation a, double z) { return a == Activation::kRelu ? (z > 0.0 ? 1.0 : 0.0) : 1.0; }

inline void affine(std::span<const double> w, std::span<const double> b, std::span<const double> x,
                   std::vector<double>& out) {
  const std::size_t rows = b.size();
  const std::size_t cols = x.size();
  out.assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = b[r];
    const double* wr = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x[c];
    out[r] = s;
  }
}

inline void require_finite(std::span<const double> v, const char* stage) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in router stage '") + stage + "'");
  }
}

inline void softmax(std::span<const double> logits, std::vector<double>& probs) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
}

inline void router_forward(const RouterModel& m, std::span<const double> scores, std::span<const float> query,
                           RouterTrace& t) {
  t.scores.assign(scores.begin(), scores.end());
  std::vector<double> q(query.begin(), query.end());
  affine(m.w1, m.b1, t.scores, t.z1);
  require_finite(t.z1, "input-1 projection");
  affine(m.w2, m.b2, q, t.z2);
  require_finite(t.z2, "input-2 projection");
  t.h1.resize(m.hidden);
  t.h2.resize(m.hidden);
  t.mixed.resize(m.hidden);
  for (std::size_t i = 0; i < m.hidden; ++i) {
    t.h1[i] = activate(m.activation, t.z1[i]);
    t.h2[i] = activate(m.activation, t.z2[i]);
    t.mixed[i] = m.mix_a * t.h1[i] + m.mix_b * t.h2[i];
  }
  require_finite(t.mixed, "mixing");
  affine(m.wc, m.bc, t.mixed, t.logits);
  require_finite(t.logits, "classifier");
  softmax(t.logits, t.probs);
  require_finite(t.probs, "softmax");
}

inline void check_shapes(const RouterModel& m, const ClusterSet& cs) {
  CRAG_REQUIRE(m.shapes_valid(), "router model tensors have inconsistent shapes");
  CRAG_REQUIRE(m.n_clusters == cs.size(), "router model expects " + std::to_string(m.n_clusters) +
                                              " clusters, cluster set has " + std::to_string(cs.size()));
  CRAG_REQUIRE(m.d == cs.d, "router model dimension does not match cluster set");
}

}  // namespace detail

inline ClusterDistribution softmax(std::span<const double> logits) {
  CRAG_REQUIRE(!logits.empty(), "softmax of an empty vector");
  ClusterDistribution out;
  detail::softmax(logits, out.probs);
  return out;
}

inline ClusterDistribution route_forward(const RouterModel& model, std::span<const float> query, const ClusterSet& cs) {
  detail::check_shapes(model, cs);
  const auto s = centroid_scores(query, cs);
  detail::RouterTrace t;
  detail::router_forward(model, s, query, t);
  return {std::move(t.probs)};
}

inline std::vector<std::size_t> route_topk(const RouterModel& model, std::span<const float> query, const ClusterSet& cs,
                                           std::size_t gamma = kDefaultGamma) {
  CRAG_REQUIRE(gamma >= 1 && gamma <= cs.size(), "gamma must be in [1, " + std::to_string(cs.size()) + "]");
  const auto dist = route_forward(model, query, cs);
  return top_indices(dist.probs, gamma);
}

struct RouterExample {
  std::vector<float> query;
  std::size_t target = 0;
};

struct RouterHyperparams {
  std::size_t hidden = kRouterHidden;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double mix_a = 0.5;
  double mix_b = 0.5;
  bool learn_mix = false;
  Activation activation = Activation::kRelu;
  std::uint64_t seed = 0;
};

struct TrainingReport {
  double initial_loss = 0.0;
  std::vector<double> loss_per_epoch;  // full-data loss after each epoch
  double final_top1 = 0.0;
  std::size_t epochs_run = 0;
};

struct TrainedRouter {
  RouterModel model;
  TrainingReport report;
};

/// Gradient tensors share the model layout; `loss` is the mean cross-entropy.
struct RouterGradient {
  RouterModel grad;
  double loss = 0.0;
};

namespace detail {

struct PreparedExample {
  std::vector<double> scores;
  std::span<const float> query;
  std::size_t target;
};

inline std::vector<PreparedExample> prepare(const ClusterSet& cs, std::span<const RouterExample> examples) {
  std::vector<PreparedExample> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    CRAG_REQUIRE(e.target < cs.size(), "training target " + std::to_string(e.target) + " is not a cluster id");
    out.push_back({centroid_scores(e.query, cs), e.query, e.target});
  }
  return out;
}

inline double xent(const RouterTrace& t, std::size_t target) {
  const double mx = *std::max_element(t.logits.begin(), t.logits.end());
  double sum = 0.0;
  for (double l : t.logits) sum += std::exp(l - mx);
  return -(t.logits[target] - mx - std::log(sum));
}

// Accumulates d(loss)/d(params) for one example, scaled by `weight`.
inline void backprop(const RouterModel& m, const PreparedExample& ex, const RouterTrace& t, double weight,
                     RouterModel& g) {
  const std::size_t k = m.n_clusters;
  const std::size_t h = m.hidden;
  std::vector<double> dlogits(k);
  for (std::size_t j = 0; j < k; ++j) dlogits[j] = weight * (t.probs[j] - (j == ex.target ? 1.0 : 0.0));
  std::vector<double> dmixed(h, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    g.bc[j] += dlogits[j];
    double* gw = g.wc.data() + j * h;
    const double* w = m.wc.data() + j * h;
    for (std::size_t i = 0; i < h; ++i) {
      gw[i] += dlogits[j] * t.mixed[i];
      dmixed[i] += dlogits[j] * w[i];
    }
  }
  for (std::size_t i = 0; i < h; ++i) {
    g.mix_a += dmixed[i] * t.h1[i];
    g.mix_b += dmixed[i] * t.h2[i];
    const double dz1 = dmixed[i] * m.mix_a * activate_grad(m.activation, t.z1[i]);
    const double dz2 = dmixed[i] * m.mix_b * activate_grad(m.activation, t.z2[i]);
    g.b1[i] += dz1;
    g.b2[i] += dz2;
    if (dz1 != 0.0) {
      double* gw = g.w1.data() + i * k;
      for (std::size_t c = 0; c < k; ++c) gw[c] += dz1 * ex.scores[c];
    }
    if (dz2 != 0.0) {
      double* gw = g.w2.data() + i * m.d;
      for (std::size_t c = 0; c < m.d; ++c) gw[c] += dz2 * static_cast<double>(ex.query[c]);
    }
  }
}

inline double mean_loss(const RouterModel& m, std::span<const PreparedExample> ex, double* top1 = nullptr) {
  RouterTrace t;
  double loss = 0.0;
  std::size_t hits = 0;
  for (const auto& e : ex) {
    router_forward(m, e.scores, e.query, t);
    loss += xent(t, e.target);
    if (top_indices(t.probs, 1).front() == e.target) ++hits;
  }
  if (top1) *top1 = static_cast<double>(hits) / static_cast<double>(ex.size());
  return loss / static_cast<double>(ex.size());
}

template <typename F>
void for_each_tensor(RouterModel& a, const RouterModel& b, F&& f) {
  f(a.w1, b.w1);
  f(a.b1, b.b1);
  f(a.w2, b.w2);
  f(a.b2, b.b2);
  f(a.wc, b.wc);
  f(a.bc, b.bc);
}

}  // namespace detail

/// Mean cross-entropy of the router over `examples` and its analytic gradient.
inline RouterGradient router_loss_and_gradient(const RouterModel& model, const ClusterSet& cs,
                                               std::span<const RouterExample> examples) {
  detail::check_shapes(model, cs);
  CRAG_REQUIRE(!examples.empty(), "router loss needs at least one example");
  const auto prepared = detail::prepare(cs, examples);
  RouterGradient out;
  out.grad = RouterModel::zeros(model.n_clusters, model.d, model.hidden);
  out.grad.mix_a = out.grad.mix_b = 0.0;
  const double w = 1.0 / static_cast<double>(prepared.size());
  detail::RouterTrace t;
  for (const auto& e : prepared) {
    detail::router_forward(model, e.scores, e.query, t);
    out.loss += w * detail::xent(t, e.target);
    detail::backprop(model, e, t, w, out.grad);
  }
  return out;
}

inline double router_loss(const RouterModel& model, const ClusterSet& cs, std::span<const RouterExample> examples) {
  detail::check_shapes(model, cs);
  CRAG_REQUIRE(!examples.empty(), "router loss needs at least one example");
  const auto prepared = detail::prepare(cs, examples);
  return detail::mean_loss(model, prepared);
}

/// Mini-batch gradient descent with momentum on the mean cross-entropy.
/// Shuffling is seeded; the whole run is deterministic for fixed inputs.
inline TrainedRouter train_router(const ClusterSet& cs, std::span<const RouterExample> examples,
                                  const RouterHyperparams& hp = {}) {
  CRAG_REQUIRE(!examples.empty(), "train_router needs at least one example");
  CRAG_REQUIRE(cs.size() >= 1, "train_router needs at least one cluster");
  CRAG_REQUIRE(hp.batch_size >= 1 && hp.hidden >= 1, "batch_size and hidden must be >= 1");
  const auto prepared = detail::prepare(cs, examples);

  TrainedRouter out;
  RouterModel& m = out.model;
  m = RouterModel::initialized(cs.size(), cs.d, hp.hidden, hp.seed);
  m.activation = hp.activation;
  m.mix_a = hp.mix_a;
  m.mix_b = hp.mix_b;
  RouterModel vel = RouterModel::zeros(m.n_clusters, m.d, m.hidden);
  vel.mix_a = vel.mix_b = 0.0;

  out.report.initial_loss = detail::mean_loss(m, prepared, &out.report.final_top1);
  std::mt19937_64 rng(hashing::splitmix64(hp.seed ^ 0xA5A5A5A5ULL));
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), 0);
  detail::RouterTrace t;

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(start + hp.batch_size, order.size());
      RouterModel g = RouterModel::zeros(m.n_clusters, m.d, m.hidden);
      g.mix_a = g.mix_b = 0.0;
      const double w = 1.0 / static_cast<double>(end - start);
      try {
        for (std::size_t b = start; b < end; ++b) {
          const auto& e = prepared[order[b]];
          detail::router_forward(m, e.scores, e.query, t);
          detail::backprop(m, e, t, w, g);
        }
      } catch (const NumericError& e) {
        throw TrainingError(std::string("training diverged (") + e.what() + "); lower the learning rate");
      }
      detail::for_each_tensor(vel, g, [&](std::vector<double>& v, const std::vector<double>& gv) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = hp.momentum * v[i] - hp.learning_rate * gv[i];
      });
      detail::for_each_tensor(m, vel, [](std::vector<double>& p, const std::vector<double>& v) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] += v[i];
      });
      if (hp.learn_mix) {
        vel.mix_a = hp.momentum * vel.mix_a - hp.learning_rate * g.mix_a;
        vel.mix_b = hp.momentum * vel.mix_b - hp.learning_rate * g.mix_b;
        m.mix_a += vel.mix_a;
        m.mix_b += vel.mix_b;
      }
    }
    double loss;
    try {
      loss = detail::mean_loss(m, prepared, &out.report.final_top1);
    } catch (const NumericError& e) {
      throw TrainingError(std::string("training diverged (") + e.what() + "); lower the learning rate");
    }
    if (!std::isfinite(loss)) {
      throw TrainingError("loss became non-finite at epoch " + std::to_string(epoch + 1) +
                          "; lower the learning rate");
    }
    out.report.loss_per_epoch.push_back(loss);
    ++out.report.epochs_run;
  }
  return out;
}

/// Router file: magic "CRTR", u32 version, u32 n_clusters, u32 d, u32 hidden,
/// u32 activation, f32 mix_a, f32 mix_b, then w1 b1 w2 b2 wc bc as float32,
/// all little-endian.
inline std::string serialize_router(const RouterModel& m) {
  CRAG_REQUIRE(m.shapes_valid(), "router model tensors have inconsistent shapes");
  io::ByteWriter w;
  w.raw("CRTR");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(m.n_clusters));
  w.u32(static_cast<std::uint32_t>(m.d));
  w.u32(static_cast<std::uint32_t>(m.hidden));
  w.u32(static_cast<std::uint32_t>(m.activation));
  w.f32(static_cast<float>(m.mix_a));
  w.f32(static_cast<float>(m.mix_b));
  for (const auto* t : {&m.w1, &m.b1, &m.w2, &m.b2, &m.wc, &m.bc}) {
    for (double x : *t) w.f32(static_cast<float>(x));
  }
  return w.bytes();
}

inline RouterModel deserialize_router(std::string_view bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  if (bytes.size() < 4 || r.raw(4) != "CRTR") throw FormatError(source + ": bad magic, not a router model");
  if (r.u32() != 1) r.fail("unsupported router format version");
  const std::size_t k = r.u32();
  const std::size_t d = r.u32();
  const std::size_t h = r.u32();
  const auto act = r.u32();
  if (act > 1) r.fail("unknown activation");
  if ((h * k * 2 + h * d + 2 * h + k) * 4 > r.remaining()) r.fail("tensor section exceeds file size");
  RouterModel m = RouterModel::zeros(k, d, h);
  m.activation = static_cast<Activation>(act);
  m.mix_a = r.f32();
  m.mix_b = r.f32();
  for (auto* t : {&m.w1, &m.b1, &m.w2, &m.b2, &m.wc, &m.bc}) {
    for (double& x : *t) {
      x = r.f32();
      if (!std::isfinite(x)) r.fail("non-finite router weight");
    }
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return m;
}

inline void save_router(const RouterModel& m, const std::filesystem::path& path) {
  io::atomic_write(path, serialize_router(m));
}

inline RouterModel load_router(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw ConfigError("router model not found: " + path.string());
  return deserialize_router(io::read_all(path), path.string());
}

}  // namespace crag
