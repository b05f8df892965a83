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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "crag/clustering.hpp"
#include "crag/embedding.hpp"
#include "crag/error.hpp"

namespace crag::synthetic {

/// Isotropic Gaussian blobs around random unit-norm centers. `spread` is the
/// per-coordinate standard deviation; centers are kept at least
/// `min_separation * spread * sqrt(d)` apart, i.e. `min_separation` times the
/// RMS distance of a blob point from its center.
struct BlobSpec {
  std::size_t n_blobs = 18;
  std::size_t per_blob = 100;
  std::size_t d = 32;
  double spread = 0.015;
  double min_separation = 10.0;
  bool normalize = true;
  std::uint64_t seed = 0;
};

struct BlobData {
  EmbeddingMatrix points;
  std::vector<std::size_t> labels;  // generating blob of each point
  std::vector<std::vector<double>> centers;
};

class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return detail::uniform01(rng_); }

  // Box-Muller, written out so sequences do not depend on the standard library.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t next() { return rng_(); }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::vector<double> random_unit(Gaussian& g, std::size_t d) {
  std::vector<double> v(d);
  double n = 0.0;
  for (double& x : v) {
    x = g.normal();
    n += x * x;
  }
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

inline double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline BlobData make_blobs(const BlobSpec& spec) {
  CRAG_REQUIRE(spec.n_blobs >= 1 && spec.per_blob >= 1 && spec.d >= 2, "invalid blob spec");
  Gaussian g(spec.seed);
  BlobData out;
  const double min_dist = spec.min_separation * spec.spread * std::sqrt(static_cast<double>(spec.d));
  for (std::size_t b = 0; b < spec.n_blobs; ++b) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw PreconditionError("cannot place blob centers with the requested separation");
      auto c = random_unit(g, spec.d);
      bool ok = true;
      for (const auto& other : out.centers) ok = ok && distance(c, other) >= min_dist;
      if (ok) {
        out.centers.push_back(std::move(c));
        break;
      }
    }
  }
  out.points = EmbeddingMatrix(spec.n_blobs * spec.per_blob, spec.d);
  std::size_t row = 0;
  for (std::size_t b = 0; b < spec.n_blobs; ++b) {
    for (std::size_t i = 0; i < spec.per_blob; ++i, ++row) {
      auto r = out.points.row(row);
      for (std::size_t j = 0; j < spec.d; ++j) r[j] = static_cast<float>(out.centers[b][j] + spec.spread * g.normal());
      if (spec.normalize) normalize_in_place(r);
      out.labels.push_back(b);
    }
  }
  return out;
}

/// Queries drawn inside randomly chosen blobs, with the blob's spread.
inline EmbeddingMatrix blob_queries(const BlobData& data, const BlobSpec& spec, std::size_t count, std::uint64_t seed) {
  Gaussian g(seed);
  EmbeddingMatrix q(count, spec.d);
  for (std::size_t i = 0; i < count; ++i) {
    const auto b = static_cast<std::size_t>(g.next() % data.centers.size());
    auto r = q.row(i);
    for (std::size_t j = 0; j < spec.d; ++j) r[j] = static_cast<float>(data.centers[b][j] + spec.spread * g.normal());
    normalize_in_place(r);
  }
  return q;
}

/// Uniformly random unit directions.
inline EmbeddingMatrix random_queries(std::size_t count, std::size_t d, std::uint64_t seed) {
  Gaussian g(seed);
  EmbeddingMatrix q(count, d);
  for (std::size_t i = 0; i < count; ++i) {
    const auto v = random_unit(g, d);
    for (std::size_t j = 0; j < d; ++j) q.row(i)[j] = static_cast<float>(v[j]);
  }
  return q;
}

}  // namespace crag::synthetic
