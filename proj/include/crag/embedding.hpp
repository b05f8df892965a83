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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crag/error.hpp"
#include "crag/utf8.hpp"

namespace crag {

inline constexpr std::size_t kDefaultDim = 1024;

/// Non-owning row-major view over n x d float32 values.
struct MatrixView {
  std::span<const float> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const float> row(std::size_t i) const { return data.subspan(i * cols, cols); }
};

/// Row-major n x d matrix of float32. Row i belongs to chunk_id i.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), values_(rows * cols, 0.0f) {}
  EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<float> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    CRAG_REQUIRE(values_.size() == rows_ * cols_, "matrix value count does not match shape");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<float> row(std::size_t i) { return {values_.data() + i * cols_, cols_}; }
  std::span<const float> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }
  const std::vector<float>& values() const { return values_; }
  MatrixView view() const { return {values_, rows_, cols_}; }

  void append_row(std::span<const float> r) {
    if (rows_ == 0 && cols_ == 0) cols_ = r.size();
    CRAG_REQUIRE(r.size() == cols_, "row dimension mismatch");
    values_.insert(values_.end(), r.begin(), r.end());
    ++rows_;
  }

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> values_;
};

/// Inner product with double accumulation.
inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

inline double dot(std::span<const float> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

inline double l2_norm(std::span<const float> v) { return std::sqrt(dot(v, v)); }

/// Scales `v` to unit L2 norm; a zero vector becomes e_0.
inline void normalize_in_place(std::span<float> v) {
  const double n = l2_norm(v);
  if (n == 0.0) {
    std::fill(v.begin(), v.end(), 0.0f);
    if (!v.empty()) v[0] = 1.0f;
    return;
  }
  for (float& x : v) x = static_cast<float>(static_cast<double>(x) / n);
}

/// Embedding backend. Implementations return raw (possibly unnormalized)
/// rows; `embed_texts` applies the normalization contract on top.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  /// Short provenance string recorded in store manifests.
  virtual std::string tag() const = 0;
  virtual EmbeddingMatrix embed(std::span<const std::string> texts) const = 0;
};

namespace hashing {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;

}  // namespace hashing

/// Deterministic model-free embedder: character trigrams of the ASCII-lowercased
/// text are feature-hashed into `d` buckets (seeded FNV-1a), each with a ±1 sign
/// from a second hash, then L2-normalized. Texts shorter than three characters
/// contribute a single gram of the whole text; empty text maps to e_0.
inline std::vector<float> test_embed(std::string_view text, std::size_t d, std::uint64_t seed) {
  CRAG_REQUIRE(d >= 8, "test_embed requires d >= 8");
  std::vector<double> acc(d, 0.0);
  std::vector<float> out(d, 0.0f);
  const std::u32string chars = utf8::decode(text::ascii_lower(text));
  if (chars.empty()) {
    out[0] = 1.0f;
    return out;
  }
  const std::uint64_t basis = hashing::kFnvOffset ^ hashing::splitmix64(seed);
  const std::size_t gram = std::min<std::size_t>(3, chars.size());
  std::string bytes;
  for (std::size_t i = 0; i + gram <= chars.size(); ++i) {
    bytes.clear();
    for (std::size_t j = 0; j < gram; ++j) utf8::append(bytes, chars[i + j]);
    const std::uint64_t h = hashing::fnv1a64(bytes, basis);
    const std::uint64_t s = hashing::splitmix64(h ^ 0x5851F42D4C957F2DULL);
    acc[h % d] += (s & 1U) ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double x : acc) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    out[0] = 1.0f;
    return out;
  }
  for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t d = kDefaultDim, std::uint64_t seed = 0) : d_(d), seed_(seed) {
    CRAG_REQUIRE(d >= 8, "hash embedder dimension must be >= 8");
  }

  std::size_t dim() const override { return d_; }
  std::string tag() const override { return "hash-trigram:d=" + std::to_string(d_) + ":seed=" + std::to_string(seed_); }
  std::uint64_t seed() const { return seed_; }

  EmbeddingMatrix embed(std::span<const std::string> texts) const override {
    EmbeddingMatrix m(texts.size(), d_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const auto v = test_embed(texts[i], d_, seed_);
      std::copy(v.begin(), v.end(), m.row(i).begin());
    }
    return m;
  }

 private:
  std::size_t d_;
  std::uint64_t seed_;
};

/// Embeds `texts` through `provider`, checks the dimension/finiteness contract
/// and L2-normalizes each row when `normalize` is set.
inline EmbeddingMatrix embed_texts(const Embedder& provider, std::span<const std::string> texts,
                                   bool normalize = true) {
  CRAG_REQUIRE(!texts.empty(), "embed_texts requires at least one text");
  EmbeddingMatrix m = provider.embed(texts);
  if (m.rows() != texts.size()) {
    throw ContractViolation("provider returned " + std::to_string(m.rows()) + " rows for " +
                            std::to_string(texts.size()) + " texts");
  }
  if (m.cols() != provider.dim()) {
    throw ContractViolation("provider returned dimension " + std::to_string(m.cols()) + ", configured " +
                            std::to_string(provider.dim()));
  }
  for (float x : m.values()) {
    if (!std::isfinite(x)) throw ContractViolation("provider returned a non-finite value");
  }
  if (normalize) {
    for (std::size_t i = 0; i < m.rows(); ++i) normalize_in_place(m.row(i));
  }
  return m;
}

inline std::vector<float> embed_one(const Embedder& provider, const std::string& text, bool normalize = true) {
  const std::string one[1] = {text};
  const auto m = embed_texts(provider, one, normalize);
  return {m.row(0).begin(), m.row(0).end()};
}

}  // namespace crag
