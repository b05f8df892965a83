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
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crag/binary_io.hpp"
#include "crag/clustering.hpp"
#include "crag/corpus.hpp"
#include "crag/embedding.hpp"
#include "crag/error.hpp"

namespace crag {

inline constexpr std::uint32_t kStoreFormatVersion = 1;
inline constexpr std::string_view kStoreMagic = "CRAG";

struct StoreManifest {
  std::uint32_t format_version = kStoreFormatVersion;
  std::size_t d = 0;
  std::size_t n_chunks = 0;
  std::size_t beta = 0;
  std::size_t chunk_len = 0;
  std::string embed_provider_tag;
  bool normalize_flag = true;
  std::uint64_t build_seed = 0;

  bool operator==(const StoreManifest&) const = default;
};

inline nlohmann::json to_json(const StoreManifest& m) {
  return {{"format_version", m.format_version}, {"d", m.d},
          {"n_chunks", m.n_chunks},             {"beta", m.beta},
          {"chunk_len", m.chunk_len},           {"embed_provider_tag", m.embed_provider_tag},
          {"normalize_flag", m.normalize_flag}, {"build_seed", m.build_seed}};
}

inline StoreManifest manifest_from_json(const nlohmann::json& j) {
  StoreManifest m;
  m.format_version = j.at("format_version").get<std::uint32_t>();
  m.d = j.at("d").get<std::size_t>();
  m.n_chunks = j.at("n_chunks").get<std::size_t>();
  m.beta = j.at("beta").get<std::size_t>();
  m.chunk_len = j.at("chunk_len").get<std::size_t>();
  m.embed_provider_tag = j.at("embed_provider_tag").get<std::string>();
  m.normalize_flag = j.at("normalize_flag").get<bool>();
  m.build_seed = j.at("build_seed").get<std::uint64_t>();
  return m;
}

/// Immutable after construction; safe for concurrent readers.
struct Store {
  StoreManifest manifest;
  std::vector<Chunk> chunks;
  EmbeddingMatrix vectors;
  ClusterSet clusters;
  Glossary glossary;

  std::size_t d() const { return manifest.d; }
  std::size_t size() const { return chunks.size(); }
};

struct ScoredChunk {
  std::size_t chunk_id = 0;
  double score = 0.0;

  bool operator==(const ScoredChunk&) const = default;
};

/// Search hits ordered by score descending, ties by ascending chunk_id.
/// `vectors_scanned` counts the stored vectors the search actually touched.
struct ChunkIndexVector {
  std::vector<ScoredChunk> entries;
  std::size_t vectors_scanned = 0;

  std::vector<std::size_t> ids() const {
    std::vector<std::size_t> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.chunk_id);
    return out;
  }
};

namespace detail {

inline std::string glossary_tsv(const std::map<std::string, std::string>& m) {
  std::string out;
  for (const auto& [k, v] : m) {
    if (k.find_first_of("\t\n") != std::string::npos || v.find_first_of("\t\n") != std::string::npos) {
      throw IntegrityError("glossary entry '" + k + "' contains a tab or newline");
    }
    out += k;
    out += '\t';
    out += v;
    out += '\n';
  }
  return out;
}

inline std::map<std::string, std::string> parse_glossary_tsv(std::string_view s, io::ByteReader& r) {
  std::map<std::string, std::string> m;
  for (const auto line : split_lines(s)) {
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) r.fail("malformed glossary section");
    m[std::string(line.substr(0, tab))] = std::string(line.substr(tab + 1));
  }
  return m;
}

inline bool score_before(const ScoredChunk& a, const ScoredChunk& b) {
  return a.score > b.score || (a.score == b.score && a.chunk_id < b.chunk_id);
}

inline void keep_top(std::vector<ScoredChunk>& v, std::size_t delta) {
  const std::size_t k = std::min(delta, v.size());
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(), score_before);
  v.resize(k);
}

}  // namespace detail

/// Validates the pieces against each other and assembles an in-memory store.
/// Centroids are rounded to float32, the precision they are persisted with, so
/// an in-memory store and its reloaded copy behave identically.
inline Store make_store(std::vector<Chunk> chunks, EmbeddingMatrix embeddings, Glossary glossary,
                        ClusterSet clusters, StoreManifest manifest) {
  const std::size_t n = chunks.size();
  if (manifest.format_version != kStoreFormatVersion) throw IntegrityError("unsupported format_version");
  if (embeddings.rows() != n) {
    throw IntegrityError("embedding rows (" + std::to_string(embeddings.rows()) + ") != chunk count (" +
                         std::to_string(n) + ")");
  }
  if (manifest.n_chunks != n) throw IntegrityError("manifest n_chunks does not match chunk count");
  if (n > 0 && embeddings.cols() != manifest.d) throw IntegrityError("embedding dimension does not match manifest d");
  if (n == 0) embeddings = EmbeddingMatrix(0, manifest.d);
  for (std::size_t i = 0; i < n; ++i) {
    if (chunks[i].chunk_id != i) throw IntegrityError("chunk ids are not dense: position " + std::to_string(i));
  }
  if (clusters.n != n) throw IntegrityError("cluster set covers n=" + std::to_string(clusters.n) + ", store has " + std::to_string(n));
  if (manifest.beta != clusters.size()) throw IntegrityError("manifest beta does not match cluster count");
  if (n > 0 && clusters.d != manifest.d) throw IntegrityError("cluster dimension does not match manifest d");
  clusters.d = manifest.d;
  if (auto v = partition_violation(clusters)) throw IntegrityError(*v);
  for (auto& c : clusters.clusters) {
    for (double& x : c.centroid) x = static_cast<double>(static_cast<float>(x));
  }
  return Store{std::move(manifest), std::move(chunks), std::move(embeddings), std::move(clusters), std::move(glossary)};
}

/// Serializes a store into the "CRAG" container (all integers little-endian):
///   magic "CRAG" | u32 version | u32 d | u64 n
///   manifest   : u64 length + UTF-8 JSON
///   vectors    : n*d float32, row-major
///   chunks     : u64 count, then per chunk u64 char_offset, doc_id blob, text blob
///   clusters   : u64 count, then per cluster d float32 centroid, f64 sse,
///                u64 member count, u64 member ids
///   glossary   : abbreviations TSV blob, terms TSV blob
/// Blobs are a u64 byte length followed by the bytes.
inline std::string serialize_store(const Store& s) {
  io::ByteWriter w;
  w.raw(kStoreMagic);
  w.u32(s.manifest.format_version);
  w.u32(static_cast<std::uint32_t>(s.manifest.d));
  w.u64(s.chunks.size());
  w.blob(to_json(s.manifest).dump());
  for (float x : s.vectors.values()) w.f32(x);
  w.u64(s.chunks.size());
  for (const auto& c : s.chunks) {
    w.u64(c.char_offset);
    w.blob(c.doc_id);
    w.blob(c.text);
  }
  w.u64(s.clusters.size());
  for (const auto& c : s.clusters.clusters) {
    for (double x : c.centroid) w.f32(static_cast<float>(x));
    w.f64(c.sse);
    w.u64(c.member_ids.size());
    for (auto id : c.member_ids) w.u64(id);
  }
  w.blob(detail::glossary_tsv(s.glossary.abbreviations));
  w.blob(detail::glossary_tsv(s.glossary.terms));
  return w.bytes();
}

inline Store deserialize_store(std::string_view bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  if (bytes.size() < 4 || r.raw(4) != kStoreMagic) throw FormatError(source + ": bad magic, not a CRAG store");
  const auto version = r.u32();
  if (version != kStoreFormatVersion) r.fail("unsupported format version " + std::to_string(version));
  const std::size_t d = r.u32();
  const std::size_t n = r.u64();
  StoreManifest manifest;
  try {
    manifest = manifest_from_json(nlohmann::json::parse(r.blob()));
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad manifest: ") + e.what());
  }
  if (manifest.d != d || manifest.n_chunks != n) r.fail("manifest disagrees with header");
  if (d != 0 && n > r.remaining() / (4 * d)) r.fail("vector section exceeds file size");
  std::vector<float> values(n * d);
  for (float& x : values) x = r.f32();
  if (r.u64() != n) r.fail("chunk table count disagrees with header");
  std::vector<Chunk> chunks(n);
  for (std::size_t i = 0; i < n; ++i) {
    chunks[i].chunk_id = i;
    chunks[i].char_offset = r.u64();
    chunks[i].doc_id = r.blob();
    chunks[i].text = r.blob();
  }
  ClusterSet cs;
  cs.d = d;
  cs.n = n;
  const std::size_t k = r.count(4 * d + 16);
  for (std::size_t c = 0; c < k; ++c) {
    Cluster cl;
    cl.cluster_id = c;
    cl.centroid.resize(d);
    for (double& x : cl.centroid) x = r.f32();
    cl.sse = r.f64();
    cl.member_ids.resize(r.count(8));
    for (auto& id : cl.member_ids) id = r.u64();
    cs.clusters.push_back(std::move(cl));
  }
  Glossary g;
  const std::string abbrev = r.blob();
  const std::string terms = r.blob();
  g.abbreviations = detail::parse_glossary_tsv(abbrev, r);
  g.terms = detail::parse_glossary_tsv(terms, r);
  if (!r.at_end()) r.fail("trailing bytes");
  try {
    return make_store(std::move(chunks), EmbeddingMatrix(n, d, std::move(values)), std::move(g), std::move(cs),
                      std::move(manifest));
  } catch (const IntegrityError& e) {
    throw FormatError(source + ": " + e.what());
  }
}

inline void write_store(const Store& s, const std::filesystem::path& path) { io::atomic_write(path, serialize_store(s)); }

inline Store build_store(std::vector<Chunk> chunks, EmbeddingMatrix embeddings, Glossary glossary, ClusterSet clusters,
                         StoreManifest manifest, const std::filesystem::path& path) {
  Store s = make_store(std::move(chunks), std::move(embeddings), std::move(glossary), std::move(clusters),
                       std::move(manifest));
  write_store(s, path);
  return s;
}

inline Store load_store(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw ConfigError("store not found: " + path.string());
  return deserialize_store(io::read_all(path), path.string());
}

/// Exact inner-product scan over the members of `cluster_ids` only.
inline ChunkIndexVector search_clusters(const Store& store, std::span<const float> query,
                                        std::span<const std::size_t> cluster_ids, std::size_t delta) {
  CRAG_REQUIRE(delta >= 1, "delta must be >= 1");
  ChunkIndexVector out;
  if (store.clusters.size() == 0 && cluster_ids.empty()) return out;
  CRAG_REQUIRE(!cluster_ids.empty(), "cluster_ids must be non-empty");
  CRAG_REQUIRE(query.size() == store.d(), "query dimension " + std::to_string(query.size()) +
                                              " != store dimension " + std::to_string(store.d()));
  std::set<std::size_t> seen;
  std::vector<ScoredChunk> cand;
  for (auto cid : cluster_ids) {
    CRAG_REQUIRE(cid < store.clusters.size(), "unknown cluster_id " + std::to_string(cid));
    CRAG_REQUIRE(seen.insert(cid).second, "duplicate cluster_id " + std::to_string(cid));
    for (auto id : store.clusters.clusters[cid].member_ids) {
      cand.push_back({id, dot(query, store.vectors.row(id))});
    }
  }
  out.vectors_scanned = cand.size();
  detail::keep_top(cand, delta);
  out.entries = std::move(cand);
  return out;
}

/// Unpruned exact scan over every stored vector; the reference for recall.
inline ChunkIndexVector search_all(const Store& store, std::span<const float> query, std::size_t delta) {
  CRAG_REQUIRE(delta >= 1, "delta must be >= 1");
  ChunkIndexVector out;
  if (store.size() == 0) return out;
  CRAG_REQUIRE(query.size() == store.d(), "query dimension mismatch");
  std::vector<ScoredChunk> cand(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) cand[i] = {i, dot(query, store.vectors.row(i))};
  out.vectors_scanned = cand.size();
  detail::keep_top(cand, delta);
  out.entries = std::move(cand);
  return out;
}

inline std::vector<Chunk> get_chunks(const Store& store, std::span<const std::size_t> ids) {
  std::vector<Chunk> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    if (id >= store.chunks.size()) throw NotFoundError("chunk id " + std::to_string(id) + " not in store");
    out.push_back(store.chunks[id]);
  }
  return out;
}

}  // namespace crag
