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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "crag/clustering.hpp"
#include "crag/corpus.hpp"
#include "crag/embedding.hpp"
#include "crag/error.hpp"
#include "crag/pipeline.hpp"
#include "crag/remote.hpp"
#include "crag/routing.hpp"
#include "crag/store.hpp"

namespace crag {

struct Config {
  std::size_t chunk_len = kChunkLenLong;
  std::size_t beta = kDefaultBeta;
  std::size_t gamma = kDefaultGamma;
  std::size_t delta = kDefaultDelta;
  std::string embed_endpoint;  // empty: built-in hash embedder
  std::uint64_t embed_seed = 0;
  std::size_t embed_dim = kDefaultDim;
  std::size_t embed_batch = 64;
  bool normalize = true;
  std::string router_mode = "oracle";  // "oracle" | "learned"
  std::string router_model;
  std::string gen_endpoint;
  int max_tokens = 256;
  int timeout_ms = 30000;
  int retries = 2;
  std::uint64_t seed = 0;
  std::size_t n_trials = 5;
  bool embed_enhanced = false;
  std::size_t parallelism = 1;
};

namespace detail {

inline std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string_view::npos) {
    throw ConfigError("config key '" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) + "'");
  }
  try {
    return std::stoull(std::string(v));
  } catch (const std::exception&) {
    throw ConfigError("config key '" + std::string(key) + "' is out of range");
  }
}

inline bool parse_bool(std::string_view key, std::string_view v) {
  const auto l = text::ascii_lower(v);
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "' expects a boolean, got '" + std::string(v) + "'");
}

}  // namespace detail

/// Applies one "key = value" setting. Unknown keys are configuration errors.
inline void set_config_value(Config& c, std::string_view key, std::string_view value) {
  using detail::parse_bool;
  using detail::parse_uint;
  const std::string v(value);
  if (key == "chunk_len") c.chunk_len = parse_uint(key, v);
  else if (key == "beta") c.beta = parse_uint(key, v);
  else if (key == "gamma") c.gamma = parse_uint(key, v);
  else if (key == "delta") c.delta = parse_uint(key, v);
  else if (key == "embed_endpoint") c.embed_endpoint = v;
  else if (key == "embed_seed") c.embed_seed = parse_uint(key, v);
  else if (key == "embed_dim") c.embed_dim = parse_uint(key, v);
  else if (key == "embed_batch") c.embed_batch = parse_uint(key, v);
  else if (key == "normalize") c.normalize = parse_bool(key, v);
  else if (key == "router_mode") c.router_mode = v;
  else if (key == "router_model") c.router_model = v;
  else if (key == "gen_endpoint") c.gen_endpoint = v;
  else if (key == "max_tokens") c.max_tokens = static_cast<int>(parse_uint(key, v));
  else if (key == "timeout_ms") c.timeout_ms = static_cast<int>(parse_uint(key, v));
  else if (key == "retries") c.retries = static_cast<int>(parse_uint(key, v));
  else if (key == "seed") c.seed = parse_uint(key, v);
  else if (key == "n_trials") c.n_trials = parse_uint(key, v);
  else if (key == "embed_enhanced") c.embed_enhanced = parse_bool(key, v);
  else if (key == "parallelism") c.parallelism = parse_uint(key, v);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

/// Flat UTF-8 "key = value" file; blank lines and '#' comments are ignored.
inline void load_config_file(Config& c, const std::filesystem::path& path) {
  const std::string content = detail::read_file(path);
  utf8::require_valid(content, path.string());
  const auto lines = detail::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = text::trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(i + 1) + ": expected key = value");
    }
    set_config_value(c, text::trim(line.substr(0, eq)), text::trim(line.substr(eq + 1)));
  }
}

inline void validate(const Config& c) {
  if (c.chunk_len < 1) throw ConfigError("chunk_len must be >= 1");
  if (c.beta < 1) throw ConfigError("beta must be >= 1");
  if (c.gamma < 1 || c.gamma > c.beta) throw ConfigError("gamma must be in [1, beta]");
  if (c.delta < 1) throw ConfigError("delta must be >= 1");
  if (c.embed_dim < 8) throw ConfigError("embed_dim must be >= 8");
  if (c.n_trials < 1) throw ConfigError("n_trials must be >= 1");
  if (c.router_mode != "oracle" && c.router_mode != "learned") {
    throw ConfigError("router_mode must be 'oracle' or 'learned'");
  }
  if (c.router_mode == "learned" && c.router_model.empty()) {
    throw ConfigError("router_mode 'learned' needs router_model");
  }
}

inline HttpSettings http_settings(const Config& c, const std::string& url) { return {url, c.timeout_ms, c.retries}; }

/// Embedder for building a new store from `c`.
inline std::unique_ptr<Embedder> make_embedder(const Config& c) {
  if (!c.embed_endpoint.empty()) {
    return std::make_unique<HttpEmbedder>(http_settings(c, c.embed_endpoint), c.embed_dim, c.embed_batch);
  }
  return std::make_unique<HashEmbedder>(c.embed_dim, c.embed_seed);
}

/// Embedder matching an existing store: the hash embedder is reconstructed
/// from the manifest tag, remote providers come from `c`.
inline std::unique_ptr<Embedder> make_embedder_for(const Config& c, const StoreManifest& m) {
  constexpr std::string_view kHash = "hash-trigram:";
  const std::string& tag = m.embed_provider_tag;
  if (tag.rfind(kHash, 0) == 0) {
    const auto dpos = tag.find("d=");
    const auto spos = tag.find(":seed=");
    if (dpos == std::string::npos || spos == std::string::npos) throw FormatError("bad embed_provider_tag '" + tag + "'");
    const auto d = detail::parse_uint("d", std::string_view(tag).substr(dpos + 2, spos - dpos - 2));
    const auto seed = detail::parse_uint("seed", std::string_view(tag).substr(spos + 6));
    return std::make_unique<HashEmbedder>(d, seed);
  }
  if (c.embed_endpoint.empty()) {
    throw ConfigError("store was built with provider '" + tag + "'; set embed_endpoint to query it");
  }
  return std::make_unique<HttpEmbedder>(http_settings(c, c.embed_endpoint), m.d, c.embed_batch);
}

}  // namespace crag
