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
#include <atomic>
#include <chrono>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "crag/embedding.hpp"
#include "crag/error.hpp"
#include "crag/generation.hpp"

namespace crag {

struct HttpSettings {
  std::string base_url;  // e.g. "http://127.0.0.1:8080"
  int timeout_ms = 30000;
  int retries = 2;
};

namespace detail {

// POSTs `body` to `path`, retrying on connection failures and non-200 replies.
inline std::string post_json(const HttpSettings& s, const std::string& path, const std::string& body) {
  const int attempts = 1 + std::max(0, s.retries);
  std::string last;
  for (int a = 1; a <= attempts; ++a) {
    httplib::Client cli(s.base_url);
    const auto to = std::chrono::milliseconds(s.timeout_ms);
    cli.set_connection_timeout(to);
    cli.set_read_timeout(to);
    cli.set_write_timeout(to);
    auto res = cli.Post(path, body, "application/json");
    if (res && res->status == 200) return res->body;
    last = res ? "HTTP " + std::to_string(res->status) : "connection failed: " + httplib::to_string(res.error());
  }
  throw TransportError("POST " + s.base_url + path + " failed: " + last, attempts);
}

}  // namespace detail

/// Remote embedding service: POST /embed {"texts": [...]} ->
/// {"vectors": [[...], ...], "dim": d}. Texts go out in batches; batches may be
/// in flight concurrently and are reassembled in input order.
class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(HttpSettings settings, std::size_t d, std::size_t batch_size = 64, std::size_t concurrency = 1)
      : settings_(std::move(settings)), d_(d), batch_(std::max<std::size_t>(batch_size, 1)),
        concurrency_(std::max<std::size_t>(concurrency, 1)) {}

  std::size_t dim() const override { return d_; }
  std::string tag() const override { return "http:" + settings_.base_url + ":d=" + std::to_string(d_); }

  EmbeddingMatrix embed(std::span<const std::string> texts) const override {
    const std::size_t n_batches = (texts.size() + batch_ - 1) / batch_;
    std::vector<std::vector<float>> parts(n_batches);
    std::vector<std::exception_ptr> errors(n_batches);
    auto run = [&](std::size_t b) {
      try {
        const auto sub = texts.subspan(b * batch_, std::min(batch_, texts.size() - b * batch_));
        parts[b] = fetch(sub);
      } catch (...) {
        errors[b] = std::current_exception();
      }
    };
    if (concurrency_ == 1 || n_batches <= 1) {
      for (std::size_t b = 0; b < n_batches; ++b) run(b);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < std::min(concurrency_, n_batches); ++w) {
        pool.emplace_back([&] {
          for (std::size_t b = next++; b < n_batches; b = next++) run(b);
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    std::vector<float> all;
    all.reserve(texts.size() * d_);
    for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    return EmbeddingMatrix(texts.size(), d_, std::move(all));
  }

 private:
  std::vector<float> fetch(std::span<const std::string> texts) const {
    const nlohmann::json req = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
    const std::string body = detail::post_json(settings_, "/embed", req.dump());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ContractViolation(std::string("embedding service returned invalid JSON: ") + e.what());
    }
    if (!j.contains("vectors") || !j["vectors"].is_array()) throw ContractViolation("embedding reply lacks 'vectors'");
    if (j.contains("dim") && j["dim"].is_number_integer() && j["dim"].get<std::size_t>() != d_) {
      throw ContractViolation("embedding service dim " + j["dim"].dump() + " != configured " + std::to_string(d_));
    }
    const auto& vs = j["vectors"];
    if (vs.size() != texts.size()) throw ContractViolation("embedding service returned wrong number of vectors");
    std::vector<float> out;
    out.reserve(texts.size() * d_);
    for (const auto& v : vs) {
      if (!v.is_array() || v.size() != d_) throw ContractViolation("embedding vector has wrong dimension");
      for (const auto& x : v) {
        if (!x.is_number()) throw ContractViolation("embedding vector holds a non-number");
        out.push_back(x.get<float>());
      }
    }
    return out;
  }

  HttpSettings settings_;
  std::size_t d_;
  std::size_t batch_;
  std::size_t concurrency_;
};

/// Remote generation service: POST /generate {"prompt", "max_tokens"} -> {"text"}.
class HttpGenerationClient final : public GenerationClient {
 public:
  explicit HttpGenerationClient(HttpSettings settings) : settings_(std::move(settings)) {}

  std::string generate(const std::string& prompt, int max_tokens) const override {
    const nlohmann::json req = {{"prompt", prompt}, {"max_tokens", max_tokens}};
    const std::string body = detail::post_json(settings_, "/generate", req.dump());
    try {
      const auto j = nlohmann::json::parse(body);
      if (!j.contains("text") || !j["text"].is_string()) throw ContractViolation("generation reply lacks 'text'");
      return j["text"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ContractViolation(std::string("generation service returned invalid JSON: ") + e.what());
    }
  }

 private:
  HttpSettings settings_;
};

}  // namespace crag
