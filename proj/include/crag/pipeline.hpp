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
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "crag/corpus.hpp"
#include "crag/embedding.hpp"
#include "crag/error.hpp"
#include "crag/generation.hpp"
#include "crag/routing.hpp"
#include "crag/store.hpp"
#include "crag/utf8.hpp"

namespace crag {

inline constexpr std::size_t kDefaultDelta = 10;
inline constexpr std::string_view kAnswerLead = "The correct option number is option";

struct EnhancedQuery {
  std::string original;
  std::vector<std::pair<std::string, std::string>> matched_terms;
  std::vector<std::pair<std::string, std::string>> matched_abbrevs;
  std::string text;
};

struct ContextChunk {
  Chunk chunk;
  double score = 0.0;
};

struct PromptBundle {
  EnhancedQuery enhanced;
  std::vector<ContextChunk> context_chunks;
  std::string final_prompt;
  std::optional<std::vector<std::string>> options;
};

struct QAItem {
  std::string question;
  std::vector<std::string> options;
  std::size_t answer_index = 1;  // 1-based
  std::optional<std::string> explanation;
  std::optional<std::string> category;
  // Optional: chunk the question was written from (synthetic fixtures only).
  std::optional<std::size_t> gold_chunk_id;
};

namespace detail {

inline bool boundary_before(std::string_view s, std::size_t pos, char first) {
  return pos == 0 || !text::is_alnum(s[pos - 1]) || !text::is_alnum(first);
}

inline bool boundary_after(std::string_view s, std::size_t end, char last) {
  return end >= s.size() || !text::is_alnum(s[end]) || !text::is_alnum(last);
}

// Left-to-right scan; at each position the longest key matching on word
// boundaries wins and its span is consumed. Each key is reported once, in
// order of first occurrence.
inline std::vector<std::pair<std::string, std::string>> match_keys(std::string_view query,
                                                                   const std::map<std::string, std::string>& dict,
                                                                   bool case_sensitive) {
  std::vector<std::pair<std::string, std::string>> out;
  if (dict.empty()) return out;
  struct Key {
    std::string needle;
    const std::string* key;
    const std::string* value;
  };
  std::vector<Key> keys;
  for (const auto& [k, v] : dict) keys.push_back({case_sensitive ? k : text::ascii_lower(k), &k, &v});
  std::stable_sort(keys.begin(), keys.end(),
                   [](const Key& a, const Key& b) { return a.needle.size() > b.needle.size(); });
  const std::string hay = case_sensitive ? std::string(query) : text::ascii_lower(query);
  std::set<const std::string*> seen;
  std::size_t pos = 0;
  while (pos < hay.size()) {
    bool hit = false;
    for (const auto& k : keys) {
      const auto& n = k.needle;
      if (n.empty() || hay.compare(pos, n.size(), n) != 0) continue;
      if (!boundary_before(hay, pos, n.front()) || !boundary_after(hay, pos + n.size(), n.back())) continue;
      if (seen.insert(k.key).second) out.emplace_back(*k.key, *k.value);
      pos += n.size();
      hit = true;
      break;
    }
    if (!hit) ++pos;
  }
  return out;
}

inline std::string join_entries(const std::vector<std::pair<std::string, std::string>>& entries) {
  std::string out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i) out += '\n';
    out += entries[i].first + ": " + entries[i].second;
  }
  return out;
}

}  // namespace detail

/// Appends glossary definitions for the terms (case-insensitive, longest match
/// first) and abbreviations (case-sensitive, whole token) found in `query`.
/// The result is the query, a blank line, then one "key: value" line per
/// matched term followed by one per matched abbreviation.
inline EnhancedQuery enhance_query(std::string_view query, const Glossary& glossary) {
  CRAG_REQUIRE(!query.empty(), "query must be non-empty");
  EnhancedQuery eq;
  eq.original = std::string(query);
  eq.matched_terms = detail::match_keys(query, glossary.terms, false);
  eq.matched_abbrevs = detail::match_keys(query, glossary.abbreviations, true);
  eq.text = eq.original;
  if (!eq.matched_terms.empty() || !eq.matched_abbrevs.empty()) {
    eq.text += "\n\n";
    std::string lines = detail::join_entries(eq.matched_terms);
    const std::string ab = detail::join_entries(eq.matched_abbrevs);
    if (!lines.empty() && !ab.empty()) lines += '\n';
    eq.text += lines + ab;
  }
  return eq;
}

/// Chat-template prompt: a context turn (retrieved chunks, then the matched
/// terms and abbreviations), a user turn with the multiple-choice instruction,
/// and an open assistant turn.
inline std::string build_prompt(const EnhancedQuery& enhanced, const std::vector<Chunk>& context,
                                const QAItem* qa = nullptr) {
  std::string p = "<|im_start|>context\n";
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (i) p += '\n';
    p += context[i].text;
  }
  p += "\nTerms and Definitions: ";
  p += detail::join_entries(enhanced.matched_terms);
  p += "\nAbbreviations: ";
  p += detail::join_entries(enhanced.matched_abbrevs);
  p += "\n<|im_end|>\n<|im_start|>user\n";
  if (qa) {
    p += "Please provide the answer to the following multiple-choice question: ";
    p += enhanced.original;
    p += '\n';
    for (std::size_t i = 0; i < qa->options.size(); ++i) {
      p += "option " + std::to_string(i + 1) + ": " + qa->options[i] + "\n";
    }
    p += "Choose the correct option from the above options.";
  } else {
    p += enhanced.text;
  }
  p += "\n<|im_end|>\n<|im_start|>assistant\n";
  return p;
}

/// The answer pattern a model is expected to produce for option `index` (1-based).
inline std::string format_answer(const QAItem& qa, std::size_t index) {
  return std::string(kAnswerLead) + " " + std::to_string(index) + ": " + qa.options.at(index - 1);
}

/// Extracts the chosen option: the first integer after the first
/// case-insensitive "option", else the first standalone integer in
/// [1, n_options]; nullopt means the model abstained.
inline std::optional<std::size_t> parse_choice(std::string_view answer, std::size_t n_options) {
  CRAG_REQUIRE(n_options >= 2, "n_options must be >= 2");
  auto in_range = [&](std::size_t v) { return v >= 1 && v <= n_options; };
  auto read_int = [&](std::size_t pos, std::size_t& end) -> std::optional<std::size_t> {
    std::size_t v = 0;
    end = pos;
    while (end < answer.size() && answer[end] >= '0' && answer[end] <= '9') {
      if (v > 1'000'000) return std::nullopt;
      v = v * 10 + static_cast<std::size_t>(answer[end] - '0');
      ++end;
    }
    return v;
  };
  const std::string lower = text::ascii_lower(answer);
  const auto at = lower.find("option");
  if (at != std::string::npos) {
    for (std::size_t i = at + 6; i < answer.size(); ++i) {
      if (answer[i] >= '0' && answer[i] <= '9') {
        std::size_t end;
        const auto v = read_int(i, end);
        if (v && in_range(*v)) return v;
        break;
      }
    }
  }
  for (std::size_t i = 0; i < answer.size(); ++i) {
    if (answer[i] < '0' || answer[i] > '9') continue;
    if (i > 0 && text::is_alnum(answer[i - 1])) continue;
    std::size_t end;
    const auto v = read_int(i, end);
    const bool standalone = end >= answer.size() || !text::is_alnum(answer[end]);
    if (v && standalone && in_range(*v)) return v;
    i = end;
  }
  return std::nullopt;
}

/// Selects how queries are routed to clusters.
struct RouterMode {
  const RouterModel* model = nullptr;  // null: centroid-similarity ranking

  static RouterMode oracle() { return {}; }
  static RouterMode learned(const RouterModel& m) { return {&m}; }
  bool is_learned() const { return model != nullptr; }
};

struct QueryOptions {
  std::size_t gamma = kDefaultGamma;
  std::size_t delta = kDefaultDelta;
  bool embed_enhanced = false;  // embed the enhanced text instead of the raw query
  int max_tokens = 256;
};

struct AnswerResult {
  std::string answer;
  PromptBundle bundle;
  std::vector<std::size_t> routed_clusters;
  std::size_t vectors_scanned = 0;
  double retrieval_ms = 0.0;
  std::vector<std::string> warnings;
};

/// Generation failed after the prompt was assembled; the bundle is kept for audit.
class GenerationError : public TransportError {
 public:
  GenerationError(const TransportError& cause, PromptBundle bundle)
      : TransportError(std::string("generation failed: ") + cause.what(), cause.attempts()),
        bundle_(std::move(bundle)) {}
  const PromptBundle& bundle() const { return bundle_; }

 private:
  PromptBundle bundle_;
};

/// Online path: enhance, embed, route, retrieve, assemble the prompt, generate.
inline AnswerResult answer_query(const Store& store, const Embedder& embedder, RouterMode router,
                                 std::string_view query, const QueryOptions& opts, const GenerationClient& client,
                                 const QAItem* qa = nullptr) {
  CRAG_REQUIRE(opts.delta >= 1, "delta must be >= 1");
  AnswerResult res;
  auto& bundle = res.bundle;
  bundle.enhanced = enhance_query(query, store.glossary);
  if (qa) bundle.options = qa->options;

  std::vector<Chunk> context;
  if (store.size() == 0) {
    res.warnings.push_back("empty retrieval: store holds no chunks");
  } else {
    CRAG_REQUIRE(embedder.dim() == store.d(), "embedder dimension " + std::to_string(embedder.dim()) +
                                                  " != store dimension " + std::to_string(store.d()));
    const std::string& to_embed = opts.embed_enhanced ? bundle.enhanced.text : bundle.enhanced.original;
    const auto q = embed_one(embedder, to_embed, store.manifest.normalize_flag);
    res.routed_clusters = router.is_learned() ? route_topk(*router.model, q, store.clusters, opts.gamma)
                                              : route_oracle(q, store.clusters, opts.gamma);
    const auto t0 = std::chrono::steady_clock::now();
    const auto hits = search_clusters(store, q, res.routed_clusters, opts.delta);
    const auto t1 = std::chrono::steady_clock::now();
    res.retrieval_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    res.vectors_scanned = hits.vectors_scanned;
    for (const auto& h : hits.entries) {
      bundle.context_chunks.push_back({store.chunks[h.chunk_id], h.score});
      context.push_back(store.chunks[h.chunk_id]);
    }
    if (context.empty()) res.warnings.push_back("empty retrieval: routed clusters returned no chunks");
  }
  bundle.final_prompt = build_prompt(bundle.enhanced, context, qa);
  try {
    res.answer = client.generate(bundle.final_prompt, opts.max_tokens);
  } catch (const TransportError& e) {
    throw GenerationError(e, bundle);
  }
  return res;
}

inline nlohmann::json to_json(const PromptBundle& b) {
  nlohmann::json j;
  j["enhanced_query"] = {{"original", b.enhanced.original}, {"text", b.enhanced.text}};
  auto pairs = [](const auto& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [k, val] : v) a.push_back({{"key", k}, {"value", val}});
    return a;
  };
  j["enhanced_query"]["matched_terms"] = pairs(b.enhanced.matched_terms);
  j["enhanced_query"]["matched_abbrevs"] = pairs(b.enhanced.matched_abbrevs);
  j["context"] = nlohmann::json::array();
  for (const auto& c : b.context_chunks) {
    j["context"].push_back({{"chunk_id", c.chunk.chunk_id},
                            {"doc_id", c.chunk.doc_id},
                            {"char_offset", c.chunk.char_offset},
                            {"score", c.score},
                            {"text", c.chunk.text}});
  }
  j["final_prompt"] = b.final_prompt;
  if (b.options) j["options"] = *b.options;
  return j;
}

// ---------------------------------------------------------------------------
// Multiple-choice evaluation

/// Parses a JSON array of {"question","options","answer"(1-based),
/// "explanation"?,"category"?,"gold_chunk_id"?}.
inline std::vector<QAItem> parse_qa_items(std::string_view content, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, content.size());
    const auto line = 1 + std::count(content.begin(), content.begin() + static_cast<std::ptrdiff_t>(byte), '\n');
    throw ParseError(source + ": malformed JSON at line " + std::to_string(line) + ": " + e.what());
  }
  if (!j.is_array()) throw ParseError(source + ": expected a JSON array of QA items");
  std::vector<QAItem> items;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& o = j[i];
    const std::string where = source + ": item " + std::to_string(i);
    if (!o.is_object()) throw ParseError(where + ": not an object");
    QAItem q;
    if (!o.contains("question") || !o["question"].is_string()) throw ParseError(where + ": missing string 'question'");
    q.question = o["question"].get<std::string>();
    if (q.question.empty()) throw ParseError(where + ": empty question");
    if (!o.contains("options") || !o["options"].is_array()) throw ParseError(where + ": missing array 'options'");
    for (const auto& opt : o["options"]) {
      if (!opt.is_string()) throw ParseError(where + ": options must be strings");
      q.options.push_back(opt.get<std::string>());
    }
    if (q.options.size() < 2) throw ParseError(where + ": needs at least two options");
    if (!o.contains("answer") || !o["answer"].is_number_integer()) throw ParseError(where + ": missing integer 'answer'");
    const auto ans = o["answer"].get<long long>();
    if (ans < 1 || static_cast<std::size_t>(ans) > q.options.size()) throw ParseError(where + ": answer out of range");
    q.answer_index = static_cast<std::size_t>(ans);
    if (o.contains("explanation") && o["explanation"].is_string()) q.explanation = o["explanation"].get<std::string>();
    if (o.contains("category") && o["category"].is_string()) q.category = o["category"].get<std::string>();
    if (o.contains("gold_chunk_id") && o["gold_chunk_id"].is_number_unsigned()) {
      q.gold_chunk_id = o["gold_chunk_id"].get<std::size_t>();
    }
    items.push_back(std::move(q));
  }
  return items;
}

inline std::vector<QAItem> load_qa_items(const std::filesystem::path& path) {
  const std::string content = detail::read_file(path);
  utf8::require_valid(content, path.string());
  return parse_qa_items(content, path.string());
}

inline nlohmann::json to_json(const std::vector<QAItem>& items) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& q : items) {
    nlohmann::json o = {{"question", q.question}, {"options", q.options}, {"answer", q.answer_index}};
    if (q.explanation) o["explanation"] = *q.explanation;
    if (q.category) o["category"] = *q.category;
    if (q.gold_chunk_id) o["gold_chunk_id"] = *q.gold_chunk_id;
    a.push_back(std::move(o));
  }
  return a;
}

namespace detail {

// The QA item whose question block appears in the prompt's user turn.
inline const QAItem* item_for_prompt(const std::vector<QAItem>& items, const std::string& prompt) {
  for (const auto& q : items) {
    if (prompt.find("multiple-choice question: " + q.question + "\n") != std::string::npos) return &q;
  }
  return nullptr;
}

inline std::string_view context_section(const std::string& prompt) {
  const auto end = prompt.find("\nTerms and Definitions: ");
  return std::string_view(prompt).substr(0, end);
}

}  // namespace detail

/// Mock that always answers the gold option.
class GoldAnswerClient final : public GenerationClient {
 public:
  explicit GoldAnswerClient(std::vector<QAItem> items) : items_(std::move(items)) {}
  std::string generate(const std::string& prompt, int) const override {
    const QAItem* q = detail::item_for_prompt(items_, prompt);
    return q ? format_answer(*q, q->answer_index) : "I cannot determine the answer.";
  }

 private:
  std::vector<QAItem> items_;
};

/// Mock that answers correctly iff the item's gold chunk text was retrieved
/// into the prompt's context, and abstains otherwise.
class RetrievalSensitiveClient final : public GenerationClient {
 public:
  RetrievalSensitiveClient(std::vector<QAItem> items, std::vector<std::string> gold_texts)
      : items_(std::move(items)), gold_(std::move(gold_texts)) {
    CRAG_REQUIRE(items_.size() == gold_.size(), "one gold text per QA item required");
  }

  /// Gold texts come from each item's gold_chunk_id in `store`.
  static RetrievalSensitiveClient from_store(std::vector<QAItem> items, const Store& store) {
    std::vector<std::string> gold;
    for (const auto& q : items) {
      if (!q.gold_chunk_id) throw ConfigError("retrieval-sensitive mock needs gold_chunk_id on every QA item");
      const std::size_t id = *q.gold_chunk_id;
      gold.push_back(get_chunks(store, std::span<const std::size_t>(&id, 1)).front().text);
    }
    return RetrievalSensitiveClient(std::move(items), std::move(gold));
  }

  std::string generate(const std::string& prompt, int) const override {
    const QAItem* q = detail::item_for_prompt(items_, prompt);
    if (!q) return "I cannot determine the answer.";
    const auto& gold = gold_[static_cast<std::size_t>(q - items_.data())];
    if (detail::context_section(prompt).find(gold) == std::string_view::npos) return "I cannot determine the answer.";
    return format_answer(*q, q->answer_index);
  }

 private:
  std::vector<QAItem> items_;
  std::vector<std::string> gold_;
};

struct ItemOutcome {
  std::optional<std::size_t> predicted;
  bool correct = false;
  std::optional<std::string> error;
  std::vector<std::size_t> retrieved_ids;
  std::size_t vectors_scanned = 0;
  double retrieval_ms = 0.0;
};

struct CategoryStats {
  std::size_t total = 0;
  std::size_t correct = 0;
};

struct EvalReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t abstained = 0;
  std::size_t failed = 0;
  double accuracy = 0.0;
  double abstain_rate = 0.0;
  double latency_ms_mean = 0.0;
  double vectors_scanned_mean = 0.0;
  std::map<std::string, CategoryStats> per_category;
  std::vector<ItemOutcome> items;
};

struct EvalOptions {
  QueryOptions query;
  std::size_t parallelism = 1;
};

/// Runs every item through `answer_query` and scores the parsed choice.
/// Abstentions and failed items count as incorrect. Items may run
/// concurrently; aggregation is by item index, so the report is independent of
/// scheduling.
inline EvalReport evaluate(const Store& store, const Embedder& embedder, RouterMode router,
                           const std::vector<QAItem>& items, const EvalOptions& opts, const GenerationClient& client) {
  CRAG_REQUIRE(!items.empty(), "evaluate needs at least one QA item");
  std::vector<ItemOutcome> outcomes(items.size());
  auto run_one = [&](std::size_t i) {
    auto& out = outcomes[i];
    const auto& qa = items[i];
    try {
      const auto res = answer_query(store, embedder, router, qa.question, opts.query, client, &qa);
      for (const auto& c : res.bundle.context_chunks) out.retrieved_ids.push_back(c.chunk.chunk_id);
      out.vectors_scanned = res.vectors_scanned;
      out.retrieval_ms = res.retrieval_ms;
      out.predicted = parse_choice(res.answer, qa.options.size());
      out.correct = out.predicted && *out.predicted == qa.answer_index;
    } catch (const Error& e) {
      out.error = e.what();
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(opts.parallelism, 1, items.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < items.size(); i = next++) run_one(i);
      });
    }
  }

  EvalReport r;
  r.total = items.size();
  double lat = 0.0, scanned = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& o = outcomes[i];
    if (o.error) ++r.failed;
    else if (!o.predicted) ++r.abstained;
    if (o.correct) ++r.correct;
    lat += o.retrieval_ms;
    scanned += static_cast<double>(o.vectors_scanned);
    auto& cat = r.per_category[items[i].category.value_or("uncategorized")];
    ++cat.total;
    if (o.correct) ++cat.correct;
  }
  const double n = static_cast<double>(r.total);
  r.accuracy = static_cast<double>(r.correct) / n;
  r.abstain_rate = static_cast<double>(r.abstained) / n;
  r.latency_ms_mean = lat / n;
  r.vectors_scanned_mean = scanned / n;
  r.items = std::move(outcomes);
  return r;
}

/// `include_timing = false` writes latency as null so that reports from
/// repeated runs are byte-identical.
inline nlohmann::json to_json(const EvalReport& r, bool include_timing = true) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["abstain_rate"] = r.abstain_rate;
  j["latency_ms_mean"] = include_timing ? nlohmann::json(r.latency_ms_mean) : nlohmann::json(nullptr);
  j["vectors_scanned_mean"] = r.vectors_scanned_mean;
  j["total"] = r.total;
  j["correct"] = r.correct;
  j["abstained"] = r.abstained;
  j["failed"] = r.failed;
  j["per_category"] = nlohmann::json::object();
  for (const auto& [name, c] : r.per_category) {
    j["per_category"][name] = {{"total", c.total},
                               {"correct", c.correct},
                               {"accuracy", static_cast<double>(c.correct) / static_cast<double>(c.total)}};
  }
  j["items"] = nlohmann::json::array();
  for (const auto& o : r.items) {
    nlohmann::json it = {{"correct", o.correct}, {"retrieved_ids", o.retrieved_ids}, {"vectors_scanned", o.vectors_scanned}};
    it["predicted"] = o.predicted ? nlohmann::json(*o.predicted) : nlohmann::json(nullptr);
    if (o.error) it["error"] = *o.error;
    j["items"].push_back(std::move(it));
  }
  return j;
}

}  // namespace crag
