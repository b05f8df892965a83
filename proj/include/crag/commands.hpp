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
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crag/bench.hpp"
#include "crag/clustering.hpp"
#include "crag/config.hpp"
#include "crag/corpus.hpp"
#include "crag/embedding.hpp"
#include "crag/error.hpp"
#include "crag/generation.hpp"
#include "crag/pipeline.hpp"
#include "crag/remote.hpp"
#include "crag/routing.hpp"
#include "crag/store.hpp"
#include "crag/synthetic.hpp"

namespace crag::cmd {

namespace fs = std::filesystem;

/// Prefixes errors raised inside a pipeline stage with the stage name.
template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const TransportError& e) {
    throw TransportError(std::string(name) + ": " + e.what(), e.attempts());
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::kPrecondition: throw PreconditionError(std::string(name) + ": " + e.what());
      case ErrorKind::kConfiguration: throw ConfigError(std::string(name) + ": " + e.what());
      case ErrorKind::kEncoding: throw EncodingError(std::string(name) + ": " + e.what());
      case ErrorKind::kParse: throw ParseError(std::string(name) + ": " + e.what());
      default: throw;
    }
  }
}

struct IngestArgs {
  fs::path corpus;
  fs::path store;
  std::optional<fs::path> abbrev_file;
  std::optional<fs::path> terms_file;
};

/// Pre-processing: chunk, extract glossaries, embed, cluster, persist.
inline StoreManifest ingest(const Config& cfg, const IngestArgs& args, std::ostream& out) {
  validate(cfg);
  const auto docs = stage("load", [&] { return load_corpus(args.corpus); });
  auto chunks = stage("chunk", [&] { return chunk_corpus(docs, cfg.chunk_len); });
  GlossaryDiagnostics diag;
  Glossary glossary = stage("glossary", [&] {
    Glossary g = extract_glossary(docs, &diag);
    if (args.abbrev_file) load_glossary_file(*args.abbrev_file, GlossaryKind::kAbbreviations, g, &diag);
    if (args.terms_file) load_glossary_file(*args.terms_file, GlossaryKind::kTerms, g, &diag);
    return g;
  });
  const auto embedder = make_embedder(cfg);

  StoreManifest m;
  m.d = embedder->dim();
  m.n_chunks = chunks.size();
  m.chunk_len = cfg.chunk_len;
  m.embed_provider_tag = embedder->tag();
  m.normalize_flag = cfg.normalize;
  m.build_seed = cfg.seed;

  EmbeddingMatrix vectors(0, m.d);
  ClusterSet clusters;
  clusters.d = m.d;
  if (!chunks.empty()) {
    if (cfg.beta > chunks.size()) {
      throw PreconditionError("cluster: beta (" + std::to_string(cfg.beta) + ") exceeds the number of chunks (" +
                              std::to_string(chunks.size()) + ")");
    }
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    vectors = stage("embed", [&] { return embed_texts(*embedder, texts, cfg.normalize); });
    BisectingParams bp;
    bp.seed = cfg.seed;
    bp.n_trials = cfg.n_trials;
    clusters = stage("cluster", [&] { return bisecting_kmeans(vectors.view(), cfg.beta, bp); });
  }
  m.beta = clusters.size();
  stage("store", [&] {
    return build_store(std::move(chunks), std::move(vectors), std::move(glossary), std::move(clusters), m, args.store);
  });

  out << "store: " << args.store.string() << "\n"
      << "documents: " << docs.size() << "\n"
      << "chunks: " << m.n_chunks << " (chunk_len " << m.chunk_len << ")\n"
      << "clusters: " << m.beta << "\n"
      << "dimension: " << m.d << "\n"
      << "embedder: " << m.embed_provider_tag << "\n"
      << "glossary entries: " << diag.entries << " (" << diag.malformed << " malformed lines skipped)\n";
  return m;
}

enum class MockLlm { kNone, kEcho, kFirst, kGold, kRetrieval };

inline MockLlm parse_mock(const std::string& s) {
  if (s.empty() || s == "none") return MockLlm::kNone;
  if (s == "echo") return MockLlm::kEcho;
  if (s == "first") return MockLlm::kFirst;
  if (s == "gold") return MockLlm::kGold;
  if (s == "retrieval") return MockLlm::kRetrieval;
  throw ConfigError("unknown mock llm '" + s + "' (expected echo, first, gold or retrieval)");
}

struct Session {
  Store store;
  std::unique_ptr<Embedder> embedder;
  std::optional<RouterModel> router_model;

  RouterMode router() const { return router_model ? RouterMode::learned(*router_model) : RouterMode::oracle(); }
};

inline Session open_session(const Config& cfg, const fs::path& store_path) {
  Session s{load_store(store_path), nullptr, std::nullopt};
  s.embedder = make_embedder_for(cfg, s.store.manifest);
  if (cfg.router_mode == "learned") {
    if (cfg.router_model.empty()) throw ConfigError("router_mode 'learned' needs router_model");
    s.router_model = load_router(cfg.router_model);
  }
  return s;
}

inline QueryOptions query_options(const Config& cfg) {
  QueryOptions q;
  q.gamma = cfg.gamma;
  q.delta = cfg.delta;
  q.embed_enhanced = cfg.embed_enhanced;
  q.max_tokens = cfg.max_tokens;
  return q;
}

// Rejects a gamma above the store's cluster count, which may be below the configured beta.
inline void fit_gamma(QueryOptions& q, const Store& store) {
  if (store.clusters.size() > 0 && q.gamma > store.clusters.size()) {
    throw ConfigError("gamma (" + std::to_string(q.gamma) + ") exceeds the store's cluster count (" +
                      std::to_string(store.clusters.size()) + ")");
  }
}

struct QueryArgs {
  fs::path store;
  std::string question;
  std::string mock_llm;
  bool show_context = false;
};

inline AnswerResult query(const Config& cfg, const QueryArgs& args, std::ostream& out) {
  validate(cfg);
  const Session s = open_session(cfg, args.store);
  auto opts = query_options(cfg);
  fit_gamma(opts, s.store);
  std::unique_ptr<GenerationClient> client;
  switch (parse_mock(args.mock_llm)) {
    case MockLlm::kEcho: client = std::make_unique<EchoClient>(); break;
    case MockLlm::kFirst: client = std::make_unique<FixedAnswerClient>(std::string(kAnswerLead) + " 1"); break;
    case MockLlm::kNone:
      if (cfg.gen_endpoint.empty()) throw ConfigError("no generation endpoint configured (set gen_endpoint or --mock-llm)");
      client = std::make_unique<HttpGenerationClient>(http_settings(cfg, cfg.gen_endpoint));
      break;
    default: throw ConfigError("mock llm '" + args.mock_llm + "' needs QA items; use it with eval");
  }
  auto res = answer_query(s.store, *s.embedder, s.router(), args.question, opts, *client);
  for (const auto& w : res.warnings) out << "warning: " << w << "\n";
  out << res.answer << "\n";
  if (args.show_context) out << to_json(res.bundle).dump(2) << "\n";
  return res;
}

struct BenchArgs {
  std::optional<fs::path> store;  // empty: synthetic blobs
  bench::SweepSpec sweep;
  synthetic::BlobSpec blobs;
  std::size_t n_queries = 200;
  fs::path out;
  bool include_timing = true;
};

inline bench::BenchReport bench_recall(const BenchArgs& args, std::ostream& out) {
  bench::BenchReport report;
  if (args.store) {
    const Store store = load_store(*args.store);
    CRAG_REQUIRE(store.size() > 0, "bench-recall needs a non-empty store");
    for (const auto seed : args.sweep.seeds) {
      // Held-out queries: stored vectors with small Gaussian perturbations.
      synthetic::Gaussian g(hashing::splitmix64(seed + 1));
      EmbeddingMatrix queries(args.n_queries, store.d());
      for (std::size_t i = 0; i < args.n_queries; ++i) {
        const auto src = store.vectors.row(static_cast<std::size_t>(g.next() % store.size()));
        auto r = queries.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] = static_cast<float>(src[j] + 0.01 * g.normal());
        normalize_in_place(r);
      }
      for (auto& row : bench::bench_corpus(store.vectors, queries, args.sweep, seed, store.manifest.chunk_len)) {
        report.rows.push_back(std::move(row));
      }
    }
  } else {
    report = bench::run_synthetic_sweep(args.sweep, args.blobs, args.n_queries);
  }
  io::atomic_write(args.out, bench::to_json(report, args.include_timing).dump(2) + "\n");
  out << "method     beta gamma delta  recall  scan_frac  total_sse\n";
  for (const auto& r : report.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %4zu %5zu %5zu  %6.4f  %9.4f  %9.4f\n", bench::to_string(r.method), r.beta,
                  r.gamma, r.delta, r.recall_at_delta, r.scan_fraction, r.total_sse);
    out << line;
  }
  out << "report: " << args.out.string() << "\n";
  return report;
}

struct TrainArgs {
  fs::path store;
  fs::path queries;  // one question per line
  fs::path out_model;
  std::optional<fs::path> out_report;
  RouterHyperparams hp;
};

inline nlohmann::json to_json(const TrainingReport& r, const RouterHyperparams& hp, std::size_t n_examples) {
  nlohmann::json j = {{"initial_loss", r.initial_loss},
                      {"loss_per_epoch", r.loss_per_epoch},
                      {"final_top1", r.final_top1},
                      {"epochs_run", r.epochs_run},
                      {"n_examples", n_examples},
                      {"labels", "nearest-centroid"},
                      {"hyperparams",
                       {{"hidden", hp.hidden},
                        {"epochs", hp.epochs},
                        {"batch_size", hp.batch_size},
                        {"learning_rate", hp.learning_rate},
                        {"momentum", hp.momentum},
                        {"mix_a", hp.mix_a},
                        {"mix_b", hp.mix_b},
                        {"learn_mix", hp.learn_mix},
                        {"seed", hp.seed}}}};
  if (r.epochs_run == 0) j["note"] = "no training performed (epochs = 0); model is the initialization";
  return j;
}

/// Embeds each query, labels it with its nearest centroid and fits the router.
inline TrainedRouter train_router_cmd(const Config& cfg, const TrainArgs& args, std::ostream& out) {
  const Store store = load_store(args.store);
  CRAG_REQUIRE(store.clusters.size() > 0, "train-router needs a store with clusters");
  const auto embedder = make_embedder_for(cfg, store.manifest);
  const std::string content = detail::read_file(args.queries);
  utf8::require_valid(content, args.queries.string());
  std::vector<std::string> texts;
  for (const auto line : detail::split_lines(content)) {
    const auto t = text::trim(line);
    if (!t.empty()) texts.emplace_back(t);
  }
  if (texts.empty()) throw ParseError(args.queries.string() + ": no queries");
  const auto q = stage("embed", [&] { return embed_texts(*embedder, texts, store.manifest.normalize_flag); });
  std::vector<RouterExample> examples;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    RouterExample e;
    e.query.assign(q.row(i).begin(), q.row(i).end());
    e.target = nearest_centroid(e.query, store.clusters);
    examples.push_back(std::move(e));
  }
  auto trained = train_router(store.clusters, examples, args.hp);
  save_router(trained.model, args.out_model);
  const auto rep = to_json(trained.report, args.hp, examples.size());
  if (args.out_report) io::atomic_write(*args.out_report, rep.dump(2) + "\n");
  out << "examples: " << examples.size() << "\n"
      << "epochs: " << trained.report.epochs_run << "\n"
      << "final top-1: " << trained.report.final_top1 << "\n"
      << "model: " << args.out_model.string() << "\n";
  return trained;
}

struct EvalArgs {
  fs::path store;
  fs::path qa_file;
  fs::path out;
  std::string mock_llm;
  bool include_timing = true;
};

inline EvalReport eval(const Config& cfg, const EvalArgs& args, std::ostream& out) {
  validate(cfg);
  const Session s = open_session(cfg, args.store);
  const auto items = load_qa_items(args.qa_file);
  EvalOptions opts;
  opts.query = query_options(cfg);
  opts.parallelism = cfg.parallelism;
  fit_gamma(opts.query, s.store);
  std::unique_ptr<GenerationClient> client;
  switch (parse_mock(args.mock_llm)) {
    case MockLlm::kEcho: client = std::make_unique<EchoClient>(); break;
    case MockLlm::kFirst: client = std::make_unique<FixedAnswerClient>(std::string(kAnswerLead) + " 1"); break;
    case MockLlm::kGold: client = std::make_unique<GoldAnswerClient>(items); break;
    case MockLlm::kRetrieval:
      client = std::make_unique<RetrievalSensitiveClient>(RetrievalSensitiveClient::from_store(items, s.store));
      break;
    case MockLlm::kNone:
      if (cfg.gen_endpoint.empty()) throw ConfigError("no generation endpoint configured (set gen_endpoint or --mock-llm)");
      client = std::make_unique<HttpGenerationClient>(http_settings(cfg, cfg.gen_endpoint));
      break;
  }
  const auto report = evaluate(s.store, *s.embedder, s.router(), items, opts, *client);
  io::atomic_write(args.out, to_json(report, args.include_timing).dump(2) + "\n");
  out << "items: " << report.total << "\n"
      << "accuracy: " << report.accuracy << "\n"
      << "abstain rate: " << report.abstain_rate << "\n"
      << "failed: " << report.failed << "\n"
      << "report: " << args.out.string() << "\n";
  return report;
}

}  // namespace crag::cmd
