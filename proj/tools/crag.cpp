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

// crag: command-line front end for ingesting corpora, querying, benchmarking
// cluster pruning, training the learned router and running evaluations.
//
// Exit codes: 0 success, 2 configuration or input errors, 1 runtime errors.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crag/commands.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

int exit_code_for(const crag::Error& e) {
  switch (e.kind()) {
    case crag::ErrorKind::kConfiguration:
    case crag::ErrorKind::kParse:
    case crag::ErrorKind::kPrecondition:
    case crag::ErrorKind::kEncoding:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

// Values given on the command line; applied on top of the config file.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> chunk_len, beta, gamma, delta, dim, parallelism;
  std::optional<std::string> embed_endpoint, gen_endpoint, router_mode, router_model;
  bool embed_enhanced = false;

  void add_common(CLI::App* app) {
    app->add_option("--config", config_path, "Flat key = value config file");
    app->add_option("--seed", seed, "Seed for clustering / sampling");
  }

  crag::Config resolve() const {
    crag::Config c;
    if (!config_path.empty()) crag::load_config_file(c, config_path);
    if (seed) c.seed = *seed;
    if (chunk_len) c.chunk_len = *chunk_len;
    if (beta) c.beta = *beta;
    if (gamma) c.gamma = *gamma;
    if (delta) c.delta = *delta;
    if (dim) c.embed_dim = *dim;
    if (parallelism) c.parallelism = *parallelism;
    if (embed_endpoint) c.embed_endpoint = *embed_endpoint;
    if (gen_endpoint) c.gen_endpoint = *gen_endpoint;
    if (router_mode) c.router_mode = *router_mode;
    if (router_model) {
      c.router_model = *router_model;
      if (!router_mode) c.router_mode = "learned";
    }
    if (embed_enhanced) c.embed_enhanced = true;
    // Only an unspecified value gives way when gamma <= beta would fail.
    if (gamma && !beta && c.gamma > c.beta) c.beta = c.gamma;
    if (beta && !gamma && c.gamma > c.beta) c.gamma = c.beta;
    return c;
  }
};

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    auto comma = s.find(',', pos);
    if (comma == std::string::npos) comma = s.size();
    out.push_back(crag::detail::parse_uint("list", crag::text::trim(std::string_view(s).substr(pos, comma - pos))));
    pos = comma + 1;
  }
  if (out.empty()) throw crag::ConfigError("empty list '" + s + "'");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster-routed retrieval-augmented question answering"};
  app.require_subcommand(1);
  Overrides ov;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Chunk, embed, cluster and store a corpus");
  crag::cmd::IngestArgs ingest_args;
  std::string ingest_store, abbrev_file, terms_file;
  ov.add_common(ingest);
  ingest->add_option("--corpus", ingest_args.corpus, "Directory of .txt files or a JSON-lines file")->required();
  ingest->add_option("--store", ingest_store, "Output store file")->required();
  ingest->add_option("--chunk-len", ov.chunk_len, "Chunk length in characters (500 or 250 typical)");
  ingest->add_option("--beta", ov.beta, "Number of clusters");
  ingest->add_option("--dim", ov.dim, "Embedding dimension");
  ingest->add_option("--embed-endpoint", ov.embed_endpoint, "Remote embedding service base URL");
  ingest->add_option("--abbreviations", abbrev_file, "Extra abbreviation TSV file");
  ingest->add_option("--terms", terms_file, "Extra term-definition TSV file");

  // query
  auto* query = app.add_subcommand("query", "Answer one question");
  crag::cmd::QueryArgs query_args;
  std::string query_store;
  ov.add_common(query);
  query->add_option("--store", query_store, "Store file")->required();
  query->add_option("question", query_args.question, "Question text")->required();
  query->add_option("--gamma", ov.gamma, "Clusters to search");
  query->add_option("--delta", ov.delta, "Context chunks to retrieve");
  query->add_option("--mock-llm", query_args.mock_llm, "Offline generation stand-in: echo | first");
  query->add_option("--gen-endpoint", ov.gen_endpoint, "Generation service base URL");
  query->add_option("--embed-endpoint", ov.embed_endpoint, "Embedding service base URL");
  query->add_option("--router-model", ov.router_model, "Use a trained router model");
  query->add_flag("--show-context", query_args.show_context, "Print the prompt bundle as JSON");
  query->add_flag("--embed-enhanced", ov.embed_enhanced, "Embed the enhanced query instead of the raw one");

  // bench-recall
  auto* benchc = app.add_subcommand("bench-recall", "Recall / scan-fraction sweep of cluster pruning");
  crag::cmd::BenchArgs bench_args;
  std::string bench_store, betas = "18", gammas = "1,2,4,8,18", deltas = "10", seeds = "0";
  bool no_timing = false;
  ov.add_common(benchc);
  benchc->add_option("--store", bench_store, "Benchmark an existing store instead of synthetic blobs");
  benchc->add_option("--betas", betas, "Comma-separated cluster counts");
  benchc->add_option("--gammas", gammas, "Comma-separated routed-cluster counts");
  benchc->add_option("--deltas", deltas, "Comma-separated retrieval depths");
  benchc->add_option("--seeds", seeds, "Comma-separated seeds");
  benchc->add_option("--blobs", bench_args.blobs.n_blobs, "Synthetic blob count");
  benchc->add_option("--per-blob", bench_args.blobs.per_blob, "Points per blob");
  benchc->add_option("--dim", bench_args.blobs.d, "Synthetic dimension");
  benchc->add_option("--spread", bench_args.blobs.spread, "Per-coordinate blob standard deviation");
  benchc->add_option("--queries", bench_args.n_queries, "Held-out queries per seed");
  benchc->add_option("--out", bench_args.out, "Report JSON path")->required();
  benchc->add_flag("--dump-queries", bench_args.sweep.dump_queries, "Include per-query gold/retrieved ids");
  benchc->add_flag("--no-timing", no_timing, "Write latency fields as null (byte-stable reports)");

  // train-router
  auto* train = app.add_subcommand("train-router", "Train the learned router on nearest-centroid labels");
  crag::cmd::TrainArgs train_args;
  std::string train_report;
  ov.add_common(train);
  train->add_option("--store", train_args.store, "Store file")->required();
  train->add_option("--queries", train_args.queries, "Training questions, one per line")->required();
  train->add_option("--out", train_args.out_model, "Output router model file")->required();
  train->add_option("--report", train_report, "Training report JSON path");
  train->add_option("--epochs", train_args.hp.epochs, "Training epochs");
  train->add_option("--lr", train_args.hp.learning_rate, "Learning rate");
  train->add_option("--batch", train_args.hp.batch_size, "Mini-batch size");
  train->add_option("--hidden", train_args.hp.hidden, "Projection width");
  train->add_flag("--learn-mix", train_args.hp.learn_mix, "Learn the two mixing constants");
  train->add_option("--embed-endpoint", ov.embed_endpoint, "Embedding service base URL");

  // eval
  auto* evalc = app.add_subcommand("eval", "Multiple-choice evaluation");
  crag::cmd::EvalArgs eval_args;
  bool eval_no_timing = false;
  ov.add_common(evalc);
  evalc->add_option("--store", eval_args.store, "Store file")->required();
  evalc->add_option("--qa", eval_args.qa_file, "QA JSON file")->required();
  evalc->add_option("--out", eval_args.out, "Report JSON path")->required();
  evalc->add_option("--gamma", ov.gamma, "Clusters to search");
  evalc->add_option("--delta", ov.delta, "Context chunks to retrieve");
  evalc->add_option("--mock-llm", eval_args.mock_llm, "Offline stand-in: echo | first | gold | retrieval");
  evalc->add_option("--gen-endpoint", ov.gen_endpoint, "Generation service base URL");
  evalc->add_option("--embed-endpoint", ov.embed_endpoint, "Embedding service base URL");
  evalc->add_option("--router-model", ov.router_model, "Use a trained router model");
  evalc->add_option("--parallel", ov.parallelism, "Items evaluated concurrently");
  evalc->add_flag("--no-timing", eval_no_timing, "Write latency as null (byte-stable reports)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*ingest) {
      const auto cfg = ov.resolve();
      ingest_args.store = ingest_store;
      if (!abbrev_file.empty()) ingest_args.abbrev_file = abbrev_file;
      if (!terms_file.empty()) ingest_args.terms_file = terms_file;
      crag::cmd::ingest(cfg, ingest_args, std::cout);
    } else if (*query) {
      const auto cfg = ov.resolve();
      query_args.store = query_store;
      crag::cmd::query(cfg, query_args, std::cout);
    } else if (*benchc) {
      bench_args.sweep.betas = parse_list(betas);
      bench_args.sweep.gammas = parse_list(gammas);
      bench_args.sweep.deltas = parse_list(deltas);
      bench_args.sweep.seeds.clear();
      for (auto s : parse_list(seeds)) bench_args.sweep.seeds.push_back(s);
      if (ov.seed) bench_args.sweep.seeds = {*ov.seed};
      bench_args.include_timing = !no_timing;
      if (!bench_store.empty()) bench_args.store = bench_store;
      crag::cmd::bench_recall(bench_args, std::cout);
    } else if (*train) {
      const auto cfg = ov.resolve();
      train_args.hp.seed = cfg.seed;
      if (!train_report.empty()) train_args.out_report = train_report;
      crag::cmd::train_router_cmd(cfg, train_args, std::cout);
    } else if (*evalc) {
      const auto cfg = ov.resolve();
      eval_args.include_timing = !eval_no_timing;
      crag::cmd::eval(cfg, eval_args, std::cout);
    }
  } catch (const crag::Error& e) {
    std::cerr << "crag: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "crag: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
