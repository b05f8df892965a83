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

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "crag/store.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kData = CRAG_TEST_DATA_DIR;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

RunResult run(const std::vector<std::string>& args) {
  std::string cmd = quote(CRAG_CLI_PATH);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " 2>&1";
  RunResult r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.output.append(buf.data(), n);
  const int status = ::pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("crag_cli_test_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  // Ingests the three-document corpus into `name` with the given extra flags.
  RunResult ingest(const std::string& name, std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"ingest", "--corpus", (kData / "cli_corpus").string(), "--store",
                                     path(name).string(), "--beta", "2", "--dim", "256"};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }

  fs::path dir_;
};

}  // namespace

// a.txt has 1203 characters, b.txt 480 (with accented letters) and c.txt 1000.
TEST_F(CliTest, IngestCountsChunks) {
  const auto r = ingest("s500.crag");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("chunks: 6 (chunk_len 500)"), std::string::npos) << r.output;
  const auto s = crag::load_store(path("s500.crag"));
  EXPECT_EQ(s.manifest.n_chunks, 3u + 1u + 2u);
  EXPECT_EQ(s.clusters.size(), 2u);
  EXPECT_EQ(s.glossary.abbreviations.at("LLDP"), "Link Layer Discovery Protocol");
  EXPECT_EQ(s.chunks[3].doc_id, "b");
  EXPECT_EQ(s.chunks[2].char_offset, 1000u);

  const auto r250 = ingest("s250.crag", {"--chunk-len", "250"});
  ASSERT_EQ(r250.exit_code, 0) << r250.output;
  EXPECT_EQ(crag::load_store(path("s250.crag")).manifest.n_chunks, 5u + 2u + 4u);
}

TEST_F(CliTest, BetaAboveChunkCountIsPreconditionError) {
  const auto r = run({"ingest", "--corpus", (kData / "cli_corpus").string(), "--store", path("big.crag").string(),
                      "--beta", "7", "--dim", "256"});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("beta (7) exceeds the number of chunks (6)"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(path("big.crag")));
}

TEST_F(CliTest, IngestIsByteIdenticalAcrossRuns) {
  ASSERT_EQ(ingest("a.crag", {"--seed", "3"}).exit_code, 0);
  ASSERT_EQ(ingest("b.crag", {"--seed", "3"}).exit_code, 0);
  EXPECT_EQ(slurp(path("a.crag")), slurp(path("b.crag")));
}

TEST_F(CliTest, MissingCorpusIsConfigurationError) {
  const auto r = run({"ingest", "--corpus", path("nope").string(), "--store", path("x.crag").string()});
  EXPECT_EQ(r.exit_code, 2) << r.output;
}

TEST_F(CliTest, UnknownFlagIsUsageError) {
  EXPECT_EQ(run({"ingest", "--bogus"}).exit_code, 2);
  EXPECT_EQ(run({}).exit_code, 2);
}

TEST_F(CliTest, QueryEchoShowsContext) {
  ASSERT_EQ(ingest("s.crag").exit_code, 0);
  const auto r = run({"query", "--store", path("s.crag").string(), "--gamma", "2", "--delta", "6", "--mock-llm",
                      "echo", "--show-context", "How does frame preemption work?"});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("<|im_start|>context"), std::string::npos);
  const auto brace = r.output.find("\n{");
  ASSERT_NE(brace, std::string::npos);
  const auto j = nlohmann::json::parse(r.output.substr(brace + 1));
  ASSERT_EQ(j["context"].size(), 6u);
  for (const auto& c : j["context"]) {
    EXPECT_NE(r.output.find(c["text"].get<std::string>()), std::string::npos);
  }
}

TEST_F(CliTest, QueryEnhancesWithLoadedGlossary) {
  ASSERT_EQ(ingest("g.crag", {"--abbreviations", (kData / "enhancement_example" / "abbreviations.tsv").string(), "--terms",
                              (kData / "enhancement_example" / "terms.tsv").string()})
                .exit_code,
            0);
  const auto r = run({"query", "--store", path("g.crag").string(), "--gamma", "1", "--delta", "1", "--mock-llm",
                      "echo", "--show-context", "What functionality does LLDP provide in the TSN Transport Network?"});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto j = nlohmann::json::parse(r.output.substr(r.output.find("\n{") + 1));
  EXPECT_EQ(j["enhanced_query"]["text"],
            "What functionality does LLDP provide in the TSN Transport Network?\n\n"
            "Transport Network: Network infrastructure that provides connectivity and bandwidth for customer "
            "services.\nLLDP: Link Layer Discovery Protocol.\nTSN: Time-Sensitive Networking");
}

TEST_F(CliTest, QueryGammaAboveClusterCountRejected) {
  ASSERT_EQ(ingest("s.crag").exit_code, 0);
  const auto r = run({"query", "--store", path("s.crag").string(), "--gamma", "3", "--mock-llm", "echo", "q"});
  EXPECT_EQ(r.exit_code, 2) << r.output;
}

TEST_F(CliTest, QueryWithoutGeneratorIsConfigurationError) {
  ASSERT_EQ(ingest("s.crag").exit_code, 0);
  const auto r = run({"query", "--store", path("s.crag").string(), "--gamma", "2", "q"});
  EXPECT_EQ(r.exit_code, 2) << r.output;
}

TEST_F(CliTest, BenchRecallSoundFromQueryDump) {
  const auto out = path("bench.json");
  const auto r = run({"bench-recall", "--blobs", "6", "--per-blob", "30", "--dim", "16", "--queries", "40", "--betas",
                      "6", "--gammas", "2,6", "--deltas", "5", "--seeds", "1", "--dump-queries", "--no-timing",
                      "--out", out.string()});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto j = nlohmann::json::parse(slurp(out));
  ASSERT_EQ(j["rows"].size(), 4u);
  for (const auto& row : j["rows"]) {
    EXPECT_TRUE(row["latency_us_p50"].is_null());
    double hits = 0, total = 0;
    for (const auto& q : row["queries"]) {
      const auto gold = q["gold"].get<std::vector<std::size_t>>();
      const auto got = q["retrieved"].get<std::vector<std::size_t>>();
      const std::set<std::size_t> g(gold.begin(), gold.end());
      for (auto id : got) hits += g.count(id);
      total += static_cast<double>(gold.size());
    }
    EXPECT_NEAR(row["recall_at_delta"].get<double>(), hits / total, 1e-12);
    if (row["gamma"] == 6) {
      EXPECT_EQ(row["recall_at_delta"].get<double>(), 1.0);
      EXPECT_EQ(row["scan_fraction"].get<double>(), 1.0);
    }
  }
}

TEST_F(CliTest, BenchRecallOnStore) {
  ASSERT_EQ(ingest("s.crag").exit_code, 0);
  const auto out = path("bench.json");
  const auto r = run({"bench-recall", "--store", path("s.crag").string(), "--betas", "2", "--gammas", "2",
                      "--deltas", "3", "--seeds", "1", "--queries", "10", "--no-timing", "--out", out.string()});
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto j = nlohmann::json::parse(slurp(out));
  for (const auto& row : j["rows"]) EXPECT_EQ(row["recall_at_delta"].get<double>(), 1.0);
}

TEST_F(CliTest, TrainRouterReproducible) {
  ASSERT_EQ(ingest("s.crag").exit_code, 0);
  auto train = [&](const std::string& model, const std::string& report, const std::string& epochs) {
    return run({"train-router", "--store", path("s.crag").string(), "--queries", (kData / "cli_queries.txt").string(),
                "--out", path(model).string(), "--report", path(report).string(), "--epochs", epochs, "--hidden",
                "16", "--seed", "4"});
  };
  ASSERT_EQ(train("m1.crtr", "r1.json", "5").exit_code, 0);
  ASSERT_EQ(train("m2.crtr", "r2.json", "5").exit_code, 0);
  EXPECT_EQ(slurp(path("m1.crtr")), slurp(path("m2.crtr")));
  EXPECT_EQ(slurp(path("r1.json")), slurp(path("r2.json")));
  const auto rep = nlohmann::json::parse(slurp(path("r1.json")));
  EXPECT_EQ(rep["epochs_run"], 5);
  EXPECT_EQ(rep["n_examples"], 10);

  const auto zero = train("m0.crtr", "r0.json", "0");
  ASSERT_EQ(zero.exit_code, 0) << zero.output;
  const auto rep0 = nlohmann::json::parse(slurp(path("r0.json")));
  EXPECT_EQ(rep0["epochs_run"], 0);
  EXPECT_TRUE(rep0.contains("note"));

  const auto q = run({"query", "--store", path("s.crag").string(), "--router-model", path("m1.crtr").string(),
                      "--gamma", "1", "--delta", "2", "--mock-llm", "echo", "How does frame preemption work?"});
  EXPECT_EQ(q.exit_code, 0) << q.output;
}

TEST_F(CliTest, EvalGoldIsPerfectAndStable) {
  ASSERT_EQ(ingest("s.crag").exit_code, 0);
  auto eval = [&](const std::string& out, const std::string& mock) {
    return run({"eval", "--store", path("s.crag").string(), "--qa", (kData / "cli_qa.json").string(), "--gamma", "2",
                "--delta", "3", "--mock-llm", mock, "--no-timing", "--out", path(out).string()});
  };
  ASSERT_EQ(eval("e1.json", "gold").exit_code, 0);
  ASSERT_EQ(eval("e2.json", "gold").exit_code, 0);
  EXPECT_EQ(slurp(path("e1.json")), slurp(path("e2.json")));
  const auto j = nlohmann::json::parse(slurp(path("e1.json")));
  EXPECT_EQ(j["accuracy"].get<double>(), 1.0);
  EXPECT_EQ(j["per_category"]["discovery"]["total"], 2);
  EXPECT_TRUE(j["latency_ms_mean"].is_null());

  ASSERT_EQ(eval("first.json", "first").exit_code, 0);
  EXPECT_NEAR(nlohmann::json::parse(slurp(path("first.json")))["accuracy"].get<double>(), 1.0 / 3.0, 1e-12);
}

TEST_F(CliTest, EvalMalformedQaNamesLine) {
  ASSERT_EQ(ingest("s.crag").exit_code, 0);
  const auto r = run({"eval", "--store", path("s.crag").string(), "--qa", (kData / "cli_qa_malformed.json").string(),
                      "--gamma", "2", "--mock-llm", "gold", "--out", path("e.json").string()});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("malformed JSON at line 4"), std::string::npos) << r.output;
}

TEST_F(CliTest, EvalRetrievalMockNeedsGoldChunks) {
  ASSERT_EQ(ingest("s.crag").exit_code, 0);
  const auto r = run({"eval", "--store", path("s.crag").string(), "--qa", (kData / "cli_qa.json").string(), "--gamma",
                      "2", "--mock-llm", "retrieval", "--out", path("e.json").string()});
  EXPECT_EQ(r.exit_code, 2) << r.output;
}
