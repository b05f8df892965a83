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

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "crag/remote.hpp"

using namespace crag;

namespace {

// Local HTTP server on an ephemeral port, torn down with the fixture.
class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      ++embed_calls_;
      if (fail_first_ > 0) {
        --fail_first_;
        res.status = 503;
        return;
      }
      const auto j = nlohmann::json::parse(req.body);
      nlohmann::json vectors = nlohmann::json::array();
      for (const auto& t : j["texts"]) {
        const auto v = test_embed(t.get<std::string>(), reply_dim_, 0);
        vectors.push_back(v);
      }
      res.set_content(nlohmann::json{{"vectors", vectors}, {"dim", reply_dim_}}.dump(), "application/json");
    });
    server_.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
      const auto j = nlohmann::json::parse(req.body);
      last_max_tokens_ = j["max_tokens"].get<int>();
      if (malformed_) {
        res.set_content("{\"txt\": 1}", "application/json");
        return;
      }
      res.set_content(nlohmann::json{{"text", "reply to " + j["prompt"].get<std::string>()}}.dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  HttpSettings settings(int retries = 2) const {
    return {"http://127.0.0.1:" + std::to_string(port_), 5000, retries};
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> embed_calls_{0};
  std::atomic<int> fail_first_{0};
  std::size_t reply_dim_ = 16;
  bool malformed_ = false;
  std::atomic<int> last_max_tokens_{0};
};

}  // namespace

TEST_F(ServiceTest, EmbedMatchesLocalEmbedderInInputOrder) {
  const HttpEmbedder e(settings(), 16, 3, 2);
  std::vector<std::string> texts;
  for (int i = 0; i < 10; ++i) texts.push_back("text number " + std::to_string(i));
  const auto m = embed_texts(e, texts);
  ASSERT_EQ(m.rows(), 10u);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto want = test_embed(texts[i], 16, 0);
    for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(m.row(i)[j], want[j], 1e-6);
  }
  EXPECT_EQ(embed_calls_.load(), 4);
}

TEST_F(ServiceTest, RetriesTransientFailures) {
  fail_first_ = 2;
  const HttpEmbedder e(settings(2), 16);
  const std::vector<std::string> texts = {"a"};
  EXPECT_EQ(embed_texts(e, texts).rows(), 1u);
  EXPECT_EQ(embed_calls_.load(), 3);
}

TEST_F(ServiceTest, GivesUpAfterRetries) {
  fail_first_ = 5;
  const HttpEmbedder e(settings(1), 16);
  const std::vector<std::string> texts = {"a"};
  try {
    embed_texts(e, texts);
    FAIL() << "expected TransportError";
  } catch (const TransportError& err) {
    EXPECT_EQ(err.attempts(), 2);
  }
}

TEST_F(ServiceTest, DimensionMismatchIsContractViolation) {
  reply_dim_ = 8;
  const HttpEmbedder e(settings(), 16);
  const std::vector<std::string> texts = {"a"};
  EXPECT_THROW(embed_texts(e, texts), ContractViolation);
}

TEST_F(ServiceTest, GenerateRoundTrip) {
  const HttpGenerationClient c(settings());
  EXPECT_EQ(c.generate("hello", 42), "reply to hello");
  EXPECT_EQ(last_max_tokens_.load(), 42);
}

TEST_F(ServiceTest, MalformedGenerationReply) {
  malformed_ = true;
  const HttpGenerationClient c(settings());
  EXPECT_THROW(c.generate("hello", 1), ContractViolation);
}

TEST(Remote, UnreachableServiceIsTransportError) {
  const HttpGenerationClient c({"http://127.0.0.1:1", 500, 0});
  EXPECT_THROW(c.generate("x", 1), TransportError);
}
