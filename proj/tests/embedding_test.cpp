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

#include <cmath>
#include <string>
#include <vector>

#include "crag/embedding.hpp"

using namespace crag;

namespace {

double cosine(const std::vector<float>& a, const std::vector<float>& b) { return dot(a, b); }

// Provider returning fixed rows, for exercising the embed_texts contract.
class FixedEmbedder final : public Embedder {
 public:
  FixedEmbedder(std::size_t d, std::vector<float> row, std::size_t rows_override = 0)
      : d_(d), row_(std::move(row)), rows_override_(rows_override) {}
  std::size_t dim() const override { return d_; }
  std::string tag() const override { return "fixed"; }
  EmbeddingMatrix embed(std::span<const std::string> texts) const override {
    const std::size_t n = rows_override_ ? rows_override_ : texts.size();
    EmbeddingMatrix m(0, row_.size());
    for (std::size_t i = 0; i < n; ++i) m.append_row(row_);
    return m;
  }

 private:
  std::size_t d_;
  std::vector<float> row_;
  std::size_t rows_override_;
};

}  // namespace

TEST(TestEmbed, Deterministic) {
  EXPECT_EQ(test_embed("same text", 64, 3), test_embed("same text", 64, 3));
  EXPECT_NE(test_embed("same text", 64, 3), test_embed("same text", 64, 4));
}

TEST(TestEmbed, EmptyTextIsFirstBasisVector) {
  const std::vector<float> e0 = {1, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(test_embed("", 8, 0), e0);
}

TEST(TestEmbed, RequiresDimensionAtLeastEight) {
  EXPECT_THROW(test_embed("x", 7, 0), PreconditionError);
}

TEST(TestEmbed, UnitNorm) {
  for (const char* t : {"x", "ab", "the cat sat", "Ünïcödé text ✓", "ZZZZZZZZ"}) {
    EXPECT_NEAR(l2_norm(test_embed(t, 1024, 0)), 1.0, 1e-6) << t;
  }
}

TEST(TestEmbed, CaseInsensitiveForAscii) {
  EXPECT_EQ(test_embed("Hello World", 64, 1), test_embed("hello world", 64, 1));
}

// Values frozen from tests/oracles/hash_embed_oracle.py.
TEST(TestEmbed, MatchesReferenceHash) {
  const auto v = test_embed("Hello", 16, 3);
  const double c = 1.0 / std::sqrt(3.0);
  for (std::size_t i = 0; i < 16; ++i) {
    const double expected = (i == 7 || i == 9 || i == 13) ? c : 0.0;
    EXPECT_NEAR(v[i], expected, 1e-7) << i;
  }
  const auto x = test_embed("x", 16, 7);
  EXPECT_FLOAT_EQ(x[14], 1.0f);
}

TEST(TestEmbed, OverlappingTextIsCloser) {
  const auto base = test_embed("the cat sat", 64, 0);
  const double near = cosine(base, test_embed("the cat sat on", 64, 0));
  const double far = cosine(base, test_embed("zzqx", 64, 0));
  EXPECT_NEAR(near, 0.890870806375, 1e-6);
  EXPECT_NEAR(far, 0.0, 1e-6);
  EXPECT_GT(near, far);
}

TEST(EmbedTexts, RowsFollowInputOrder) {
  HashEmbedder e(32, 0);
  const std::vector<std::string> texts = {"a", "a", "bcd"};
  const auto m = embed_texts(e, texts);
  ASSERT_EQ(m.rows(), 3u);
  EXPECT_TRUE(std::equal(m.row(0).begin(), m.row(0).end(), m.row(1).begin()));
  const auto third = test_embed("bcd", 32, 0);
  EXPECT_TRUE(std::equal(m.row(2).begin(), m.row(2).end(), third.begin()));
}

TEST(EmbedTexts, DefaultDimension) {
  EXPECT_EQ(kDefaultDim, 1024u);
  HashEmbedder e;
  EXPECT_EQ(e.dim(), 1024u);
}

TEST(EmbedTexts, NormalizesProviderOutput) {
  FixedEmbedder raw(3, {3.0f, 4.0f, 0.0f});
  const std::vector<std::string> texts = {"q"};
  const auto m = embed_texts(raw, texts);
  EXPECT_NEAR(l2_norm(m.row(0)), 1.0, 1e-6);
  EXPECT_FLOAT_EQ(m.row(0)[0], 0.6f);
  const auto un = embed_texts(raw, texts, false);
  EXPECT_FLOAT_EQ(un.row(0)[1], 4.0f);
}

TEST(EmbedTexts, DimensionMismatchIsContractViolation) {
  FixedEmbedder wrong(4, {1.0f, 0.0f, 0.0f});
  const std::vector<std::string> texts = {"q"};
  EXPECT_THROW(embed_texts(wrong, texts), ContractViolation);
}

TEST(EmbedTexts, RowCountMismatchIsContractViolation) {
  FixedEmbedder wrong(3, {1.0f, 0.0f, 0.0f}, 2);
  const std::vector<std::string> texts = {"q"};
  EXPECT_THROW(embed_texts(wrong, texts), ContractViolation);
}

TEST(EmbedTexts, NonFiniteIsContractViolation) {
  FixedEmbedder nan(2, {NAN, 1.0f});
  const std::vector<std::string> texts = {"q"};
  EXPECT_THROW(embed_texts(nan, texts), ContractViolation);
}

TEST(EmbedTexts, EmptyListRejected) {
  HashEmbedder e(8, 0);
  EXPECT_THROW(embed_texts(e, std::vector<std::string>{}), PreconditionError);
}
