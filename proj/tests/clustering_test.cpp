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

#include <random>
#include <vector>

#include "crag/clustering.hpp"
#include "crag/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace crag;

namespace {

EmbeddingMatrix matrix(std::size_t cols, std::vector<float> values) {
  const std::size_t rows = values.size() / cols;
  return EmbeddingMatrix(rows, cols, std::move(values));
}

EmbeddingMatrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  EmbeddingMatrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : m.row(i)) x = nd(rng);
  }
  return m;
}

}  // namespace

TEST(Sse, SinglePointIsZero) {
  const auto m = matrix(2, {3.0f, -1.0f});
  EXPECT_EQ(sse(m.view()), 0.0);
}

TEST(Sse, TwoPointsOnALine) {
  const auto m = matrix(1, {0.0f, 2.0f});
  EXPECT_DOUBLE_EQ(sse(m.view()), 2.0);
}

TEST(Sse, UnitSquareCorners) {
  const auto m = matrix(2, {0, 0, 0, 2, 2, 0, 2, 2});
  EXPECT_DOUBLE_EQ(sse(m.view()), 8.0);
}

TEST(Sse, SubsetMatchesOracle) {
  const auto m = random_matrix(40, 5, 3);
  const std::vector<std::size_t> ids = {1, 4, 9, 16, 25, 36};
  EXPECT_NEAR(sse(m.view(), ids), oracle::group_sse(m.view(), ids), 1e-9);
}

TEST(Sse, EmptySetRejected) {
  const auto m = matrix(1, {1.0f});
  EXPECT_THROW(sse(m.view(), std::vector<std::size_t>{}), PreconditionError);
}

TEST(KMeans, TwoObviousGroups) {
  const auto m = matrix(1, {0, 1, 10, 11});
  const auto cs = kmeans(m.view(), 2);
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(oracle::canonical_labels(cs), (std::vector<int>{0, 0, 1, 1}));
  EXPECT_DOUBLE_EQ(total_sse(cs), 1.0);
}

TEST(KMeans, HandBuiltSetsMatchExhaustiveTwoPartition) {
  for (const auto& f : fixtures::two_cluster_sets()) {
    const auto cs = kmeans(f.points.view(), 2);
    const auto best = oracle::best_two_partition(f.points.view());
    EXPECT_EQ(oracle::canonical_labels(cs), best.labels) << f.name;
    EXPECT_NEAR(total_sse(cs), best.sse, 1e-9) << f.name;
  }
}

TEST(KMeans, NeverBeatsExhaustiveTwoPartition) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto m = random_matrix(10, 2, 100 + seed);
    const auto cs = kmeans(m.view(), 2, {.seed = seed});
    const auto best = oracle::best_two_partition(m.view());
    // Lloyd only guarantees a local optimum; it must never beat the oracle.
    EXPECT_GE(total_sse(cs) + 1e-9, best.sse) << seed;
  }
}

TEST(KMeans, SingleClusterHoldsEverything) {
  const auto m = random_matrix(12, 3, 1);
  const auto cs = kmeans(m.view(), 1);
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_EQ(cs.clusters[0].member_ids.size(), 12u);
  EXPECT_NEAR(cs.clusters[0].sse, sse(m.view()), 1e-9);
}

TEST(KMeans, KEqualsNGivesSingletons) {
  const auto m = random_matrix(7, 3, 2);
  const auto cs = kmeans(m.view(), 7);
  EXPECT_FALSE(partition_violation(cs).has_value());
  for (const auto& c : cs.clusters) EXPECT_EQ(c.member_ids.size(), 1u);
  EXPECT_EQ(total_sse(cs), 0.0);
}

TEST(KMeans, DuplicatePointsDoNotLeaveEmptyClusters) {
  const auto m = matrix(1, {5, 5, 5, 5, 5, 9});
  const auto cs = kmeans(m.view(), 3);
  EXPECT_FALSE(partition_violation(cs).has_value());
}

TEST(KMeans, RejectsBadK) {
  const auto m = random_matrix(3, 2, 0);
  EXPECT_THROW(kmeans(m.view(), 0), PreconditionError);
  EXPECT_THROW(kmeans(m.view(), 4), PreconditionError);
}

TEST(Bisecting, ProducesPartitionOfRequestedSize) {
  const auto m = random_matrix(300, 16, 7);
  for (std::size_t beta : {1u, 2u, 5u, 18u}) {
    const auto cs = bisecting_kmeans(m.view(), beta);
    EXPECT_EQ(cs.size(), beta);
    const auto violation = partition_violation(cs);
    EXPECT_FALSE(violation.has_value()) << *violation;
  }
}

TEST(Bisecting, SplitsNeverIncreaseSse) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = random_matrix(200, 8, seed);
    const auto r = bisecting_kmeans_traced(m.view(), 12, {.seed = seed});
    ASSERT_EQ(r.splits.size(), 11u);
    for (const auto& s : r.splits) {
      EXPECT_LE(s.child_sse[0] + s.child_sse[1], s.parent_sse + 1e-9);
      EXPECT_GE(s.parent_sse, s.max_other_sse);
    }
  }
}

TEST(Bisecting, Deterministic) {
  const auto m = random_matrix(150, 6, 11);
  EXPECT_EQ(bisecting_kmeans(m.view(), 9, {.seed = 4}), bisecting_kmeans(m.view(), 9, {.seed = 4}));
}

TEST(Bisecting, BetaEqualsNGivesSingletons) {
  const auto m = random_matrix(6, 2, 5);
  const auto cs = bisecting_kmeans(m.view(), 6);
  EXPECT_FALSE(partition_violation(cs).has_value());
  EXPECT_EQ(total_sse(cs), 0.0);
}

TEST(Bisecting, RejectsBetaAboveN) {
  const auto m = random_matrix(4, 2, 5);
  EXPECT_THROW(bisecting_kmeans(m.view(), 5), PreconditionError);
  EXPECT_THROW(bisecting_kmeans(m.view(), 0), PreconditionError);
}

TEST(Bisecting, FirstChildKeepsParentId) {
  const auto m = matrix(1, {0, 1, 100, 101});
  const auto cs = bisecting_kmeans(m.view(), 2);
  EXPECT_EQ(cs.clusters[0].member_ids, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(cs.clusters[1].member_ids, (std::vector<std::size_t>{2, 3}));
}

TEST(Bisecting, RecoversFourBlobs) {
  synthetic::BlobSpec spec{.n_blobs = 4, .per_blob = 50, .d = 8, .seed = 3};
  const auto data = synthetic::make_blobs(spec);
  const auto cs = bisecting_kmeans(data.points.view(), 4);
  EXPECT_EQ(oracle::matched_points(cs, data.labels, 4), 200u);
}

TEST(PartitionViolation, DetectsOverlap) {
  ClusterSet cs;
  cs.d = 1;
  cs.n = 2;
  cs.clusters = {{0, {0.0}, {0, 1}, 0.0}, {1, {0.0}, {1}, 0.0}};
  EXPECT_TRUE(partition_violation(cs).has_value());
  cs.clusters.pop_back();
  EXPECT_FALSE(partition_violation(cs).has_value());
}
