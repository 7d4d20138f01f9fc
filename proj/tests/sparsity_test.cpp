/*
 * Copyright 2026 The qlower Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qlower/error.hpp"
#include "qlower/fixtures.hpp"
#include "qlower/quantizer.hpp"
#include "qlower/sparsity.hpp"

namespace qlower {
namespace {

std::vector<float> values(const Tensor& t) { return {t.floats().begin(), t.floats().end()}; }

TEST(PruneMagnitude, KeepsLargest) {
  const Tensor w = Tensor::from_floats({4}, {0.1f, -0.5f, 0.3f, 0.05f});
  EXPECT_EQ(values(prune_magnitude(w, 0.5)), (std::vector<float>{0.0f, -0.5f, 0.3f, 0.0f}));
  EXPECT_EQ(prune_magnitude(w, 0.0), w);
}

TEST(PruneMagnitude, MatchesSortOracleAndIsIdempotent) {
  const Tensor w = random_uniform({50, 20}, 41);
  const Tensor p = prune_magnitude(w, 0.8);
  EXPECT_NEAR(sparsity_of(p), 0.8, 1.0 / 1000);
  std::vector<std::size_t> idx(1000);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    return std::fabs(w.floats()[a]) < std::fabs(w.floats()[b]);
  });
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const bool zeroed = p.floats()[idx[r]] == 0.0f;
    EXPECT_EQ(zeroed, r < 800) << r;
  }
  EXPECT_EQ(prune_magnitude(p, 0.8), p);
}

TEST(PruneMagnitude, TiesGoToLowerIndex) {
  const Tensor w = Tensor::from_floats({4}, {1.0f, 1.0f, 1.0f, 1.0f});
  EXPECT_EQ(values(prune_magnitude(w, 0.5)), (std::vector<float>{0.0f, 0.0f, 1.0f, 1.0f}));
}

TEST(PruneNm, GroupExampleAndErrors) {
  const Tensor w = Tensor::from_floats({1, 4}, {0.1f, -0.5f, 0.3f, 0.05f});
  EXPECT_EQ(values(prune_nm(w, 2, 4, 1)), (std::vector<float>{0.0f, -0.5f, 0.3f, 0.0f}));
  EXPECT_THROW(prune_nm(w, 4, 4, 1), Error);
}

TEST(PruneNm, TrailingPartialGroupStaysDense) {
  const Tensor w = Tensor::from_floats({1, 6}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(values(prune_nm(w, 2, 4, 1)), (std::vector<float>{0, 0, 3, 4, 5, 6}));
}

TEST(PruneNm, RandomMatrixIsHalfSparse) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor p = prune_nm(random_uniform({64, 64}, seed), 2, 4, 1);
    EXPECT_TRUE(verify_nm(p, 2, 4, 1).ok);
    EXPECT_DOUBLE_EQ(sparsity_of(p), 0.5);
  }
  const Tensor c = prune_nm(random_uniform({8, 16, 3, 3}, 42), 2, 4, 1);
  EXPECT_TRUE(verify_nm(c, 2, 4, 1).ok);
}

TEST(VerifyNm, ReportsFirstBadGroup) {
  const Tensor dense = random_uniform({4, 8}, 43, 0.5, 1.0);
  const auto d = verify_nm(dense, 2, 4, 1);
  EXPECT_FALSE(d.ok);
  EXPECT_EQ(d.group, 0);
  Tensor p = prune_nm(dense, 2, 4, 1);
  EXPECT_TRUE(verify_nm(p, 2, 4, 1).ok);
  // Row 1, second group: refill one pruned slot.
  for (int i = 12; i < 16; ++i) {
    if (p.floats()[i] == 0.0f) {
      p.floats()[i] = 0.7f;
      break;
    }
  }
  const auto v = verify_nm(p, 2, 4, 1);
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.group, 3);
}

TEST(Schedule, CubicRamp) {
  SparsitySchedule s{0.0, 0.8, 100};
  EXPECT_DOUBLE_EQ(schedule_sparsity(s, 0), 0.0);
  EXPECT_DOUBLE_EQ(schedule_sparsity(s, 100), 0.8);
  EXPECT_NEAR(schedule_sparsity(s, 50), 0.7, 1e-12);
}

TEST(Sparsity, ZerosSurviveSymmetricQuantization) {
  const Tensor p = prune_nm(random_uniform({64, 64}, 44), 2, 4, 1);
  for (int bits : {4, 8}) {
    const auto qp = QuantParams::per_tensor(1.0 / ((1 << (bits - 1)) - 1), 0, bits, true, true);
    const Tensor q = quantize(p, qp);
    for (std::int64_t i = 0; i < p.size(); ++i) {
      if (p.floats()[i] == 0.0f) ASSERT_EQ(q.ints()[i], 0);
    }
    EXPECT_TRUE(verify_nm(q, 2, 4, 1).ok);
  }
}

TEST(Sparsity, PruneGraphTouchesWeightsOnly) {
  const Graph g = fixture_cnn(45);
  const Graph p = prune_graph(g, {});
  for (const auto& n : p.nodes) {
    if (n.kind == OpKind::kConv2d || n.kind == OpKind::kLinear) {
      EXPECT_TRUE(verify_nm(p.param(n, "weight"), 2, 4, 1).ok) << n.id;
    }
    if (n.kind == OpKind::kBatchNorm) {
      EXPECT_EQ(p.param(n, "gamma"), g.param(*g.find_node(n.id), "gamma"));
    }
  }
}

}  // namespace
}  // namespace qlower
