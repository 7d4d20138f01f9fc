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

#include <cmath>
#include <random>

#include "qlower/error.hpp"
#include "qlower/observer.hpp"
#include "qlower/quantizer.hpp"

namespace qlower {
namespace {

std::int64_t oracle_q(double x, double s, std::int64_t z, std::int64_t lo, std::int64_t hi) {
  const double v = x / s + static_cast<double>(z);
  double r = std::floor(std::fabs(v) + 0.5);
  r = v < 0 ? -r : r;
  return std::min<std::int64_t>(hi, std::max<std::int64_t>(lo, static_cast<std::int64_t>(r)));
}

TEST(Quantize, ScalarExamples) {
  EXPECT_EQ(quantize_value(0.34, 0.1, 0, -127, 127), 3);
  const auto qp = QuantParams::per_tensor(0.1, 0, 8, true, true);
  const Tensor q = quantize(Tensor::from_floats({1}, {20.0f}), qp);
  EXPECT_EQ(q.ints()[0], 127);
  EXPECT_FLOAT_EQ(dequantize_value(3, 0.1, 0), 0.3f);
  EXPECT_EQ(dequantize_value(7, 0.1, 7), 0.0f);
}

TEST(Quantize, TiesRoundAwayFromZero) {
  EXPECT_EQ(quantize_value(0.5, 1.0, 0, -127, 127), 1);
  EXPECT_EQ(quantize_value(-0.5, 1.0, 0, -127, 127), -1);
  EXPECT_EQ(quantize_value(2.5, 1.0, 0, -127, 127), 3);
}

TEST(Quantize, FakeQuantOnGridIsFixedPoint) {
  const auto qp = QuantParams::per_tensor(0.25, 0, 8, true, true);
  const Tensor x = Tensor::from_floats({3}, {0.5f, -1.25f, 0.3f});
  const Tensor y = fake_quant(x, qp);
  EXPECT_EQ(y.floats()[0], 0.5f);
  EXPECT_EQ(y.floats()[1], -1.25f);
  EXPECT_FLOAT_EQ(y.floats()[2], 0.25f);
}

class QuantizeRandom : public ::testing::TestWithParam<int> {};

TEST_P(QuantizeRandom, MatchesScalarLoopAndRoundTripBound) {
  const int bits = GetParam();
  std::mt19937_64 rng(100 + bits);
  std::uniform_real_distribution<double> sd(0.01, 0.5), xd(-3.0, 3.0);
  for (int rep = 0; rep < 50; ++rep) {
    const bool sym = rep % 2 == 0;
    const double s = sd(rng);
    const std::int64_t z = sym ? 0 : (1 << (bits - 1)) / 2;
    const auto qp = QuantParams::per_tensor(s, z, bits, true, sym);
    std::vector<float> v(64);
    for (auto& e : v) e = static_cast<float>(xd(rng));
    const Tensor x = Tensor::from_floats({64}, v);
    const Tensor q = quantize(x, qp);
    const Tensor d = dequantize(q, qp);
    const Tensor fq = fake_quant(x, qp);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto want = oracle_q(static_cast<float>(v[i]), s, z, qp.qmin(), qp.qmax());
      ASSERT_EQ(q.ints()[i], want) << "x=" << v[i];
      ASSERT_EQ(d.floats()[i], fq.floats()[i]);
      const double lo = (qp.qmin() - z) * s, hi = (qp.qmax() - z) * s;
      if (v[i] >= lo && v[i] <= hi) {
        ASSERT_LE(std::fabs(d.floats()[i] - v[i]), s / 2 + 1e-6);
      }
    }
    EXPECT_EQ(q.first_out_of_range(), -1);
  }
}

INSTANTIATE_TEST_SUITE_P(Bits, QuantizeRandom, ::testing::Values(2, 4, 8));

TEST(Quantize, PerChannelUsesAxis) {
  QuantParams qp;
  qp.scale = {1.0, 0.5};
  qp.zero_point = {0, 0};
  qp.axis = 0;
  const Tensor x = Tensor::from_floats({2, 2}, {1.0f, 2.0f, 1.0f, 2.0f});
  const Tensor q = quantize(x, qp);
  EXPECT_EQ(std::vector<std::int64_t>(q.ints().begin(), q.ints().end()),
            (std::vector<std::int64_t>{1, 2, 2, 4}));
}

TEST(Quantize, ChannelCountMismatchThrows) {
  QuantParams qp;
  qp.scale = {1.0, 1.0, 1.0};
  qp.zero_point = {0};
  EXPECT_THROW(quantize(Tensor::from_floats({2, 2}, {0, 0, 0, 0}), qp), Error);
}

TEST(Observer, MinMaxAndMerge) {
  auto a = Observer::minmax();
  a.observe(Tensor::from_floats({2}, {-2.0f, 6.0f}));
  EXPECT_EQ(a.running_min()[0], -2.0);
  EXPECT_EQ(a.running_max()[0], 6.0);

  auto b = Observer::minmax();
  b.observe(Tensor::from_floats({3}, {-5.0f, 1.0f, 3.0f}));
  auto ab = Observer::minmax();
  ab.observe(Tensor::from_floats({2}, {-2.0f, 6.0f}));
  ab.observe(Tensor::from_floats({3}, {-5.0f, 1.0f, 3.0f}));
  const auto m = merge(a, b);
  EXPECT_EQ(m.running_min(), ab.running_min());
  EXPECT_EQ(m.running_max(), ab.running_max());
}

TEST(Observer, NonFiniteNamesEdge) {
  auto o = Observer::minmax();
  try {
    o.observe(Tensor::from_floats({2}, {1.0f, NAN}), "conv0.out");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFinite);
    EXPECT_NE(std::string(e.what()).find("conv0.out"), std::string::npos);
  }
}

TEST(Observer, PercentileClipsHeavyTail) {
  std::mt19937_64 rng(3);
  std::student_t_distribution<double> t(1.5);
  std::vector<float> v(10000);
  for (auto& e : v) e = static_cast<float>(t(rng));
  auto o = Observer::percentile(99.9);
  o.observe(Tensor::from_floats({10000}, v));
  std::vector<float> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  const auto [lo, hi] = o.clip_range();
  EXPECT_LT(hi, sorted.back());
  EXPECT_GT(lo, sorted.front());
  const double q999 = sorted[static_cast<std::size_t>(0.999 * (v.size() - 1))];
  EXPECT_NEAR(hi, q999, 0.05 * std::fabs(q999) + 2 * o.histogram_range() / Observer::kBins);
}

TEST(ComputeQParams, AffineFormulas) {
  auto r = compute_qparams(-2.0, 6.0, 8, false, false);
  EXPECT_DOUBLE_EQ(r.qp.scale[0], 8.0 / 255.0);
  EXPECT_EQ(r.qp.zero_point[0], 64);
  r = compute_qparams(-1.0, 1.0, 8, true, true);
  EXPECT_DOUBLE_EQ(r.qp.scale[0], 1.0 / 127.0);
  EXPECT_EQ(r.qp.zero_point[0], 0);
  EXPECT_FALSE(r.degenerate);
}

TEST(ComputeQParams, ConstantObservationIsDegenerate) {
  auto o = Observer::minmax();
  o.observe(Tensor::from_floats({4}, {0, 0, 0, 0}));
  const auto r = compute_qparams(o, 8, true, true);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.qp.scale[0], 1.0);
}

double sq_err(const Tensor& x, const QuantParams& qp) {
  const Tensor y = fake_quant(x, qp);
  double e = 0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double d = x.floats()[i] - y.floats()[i];
    e += d * d;
  }
  return e;
}

TEST(ComputeQParamsMse, UniformPicksNearFullRange) {
  const Tensor x = [] {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> v(4096);
    for (auto& e : v) e = u(rng);
    v[0] = 1.0f;
    return Tensor::from_floats({4096}, v);
  }();
  const auto r = compute_qparams_mse(x, 8);
  const double clip = r.qp.scale[0] * 127.0;
  EXPECT_NEAR(clip, 1.0, 0.05);

  double best = 1e300, best_clip = 0;
  for (double c : mse_clip_ratios()) {
    const double e = sq_err(x, QuantParams::per_tensor(c / 127.0, 0, 8, true, true));
    if (e < best) best = e, best_clip = c;
  }
  EXPECT_NEAR(clip, best_clip, 1e-9);
}

TEST(ComputeQParamsMse, GaussianBeatsMinMaxAt4Bits) {
  std::mt19937_64 rng(6);
  std::normal_distribution<float> nd;
  std::vector<float> v(4096);
  for (auto& e : v) e = nd(rng);
  const Tensor x = Tensor::from_floats({4096}, v);
  const auto mse = compute_qparams_mse(x, 4);
  auto o = Observer::minmax();
  o.observe(x);
  const auto mm = compute_qparams(o, 4, true, true);
  EXPECT_LE(sq_err(x, mse.qp), sq_err(x, mm.qp));
}

TEST(ComputeQParamsMse, RepeatedValueIsDegenerate) {
  const Tensor x = Tensor::from_floats({64}, std::vector<float>(64, 0.0f));
  EXPECT_TRUE(compute_qparams_mse(x, 8).degenerate);
}

}  // namespace
}  // namespace qlower
