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
#include "qlower/fixed_point.hpp"
#include "qlower/fusion.hpp"
#include "qlower/kernels.hpp"
#include "qlower/rounding.hpp"

namespace qlower {
namespace {

TEST(Rounding, ShiftMatchesRealDivision) {
  EXPECT_EQ(rshift_round(3000, 8), 12);
  EXPECT_EQ(rshift_round(-3000, 8), -12);
  EXPECT_EQ(rshift_round(128, 8), 1);
  EXPECT_EQ(rshift_round(-128, 8), -1);
  EXPECT_EQ(rshift_round(127, 8), 0);
  EXPECT_EQ(div_round(7, 2), 4);
  EXPECT_EQ(div_round(-7, 2), -4);
}

TEST(EncodeFixed, Examples) {
  EXPECT_EQ(encode_fixed(0.05, {8, 8}).code, 13);
  EXPECT_EQ(encode_fixed(1.0, {12, 4}).code, 16);
  EXPECT_EQ(encode_fixed(1.0, {4, 12}).code, 4096);
  EXPECT_EQ(encode_fixed(-0.5, {4, 12}).code, -2048);
}

TEST(EncodeFixed, OverflowIsAnError) {
  try {
    encode_fixed(8.0, {4, 12}, "conv1 channel 3");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFixedPointOverflow);
    EXPECT_NE(std::string(e.what()).find("conv1 channel 3"), std::string::npos);
  }
  EXPECT_NO_THROW(encode_fixed(7.999, {4, 12}));
}

TEST(EncodeFixed, RandomErrorWithinHalfCode) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-7.9, 7.9);
  for (int frac : {4, 8, 12}) {
    const FpSpec fp{4, frac};
    for (int i = 0; i < 2000; ++i) {
      const double m = u(rng);
      const auto c = encode_fixed(m, fp);
      ASSERT_LE(std::fabs(m - c.value()), std::ldexp(1.0, -frac - 1) + 1e-15);
    }
  }
}

MulQuantParams plain_mq(std::int64_t m, int frac, std::int64_t lo, std::int64_t hi) {
  MulQuantParams mq;
  mq.multiplier = {m};
  mq.bias = {0};
  mq.fp = {16, frac};
  mq.out_qp = QuantParams::per_tensor(1.0, 0, 8, true, true);
  mq.clamp_lo = lo;
  mq.clamp_hi = hi;
  return mq;
}

TEST(Requantize, Examples) {
  const auto mq = plain_mq(3, 8, -127, 127);
  EXPECT_EQ(requantize(1000, mq, 0), 12);
  EXPECT_EQ(requantize(0, mq, 0), 0);
  for (std::int64_t a : {1, 57, 85, 1000, 12345, 99999}) {
    EXPECT_EQ(requantize(-a, mq, 0), -requantize(a, mq, 0)) << a;
  }
  EXPECT_EQ(requantize(1 << 20, mq, 0), 127);
}

TEST(Requantize, ZeroPointAndReluClamp) {
  auto mq = plain_mq(256, 8, 0, 255);
  mq.out_qp = QuantParams::per_tensor(1.0, 10, 8, false, false);
  mq.relu_folded = true;
  mq.clamp_lo = 10;
  EXPECT_EQ(requantize(0, mq, 0), 10);
  EXPECT_EQ(requantize(-5, mq, 0), 10);
  EXPECT_EQ(requantize(5, mq, 0), 15);
}

TEST(Requantize, RandomAgainstRealArithmetic) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::int64_t> acc(-1 << 20, 1 << 20), mc(1, 1 << 14),
      bc(-1 << 16, 1 << 16);
  for (int i = 0; i < 10000; ++i) {
    auto mq = plain_mq(mc(rng), 12, -(1 << 30), 1 << 30);
    mq.fp = {20, 12};
    mq.bias = {bc(rng)};
    const auto a = acc(rng);
    const double real = (static_cast<double>(a) * mq.multiplier[0] + mq.bias[0]) / 4096.0;
    ASSERT_LE(std::fabs(static_cast<double>(requantize(a, mq, 0)) - real), 1.0);
  }
}

TEST(BuildMulQuant, EncodesMultiplierAndBias) {
  const auto out = QuantParams::per_tensor(0.5, 0, 8, true, true);
  const auto mq = build_mulquant({0.1, 0.2}, 0.25, 0.5, {2.0, 1.0}, {1.0, -0.5}, {4, 12}, out,
                                 false);
  ASSERT_EQ(mq.channels(), 2u);
  EXPECT_EQ(mq.multiplier[0], encode_fixed(2.0 * 0.1 * 0.25 / 0.5, {4, 12}).code);
  EXPECT_EQ(mq.multiplier[1], encode_fixed(1.0 * 0.2 * 0.25 / 0.5, {4, 12}).code);
  EXPECT_EQ(mq.bias[0], 2 * 4096);
  EXPECT_EQ(mq.bias[1], -4096);
}

TEST(BuildMulQuant, OverflowNamesChannel) {
  const auto out = QuantParams::per_tensor(0.001, 0, 8, true, true);
  try {
    build_mulquant({0.1, 1.0}, 1.0, 0.001, {}, {0.0}, {4, 12}, out, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFixedPointOverflow);
    EXPECT_NE(std::string(e.what()).find("0"), std::string::npos);
  }
}

TEST(BuildMulQuant, ReluRaisesLowerClampToZeroPoint) {
  const auto out = QuantParams::per_tensor(0.1, 20, 8, false, false);
  const auto mq = build_mulquant({0.1}, 0.1, 0.1, {}, {0.0}, {4, 12}, out, true);
  EXPECT_EQ(mq.clamp_lo, 20);
  EXPECT_EQ(mq.clamp_hi, 255);
}

NormParams norm(std::vector<double> g, std::vector<double> b, std::vector<double> m,
                std::vector<double> v, double eps) {
  NormParams np;
  np.gamma = std::move(g);
  np.beta = std::move(b);
  np.mean = std::move(m);
  np.var = std::move(v);
  np.eps = eps;
  return np;
}

TEST(BnFold, HandExamples) {
  const auto np = norm({2.0}, {0.5}, {1.0}, {3.0}, 1.0);
  const auto pf = bn_prefuse(Tensor::from_floats({1, 1, 1, 1}, {1.0f}), np);
  EXPECT_FLOAT_EQ(pf.w.floats()[0], 1.0f);
  EXPECT_DOUBLE_EQ(pf.beta_star[0], -0.5);
  const auto cw = bn_channelwise(np);
  EXPECT_DOUBLE_EQ(cw.gamma_star[0], 1.0);
  EXPECT_DOUBLE_EQ(cw.beta_star[0], -0.5);

  const auto id = norm({1.0}, {0.0}, {0.0}, {1.0}, 0.0);
  const Tensor w = Tensor::from_floats({1, 1, 1, 2}, {0.3f, -0.7f});
  const auto pi = bn_prefuse(w, id);
  EXPECT_EQ(pi.w, w);
  EXPECT_EQ(pi.beta_star[0], 0.0);
  EXPECT_EQ(bn_channelwise(id).gamma_star[0], 1.0);
}

TEST(BnFold, ChannelwiseMatchesDirectNormalization) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.1, 2.0), n(-1.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    const auto np = norm({u(rng)}, {n(rng)}, {n(rng)}, {u(rng)}, 1e-5);
    const auto cw = bn_channelwise(np);
    for (int k = 0; k < 10; ++k) {
      const double y = 3.0 * n(rng);
      const double want =
          np.gamma[0] * (y - np.mean[0]) / std::sqrt(np.var[0] + np.eps) + np.beta[0];
      ASSERT_NEAR(cw.gamma_star[0] * y + cw.beta_star[0], want, 1e-6 * std::max(1.0, std::fabs(want)));
    }
  }
}

}  // namespace
}  // namespace qlower
