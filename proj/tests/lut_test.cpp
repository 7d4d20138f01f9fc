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
#include "qlower/instrument.hpp"
#include "qlower/int_kernels.hpp"
#include "qlower/kernels.hpp"
#include "qlower/lut.hpp"
#include "qlower/observer.hpp"
#include "qlower/quantizer.hpp"

namespace qlower {
namespace {

const QuantParams kWide = QuantParams::per_tensor(1.0 / 1024, 0, 16, true, true);

TEST(Lut, EndpointEntries) {
  const auto e = lut_build(LutKind::kExp, -8.0, 0.0, 256, kWide, {4, 12});
  EXPECT_EQ(e.entries.back(), 4096);
  EXPECT_GE(*std::min_element(e.entries.begin(), e.entries.end()), 1);
  const auto g = lut_build(LutKind::kGelu, -4.0, -4.0 + 255.0 / 32, 256, kWide, {4, 12});
  EXPECT_EQ(g.entries[128], 0);
}

TEST(Lut, ExpTableErrorOnDenseSweep) {
  const auto e = lut_build(LutKind::kExp, -8.0, 0.0, 256, kWide, {4, 12});
  double worst = 0;
  for (int i = 0; i <= 100000; ++i) {
    const double x = -8.0 + 8.0 * i / 100000.0;
    worst = std::max(worst, std::fabs(lut_eval(e, x) - std::exp(x)));
  }
  EXPECT_LE(worst, std::ldexp(1.0, -6));
}

TEST(Lut, RejectsBadShape) {
  EXPECT_THROW(lut_build(LutKind::kExp, 0.0, -1.0, 256, kWide, {4, 12}), Error);
  EXPECT_THROW(lut_build(LutKind::kExp, -8.0, 0.0, 100, kWide, {4, 12}), Error);
}

TEST(Lut, ReciprocalTracksDivision) {
  const auto r = reciprocal_lut();
  for (std::int64_t v : {1, 2, 3, 7, 100, 4096, 12345, 1 << 20}) {
    const auto [code, shift] = lut_reciprocal(r, v);
    const double got = std::ldexp(static_cast<double>(code), -shift);
    EXPECT_NEAR(got * static_cast<double>(v), 1.0, 4e-3) << v;
  }
}

TEST(IntSoftmax, TablesAndRows) {
  const int entries = 256;
  const double s = 8.0 / 255.0;
  const auto exp_lut = lut_build(LutKind::kExp, -(entries - 1) * s, 0.0, entries,
                                 QuantParams::per_tensor(s, 0, 16, true, true), {2, 12});
  const auto recip = reciprocal_lut(entries, {2, 14});
  const int frac = 12;

  const Tensor equal = Tensor::from_ints({1, 4}, {5, 5, 5, 5}, 16, true);
  const auto pe = ikernels::softmax(equal, exp_lut, recip, frac);
  for (auto p : pe.ints()) {
    EXPECT_NEAR(static_cast<double>(p), 1024.0, 1.0);
  }

  const Tensor dom = Tensor::from_ints({1, 4}, {400, 0, 0, 0}, 16, true);
  EXPECT_GE(ikernels::softmax(dom, exp_lut, recip, frac).ints()[0], 0.98 * 4096);

  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::int64_t> c(-150, 150);
  double worst = 0;
  for (int r = 0; r < 500; ++r) {
    std::vector<std::int64_t> row(8);
    std::vector<float> fr(8);
    for (std::size_t i = 0; i < row.size(); ++i) {
      row[i] = c(rng);
      fr[i] = static_cast<float>(row[i] * s);
    }
    const auto p = ikernels::softmax(Tensor::from_ints({1, 8}, row, 16, true), exp_lut, recip, frac);
    const auto ref = kernels::softmax(Tensor::from_floats({1, 8}, fr));
    std::int64_t total = 0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      worst = std::max(worst, std::fabs(std::ldexp(p.ints()[i], -frac) - ref.floats()[i]));
      total += p.ints()[i];
    }
    EXPECT_NEAR(static_cast<double>(total), 4096.0, entries);
  }
  EXPECT_LE(worst, std::ldexp(1.0, -5));
}

struct GeluSetup {
  QuantParams in, out;
  ikernels::GeluParams p;
};

GeluSetup gelu_setup(double in_lo, double in_hi, int in_bits, double clip) {
  GeluSetup s;
  s.in = compute_qparams(in_lo, in_hi, in_bits, false, false).qp;
  s.out = compute_qparams(-0.17, in_hi, 8, false, false).qp;
  const double si = s.in.scale[0];
  const auto codes = s.in.qmax() - s.in.qmin() + 1;
  if (codes <= 256) {
    const double lo = static_cast<double>(s.in.qmin() - s.in.zero_point[0]) * si;
    s.p.lut = lut_build(LutKind::kGelu, lo, lo + 255 * si, 256, s.in, {4, 12}, s.out);
  } else {
    s.p.lut = lut_build(LutKind::kGelu, -clip, clip, 256, s.in, {4, 12}, s.out);
  }
  s.p.in_zero = s.in.zero_point[0];
  s.p.id_frac = 12;
  s.p.id_mult = std::llround(si / s.out.scale[0] * 4096);
  s.p.out_zero = s.out.zero_point[0];
  s.p.lo = s.out.qmin();
  s.p.hi = s.out.qmax();
  return s;
}

TEST(IntGelu, ZeroAndIdentityTail) {
  auto s = gelu_setup(-8.0, 8.0, 10, 4.0);
  const auto zin = s.in.zero_point[0];
  const auto x = Tensor::from_ints({2}, {zin, zin + static_cast<std::int64_t>(7.0 / s.in.scale[0])},
                                   10, false);
  const auto y = ikernels::gelu(x, s.p);
  EXPECT_EQ(y.ints()[0], s.out.zero_point[0]);
  const double xin = (x.ints()[1] - zin) * s.in.scale[0];
  const double want = xin / s.out.scale[0] + s.out.zero_point[0];
  EXPECT_LE(std::fabs(static_cast<double>(y.ints()[1]) - want), 1.0);
}

TEST(IntGelu, RandomWithinTwoLsb) {
  auto s = gelu_setup(-4.0, 4.0, 8, 4.0);
  std::vector<std::int64_t> codes;
  for (std::int64_t c = 0; c < 256; ++c) codes.push_back(c);
  const Tensor x = Tensor::from_ints({256}, codes, 8, false);
  const auto y = ikernels::gelu(x, s.p);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const double xin = (codes[i] - s.in.zero_point[0]) * s.in.scale[0];
    const double want = kernels::gelu_value(xin) / s.out.scale[0] + s.out.zero_point[0];
    ASSERT_LE(std::fabs(static_cast<double>(y.ints()[i]) - want), 2.0) << xin;
  }
}

TEST(IntLayerNorm, InvSqrtOfSixteen) {
  for (int frac : {8, 12}) {
    const auto r = ikernels::inv_sqrt_fixed(16LL << frac, frac, 14);
    EXPECT_NEAR(static_cast<double>(r), 0.25 * 16384, 1.0);
  }
  for (double v : {0.01, 0.3, 1.0, 2.0, 37.5, 1000.0}) {
    const auto c = static_cast<std::int64_t>(std::llround(v * 256));
    const auto r = ikernels::inv_sqrt_fixed(c, 8, 14);
    EXPECT_NEAR(r / 16384.0, 1.0 / std::sqrt(c / 256.0), 2e-3 / std::sqrt(c / 256.0)) << v;
  }
}

ikernels::LayerNormParams ln_params(std::int64_t f, double s_out, std::int64_t z_out) {
  ikernels::LayerNormParams p;
  p.fp = {4, 12};
  p.gamma.assign(static_cast<std::size_t>(f), 4096);
  p.beta.assign(static_cast<std::size_t>(f), 2048);
  p.out_frac = 12;
  p.out_mult = std::llround(4096 / s_out);
  p.out_zero = z_out;
  p.lo = 0;
  p.hi = 255;
  return p;
}

TEST(IntLayerNorm, ConstantRowGivesBeta) {
  const auto p = ln_params(8, 1.0 / 64, 100);
  const Tensor x = Tensor::from_ints({2, 8}, std::vector<std::int64_t>(16, 77), 8, false);
  const auto y = ikernels::layernorm_instant(x, p);
  for (auto v : y.ints()) EXPECT_EQ(v, 100 + 32);
}

TEST(IntLayerNorm, RandomRowsAgainstFloat) {
  const std::int64_t f = 16;
  const double s_in = 0.05, s_out = 4.0 / 255;
  const std::int64_t z_in = 128, z_out = 128;
  auto p = ln_params(f, s_out, z_out);
  p.in_zero = z_in;
  p.eps_code = std::max<std::int64_t>(1, std::llround(1e-5 / (s_in * s_in) * 256));
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::int64_t> c(40, 220);
  std::vector<std::int64_t> codes(static_cast<std::size_t>(8 * f));
  for (auto& v : codes) v = c(rng);
  const auto y = ikernels::layernorm_instant(Tensor::from_ints({8, f}, codes, 8, false), p);
  std::vector<float> xf(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) xf[i] = static_cast<float>((codes[i] - z_in) * s_in);
  Tensor gamma = Tensor::from_floats({f}, std::vector<float>(static_cast<std::size_t>(f), 1.0f));
  Tensor beta = Tensor::from_floats({f}, std::vector<float>(static_cast<std::size_t>(f), 0.5f));
  const auto ref = kernels::layernorm(Tensor::from_floats({8, f}, xf), &gamma, &beta, 1e-5);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const double want = std::clamp(ref.floats()[i] / s_out + z_out, 0.0, 255.0);
    ASSERT_LE(std::fabs(y.ints()[i] - want), 2.0) << i;
  }
}

TEST(IntKernels, ConvMulQuantHandExample) {
  const Tensor x = Tensor::from_ints({1, 1, 1, 1}, {3}, 8, true);
  const Tensor w = Tensor::from_ints({1, 1, 1, 1}, {2}, 8, true);
  const auto acc = ikernels::conv2d(x, w, 0, {});
  EXPECT_EQ(acc.ints()[0], 6);
  MulQuantParams mq;
  mq.multiplier = {16};
  mq.bias = {0};
  mq.fp = {12, 4};
  mq.out_qp = QuantParams::per_tensor(1.0, 0, 8, true, true);
  mq.clamp_lo = -127;
  mq.clamp_hi = 127;
  EXPECT_EQ(ikernels::mulquant(acc, mq).ints()[0], 6);
}

TEST(IntKernels, NoFloatOpsCounted) {
  const auto before = instrument::float_op_count();
  const Tensor x = Tensor::from_ints({1, 2, 4, 4}, std::vector<std::int64_t>(32, 9), 8, false);
  const Tensor w = Tensor::from_ints({3, 2, 3, 3}, std::vector<std::int64_t>(54, -2), 8, true);
  const auto acc = ikernels::conv2d(x, w, 5, {1, 1, 1});
  ikernels::avgpool(ikernels::relu(acc, 0), 0, {2, 2, 0, false});
  EXPECT_EQ(instrument::float_op_count(), before);
}

TEST(IntKernels, PaddingReadsZeroPoint) {
  // With x == Zx everywhere the accumulator is zero, padding included.
  const Tensor x = Tensor::from_ints({1, 1, 3, 3}, std::vector<std::int64_t>(9, 7), 8, false);
  const Tensor w = Tensor::from_ints({1, 1, 3, 3}, std::vector<std::int64_t>(9, 1), 8, true);
  const auto acc = ikernels::conv2d(x, w, 7, {1, 1, 1});
  for (auto v : acc.ints()) EXPECT_EQ(v, 0);
}

}  // namespace
}  // namespace qlower
