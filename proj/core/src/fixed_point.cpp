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

#include "qlower/fixed_point.hpp"

#include <bit>
#include <cmath>

#include "qlower/error.hpp"
#include "qlower/rounding.hpp"

namespace qlower {

FixedPointCode encode_fixed(double v, const FpSpec& spec, const std::string& what) {
  require(spec.int_bits >= 1 && spec.frac_bits >= 0 && spec.frac_bits <= 24 &&
              spec.total_bits() <= 62,
          ErrorKind::kInvalidArgument, "fixed-point spec out of range");
  require(std::isfinite(v), ErrorKind::kNonFinite, what + " is not finite");
  const double scaled = std::ldexp(v, spec.frac_bits);
  FixedPointCode c{0, spec.int_bits, spec.frac_bits};
  const double limit = std::ldexp(1.0, spec.total_bits() - 1);
  if (std::fabs(scaled) >= limit) {
    fail(ErrorKind::kFixedPointOverflow,
         what + " = " + std::to_string(v) + " overflows fixed point (" +
             std::to_string(spec.int_bits) + ", " + std::to_string(spec.frac_bits) + ")");
  }
  c.code = round_half_away(scaled);
  if (!c.fits()) {
    fail(ErrorKind::kFixedPointOverflow,
         what + " = " + std::to_string(v) + " overflows fixed point (" +
             std::to_string(spec.int_bits) + ", " + std::to_string(spec.frac_bits) + ")");
  }
  return c;
}

MulQuantParams build_mulquant(const std::vector<double>& s_w, double s_x, double s_next,
                              const std::vector<double>& gamma_star,
                              const std::vector<double>& beta_star, const FpSpec& fp,
                              const QuantParams& out_qp, bool relu_next) {
  require(!s_w.empty() && s_x > 0 && s_next > 0, ErrorKind::kInvalidArgument,
          "mulquant scales must be positive");
  for (double s : s_w) {
    require(s > 0, ErrorKind::kInvalidArgument, "mulquant scales must be positive");
  }
  std::size_t c = std::max({s_w.size(), gamma_star.size(), beta_star.size()});
  auto pick = [&](const std::vector<double>& v, std::size_t i, double fallback) {
    if (v.empty()) return fallback;
    require(v.size() == 1 || v.size() == c, ErrorKind::kShapeMismatch,
            "mulquant channel vectors differ in length");
    return v.size() == 1 ? v[0] : v[i];
  };
  // A scalar multiplier suffices when every channel shares it.
  const bool scalar_mult = s_w.size() == 1 && gamma_star.size() <= 1;
  MulQuantParams mq;
  mq.fp = fp;
  mq.out_qp = out_qp;
  const FpSpec bias_fp{kBiasBits - fp.frac_bits, fp.frac_bits};
  for (std::size_t i = 0; i < c; ++i) {
    if (!scalar_mult || i == 0) {
      const double m = pick(gamma_star, i, 1.0) * pick(s_w, i, 1.0) * s_x / s_next;
      mq.multiplier.push_back(
          encode_fixed(m, fp, "multiplier of channel " + std::to_string(i)).code);
    }
    const double b = pick(beta_star, i, 0.0) / s_next;
    mq.bias.push_back(encode_fixed(b, bias_fp, "bias of channel " + std::to_string(i)).code);
  }
  if (mq.bias.empty()) mq.bias.push_back(0);
  mq.clamp_lo = out_qp.qmin();
  mq.clamp_hi = out_qp.qmax();
  mq.relu_folded = relu_next;
  if (relu_next) mq.clamp_lo = std::max(mq.clamp_lo, out_qp.zero_point_at(0));
  return mq;
}

std::int64_t requantize(std::int64_t acc, const MulQuantParams& mq, std::size_t channel) {
  const auto m = mq.multiplier.size() == 1 ? mq.multiplier[0] : mq.multiplier[channel];
  const auto b = mq.bias.size() == 1 ? mq.bias[0] : mq.bias[channel];
  std::int64_t centered = 0;
  std::int64_t prod = 0;
  std::int64_t sum = 0;
  const std::int64_t b_aligned = b * (std::int64_t{1} << mq.post_shift);
  if (__builtin_sub_overflow(acc, mq.input_zero_point, &centered) ||
      __builtin_mul_overflow(centered, m, &prod) ||
      __builtin_add_overflow(prod, b_aligned, &sum)) {
    fail(ErrorKind::kAccumulatorOverflow,
         "requantization overflows 64 bits on channel " + std::to_string(channel));
  }
  const auto y = rshift_round(sum, mq.fp.frac_bits + mq.post_shift) + mq.out_qp.zero_point_at(0);
  return clamp_i64(y, mq.clamp_lo, mq.clamp_hi);
}

MulQuantParams load_mulquant(const Graph& g, const Node& n, const std::string& prefix) {
  MulQuantParams mq;
  const auto& m = g.param(n, prefix + "multiplier");
  const auto& b = g.param(n, prefix + "bias");
  mq.multiplier.assign(m.ints().begin(), m.ints().end());
  mq.bias.assign(b.ints().begin(), b.ints().end());
  const auto& a = n.attrs;
  mq.fp = {static_cast<int>(a.get_int(prefix + "int_bits")),
           static_cast<int>(a.get_int(prefix + "frac_bits"))};
  const auto zp = a.get_int(prefix + "out_zero_point");
  mq.out_qp = QuantParams::per_tensor(1.0, zp, static_cast<int>(a.get_int(prefix + "out_bits")),
                                      a.get_int(prefix + "out_signed") != 0, zp == 0);
  mq.clamp_lo = a.get_int(prefix + "clamp_lo");
  mq.clamp_hi = a.get_int(prefix + "clamp_hi");
  mq.relu_folded = a.get_int(prefix + "relu_folded", 0) != 0;
  mq.input_zero_point = a.get_int(prefix + "input_zero_point", 0);
  mq.channel_axis = static_cast<int>(a.get_int(prefix + "channel_axis", 1));
  mq.post_shift = static_cast<int>(a.get_int(prefix + "post_shift", 0));
  return mq;
}

void store_mulquant(Graph& g, Node& n, const std::string& prefix, const MulQuantParams& mq) {
  const auto c = static_cast<std::int64_t>(mq.multiplier.size());
  n.params[prefix + "multiplier"] =
      g.add_tensor(n.id + "." + prefix + "multiplier",
                   Tensor::from_ints({c}, mq.multiplier, mq.fp.total_bits(), true));
  n.params[prefix + "bias"] = g.add_tensor(
      n.id + "." + prefix + "bias",
      Tensor::from_ints({static_cast<std::int64_t>(mq.bias.size())}, mq.bias, kBiasBits, true));
  auto& a = n.attrs;
  a.set(prefix + "int_bits", std::int64_t{mq.fp.int_bits});
  a.set(prefix + "frac_bits", std::int64_t{mq.fp.frac_bits});
  a.set(prefix + "out_zero_point", mq.out_qp.zero_point_at(0));
  a.set(prefix + "out_bits", std::int64_t{mq.out_qp.bits});
  a.set(prefix + "out_signed", std::int64_t{mq.out_qp.is_signed ? 1 : 0});
  a.set(prefix + "clamp_lo", mq.clamp_lo);
  a.set(prefix + "clamp_hi", mq.clamp_hi);
  a.set(prefix + "relu_folded", std::int64_t{mq.relu_folded ? 1 : 0});
  a.set(prefix + "input_zero_point", mq.input_zero_point);
  a.set(prefix + "channel_axis", std::int64_t{mq.channel_axis});
  if (mq.post_shift != 0) a.set(prefix + "post_shift", std::int64_t{mq.post_shift});
}

MulQuantParams mulquant_from_node(const Graph& g, const Node& n) {
  require(n.kind == OpKind::kMulQuant, ErrorKind::kInvalidGraph,
          "node '" + n.id + "' is not a mulquant");
  return load_mulquant(g, n, "");
}

Node mulquant_node(Graph& g, const std::string& id, const std::string& input,
                   const std::string& output, const MulQuantParams& mq) {
  Node n;
  n.id = id;
  n.kind = OpKind::kMulQuant;
  n.inputs = {input};
  n.outputs = {output};
  store_mulquant(g, n, "", mq);
  return n;
}

std::int64_t double_bits(double v) { return std::bit_cast<std::int64_t>(v); }
double bits_double(std::int64_t bits) { return std::bit_cast<double>(bits); }

}  // namespace qlower
