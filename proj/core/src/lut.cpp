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

#include "qlower/lut.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "qlower/error.hpp"
#include "qlower/kernels.hpp"
#include "qlower/quantizer.hpp"
#include "qlower/rounding.hpp"

namespace qlower {

std::string to_string(LutKind kind) {
  switch (kind) {
    case LutKind::kExp: return "exp";
    case LutKind::kGelu: return "gelu";
    case LutKind::kReciprocal: return "reciprocal";
    case LutKind::kInvSqrt: return "inv_sqrt";
  }
  return "unknown";
}

LutKind lut_kind_from_string(const std::string& name) {
  for (auto k : {LutKind::kExp, LutKind::kGelu, LutKind::kReciprocal, LutKind::kInvSqrt}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorKind::kParse, "unknown LUT kind '" + name + "'");
}

double lut_function(LutKind kind, double x) {
  switch (kind) {
    case LutKind::kExp: return std::exp(x);
    case LutKind::kGelu: return kernels::gelu_value(x);
    case LutKind::kReciprocal: return 1.0 / x;
    case LutKind::kInvSqrt: return 1.0 / std::sqrt(x);
  }
  return 0.0;
}

LutTable lut_build(LutKind kind, double clip_lo, double clip_hi, int entries,
                   const QuantParams& in_qp, const FpSpec& out_fp,
                   std::optional<QuantParams> out_qp) {
  require(entries >= 2 && std::has_single_bit(static_cast<unsigned>(entries)),
          ErrorKind::kInvalidArgument, "LUT entry count must be a power of two");
  require(clip_lo < clip_hi, ErrorKind::kInvalidArgument, "LUT clip range is empty");
  require_valid(in_qp);
  LutTable t;
  t.kind = kind;
  t.in_qp = in_qp;
  t.out_fp = out_fp;
  t.out_qp = out_qp;
  t.clip_lo = clip_lo;
  t.clip_hi = clip_hi;
  t.lo_code = round_half_away(clip_lo / in_qp.scale_at(0)) + in_qp.zero_point_at(0);
  t.hi_code = round_half_away(clip_hi / in_qp.scale_at(0)) + in_qp.zero_point_at(0);
  require(t.hi_code > t.lo_code, ErrorKind::kInvalidArgument,
          "LUT clip range covers less than one input code");
  const double step = (clip_hi - clip_lo) / (entries - 1);
  t.entries.resize(static_cast<std::size_t>(entries));
  for (int k = 0; k < entries; ++k) {
    const double v = lut_function(kind, clip_lo + k * step);
    std::int64_t code = 0;
    if (out_qp) {
      code = quantize_value(v, out_qp->scale_at(0), out_qp->zero_point_at(0), out_qp->qmin(),
                            out_qp->qmax());
    } else {
      code = encode_fixed(v, out_fp, to_string(kind) + " LUT entry " + std::to_string(k)).code;
    }
    if (kind == LutKind::kExp) code = std::max<std::int64_t>(code, 1);
    t.entries[static_cast<std::size_t>(k)] = code;
  }
  return t;
}

std::size_t lut_index(const LutTable& t, std::int64_t code) {
  const auto last = static_cast<std::int64_t>(t.entries.size()) - 1;
  const auto span = t.hi_code - t.lo_code;
  const auto c = clamp_i64(code, t.lo_code, t.hi_code) - t.lo_code;
  const auto idx = span == last ? c : div_round(c * last, span);
  return static_cast<std::size_t>(clamp_i64(idx, 0, last));
}

double lut_eval(const LutTable& t, double x) {
  const auto last = static_cast<double>(t.entries.size() - 1);
  const double pos = (std::clamp(x, t.clip_lo, t.clip_hi) - t.clip_lo) /
                     (t.clip_hi - t.clip_lo) * last;
  const auto k = static_cast<std::size_t>(round_half_away(pos));
  const auto code = t.entries[k];
  if (t.out_qp) {
    return static_cast<double>(code - t.out_qp->zero_point_at(0)) * t.out_qp->scale_at(0);
  }
  return std::ldexp(static_cast<double>(code), -t.out_fp.frac_bits);
}

LutTable reciprocal_lut(int entries, const FpSpec& out_fp) {
  // The input grid is the mantissa itself at (entries - 1) steps per unit.
  const auto in_qp = QuantParams::per_tensor(1.0 / (entries - 1), 0, 16, false, false);
  return lut_build(LutKind::kReciprocal, 1.0, 2.0, entries, in_qp, out_fp);
}

std::pair<std::int64_t, int> lut_reciprocal(const LutTable& recip, std::int64_t v) {
  require(v >= 1, ErrorKind::kInvalidArgument, "reciprocal of a non-positive value");
  const int p = static_cast<int>(std::bit_width(static_cast<std::uint64_t>(v))) - 1;
  const auto last = static_cast<std::int64_t>(recip.entries.size()) - 1;
  // Mantissa index round((v - 2^p) * last / 2^p).
  const auto k = rshift_round((v - (std::int64_t{1} << p)) * last, p);
  return {recip.entries[static_cast<std::size_t>(clamp_i64(k, 0, last))],
          recip.out_fp.frac_bits + p};
}

void store_lut(Graph& g, Node& n, const std::string& role, const LutTable& t) {
  const auto e = static_cast<std::int64_t>(t.entries.size());
  int bits = 2;
  for (auto v : t.entries) {
    while (v > (std::int64_t{1} << (bits - 1)) - 1 || v < -(std::int64_t{1} << (bits - 1))) ++bits;
  }
  n.params[role] = g.add_tensor(n.id + "." + role, Tensor::from_ints({e}, t.entries, bits, true));
  auto& a = n.attrs;
  a.set(role + ".lo_code", t.lo_code);
  a.set(role + ".hi_code", t.hi_code);
  a.set(role + ".in_zero", t.in_qp.zero_point_at(0));
  a.set(role + ".int_bits", std::int64_t{t.out_fp.int_bits});
  a.set(role + ".frac_bits", std::int64_t{t.out_fp.frac_bits});
  if (t.out_qp) {
    a.set(role + ".out_zero", t.out_qp->zero_point_at(0));
    a.set(role + ".out_bits", std::int64_t{t.out_qp->bits});
    a.set(role + ".out_signed", std::int64_t{t.out_qp->is_signed ? 1 : 0});
  }
}

LutTable load_lut(const Graph& g, const Node& n, const std::string& role, LutKind kind) {
  LutTable t;
  t.kind = kind;
  const auto& e = g.param(n, role);
  t.entries.assign(e.ints().begin(), e.ints().end());
  const auto& a = n.attrs;
  t.lo_code = a.get_int(role + ".lo_code");
  t.hi_code = a.get_int(role + ".hi_code");
  const auto zin = a.get_int(role + ".in_zero", 0);
  t.in_qp = QuantParams::per_tensor(1.0, zin, 16, true, zin == 0);
  t.out_fp = {static_cast<int>(a.get_int(role + ".int_bits")),
              static_cast<int>(a.get_int(role + ".frac_bits"))};
  if (a.has(role + ".out_zero")) {
    const auto z = a.get_int(role + ".out_zero");
    t.out_qp = QuantParams::per_tensor(1.0, z, static_cast<int>(a.get_int(role + ".out_bits")),
                                       a.get_int(role + ".out_signed") != 0, z == 0);
  }
  return t;
}

}  // namespace qlower
