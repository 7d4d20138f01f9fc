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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qlower/graph.hpp"
#include "qlower/quant_params.hpp"

namespace qlower {

/// (integer bits, fraction bits) of a fixed-point word. The default is the
/// 16-bit word with 12 fractional and 4 integer bits.
struct FpSpec {
  int int_bits = 4;
  int frac_bits = 12;

  int total_bits() const { return int_bits + frac_bits; }
  bool operator==(const FpSpec&) const = default;
};

/// round_half_away(v * 2^frac). kFixedPointOverflow when the code does not
/// fit the signed (int + frac)-bit word; `what` names the value in the error.
FixedPointCode encode_fixed(double v, const FpSpec& spec, const std::string& what = "value");

/// Bias container width for MulQuant biases, aligned with the accumulator.
inline constexpr int kBiasBits = 32;

/// Fused rescaler of one layer:
///   out = clamp(round_half_away(((acc - Zin) * M[c] + b[c] * 2^p) / 2^(frac + p)) + Zout,
///               lo, hi)
/// where p is an exact power-of-two input scale (0 for conv/linear).
struct MulQuantParams {
  std::vector<std::int64_t> multiplier;  // codes, one or per channel
  std::vector<std::int64_t> bias;        // codes in a 32-bit container
  FpSpec fp;
  QuantParams out_qp;
  std::int64_t clamp_lo = 0;
  std::int64_t clamp_hi = 0;
  bool relu_folded = false;
  std::int64_t input_zero_point = 0;
  int channel_axis = 1;
  int post_shift = 0;

  std::size_t channels() const { return multiplier.size(); }
  bool operator==(const MulQuantParams&) const = default;
};

/// Real multiplier M[o] = gamma*[o] * S_w[o] * S_x / S_next, bias
/// beta*[o] / S_next, both encoded with `fp`. `gamma_star` may be empty
/// (treated as 1). Either of s_w / beta_star may hold one entry that is
/// broadcast. kFixedPointOverflow names the channel.
MulQuantParams build_mulquant(const std::vector<double>& s_w, double s_x, double s_next,
                              const std::vector<double>& gamma_star,
                              const std::vector<double>& beta_star, const FpSpec& fp,
                              const QuantParams& out_qp, bool relu_next);

/// Single-site requantization of one accumulator value for `channel`.
std::int64_t requantize(std::int64_t acc, const MulQuantParams& mq, std::size_t channel);

/// MulQuant node <-> params.
MulQuantParams mulquant_from_node(const Graph& g, const Node& n);
Node mulquant_node(Graph& g, const std::string& id, const std::string& input,
                   const std::string& output, const MulQuantParams& mq);

/// Stores / loads a rescaler on any node under attribute and parameter
/// names prefixed with `prefix` (used by composite integer ops).
void store_mulquant(Graph& g, Node& n, const std::string& prefix, const MulQuantParams& mq);
MulQuantParams load_mulquant(const Graph& g, const Node& n, const std::string& prefix);

/// IEEE-754 bit pattern of a boundary scale, so integer-only attribute sets
/// can still describe the quantize/dequantize stubs exactly.
std::int64_t double_bits(double v);
double bits_double(std::int64_t bits);

}  // namespace qlower
