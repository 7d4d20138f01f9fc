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
#include <optional>
#include <string>
#include <vector>

#include "qlower/fixed_point.hpp"
#include "qlower/graph.hpp"
#include "qlower/quant_params.hpp"

namespace qlower {

enum class LutKind { kExp, kGelu, kReciprocal, kInvSqrt };

std::string to_string(LutKind kind);
LutKind lut_kind_from_string(const std::string& name);

double lut_function(LutKind kind, double x);

/// Table-driven nonlinearity over the clipped domain [clip_lo, clip_hi].
/// Entry k holds fn(clip_lo + k * (clip_hi - clip_lo) / (entries - 1)),
/// either as a fixed-point code in `out_fp` or, when `out_qp` is set, as a
/// code on that quantization grid (requantization folded into the table).
struct LutTable {
  LutKind kind = LutKind::kExp;
  std::vector<std::int64_t> entries;
  QuantParams in_qp;
  FpSpec out_fp{4, 12};
  std::optional<QuantParams> out_qp;
  double clip_lo = 0.0;
  double clip_hi = 1.0;
  /// Input codes of clip_lo / clip_hi under in_qp.
  std::int64_t lo_code = 0;
  std::int64_t hi_code = 1;

  std::size_t size() const { return entries.size(); }
  bool operator==(const LutTable&) const = default;
};

/// Defaults: exp on [-8, 0], gelu on [-4, 4], 256 entries, frac 12. The exp
/// table's minimum entry is floored at 1 so softmax row sums never vanish.
LutTable lut_build(LutKind kind, double clip_lo, double clip_hi, int entries,
                   const QuantParams& in_qp, const FpSpec& out_fp,
                   std::optional<QuantParams> out_qp = std::nullopt);

/// Integer index of an input code: clamp-and-scale onto [0, entries).
std::size_t lut_index(const LutTable& t, std::int64_t code);

/// Nearest-entry evaluation at a real input, decoded to a real value. Used
/// for accuracy checks; the deploy path indexes by code.
double lut_eval(const LutTable& t, double x);

/// Reciprocal table over the normalized mantissa m in [1, 2].
LutTable reciprocal_lut(int entries = 256, const FpSpec& out_fp = {2, 14});

/// 1/v for an integer v >= 1 via mantissa lookup plus exponent shift:
/// returns (code, shift) with 1/v ~= code / 2^shift.
std::pair<std::int64_t, int> lut_reciprocal(const LutTable& recip, std::int64_t v);

/// Stores / loads a table on a node: entries under parameter `role`, the
/// code range and encodings as integer attributes "<role>.*".
void store_lut(Graph& g, Node& n, const std::string& role, const LutTable& t);
LutTable load_lut(const Graph& g, const Node& n, const std::string& role, LutKind kind);

}  // namespace qlower
