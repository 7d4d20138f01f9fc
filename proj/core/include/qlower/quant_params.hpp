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

namespace qlower {

/// Scale / zero point / bitwidth of one quantized tensor or edge.
///
/// Per-tensor parameters have a single scale entry; per-channel parameters
/// carry one entry per slice along `axis`. The integer range is:
///   signed + symmetric    : [-(2^(n-1) - 1), 2^(n-1) - 1]
///   signed + asymmetric   : [-2^(n-1), 2^(n-1) - 1]
///   unsigned              : [0, 2^n - 1]
struct QuantParams {
  std::vector<double> scale{1.0};
  std::vector<std::int64_t> zero_point{0};
  int bits = 8;
  bool is_signed = true;
  bool symmetric = true;
  int axis = 0;

  static QuantParams per_tensor(double scale, std::int64_t zero_point,
                                int bits, bool is_signed, bool symmetric);

  bool per_channel() const { return scale.size() > 1; }
  std::size_t channels() const { return scale.size(); }
  double scale_at(std::size_t c) const {
    return scale.size() == 1 ? scale[0] : scale[c];
  }
  std::int64_t zero_point_at(std::size_t c) const {
    return zero_point.size() == 1 ? zero_point[0] : zero_point[c];
  }
  std::int64_t qmin() const;
  std::int64_t qmax() const;

  bool operator==(const QuantParams&) const = default;
};

/// Every invariant violation of `qp` (empty when valid).
std::vector<std::string> check_quant_params(const QuantParams& qp);

/// Throws kInvalidArgument on the first violation.
void require_valid(const QuantParams& qp);

/// Integer encoding of a real value with `frac_bits` fractional bits inside
/// an (int_bits + frac_bits)-bit two's-complement word.
struct FixedPointCode {
  std::int64_t code = 0;
  int int_bits = 16;
  int frac_bits = 0;

  double value() const;
  int total_bits() const { return int_bits + frac_bits; }
  bool fits() const;

  bool operator==(const FixedPointCode&) const = default;
};

}  // namespace qlower
