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

#include <cmath>
#include <cstdint>

namespace qlower {

// Round-half-away-from-zero is the single rounding rule used on every path.

inline std::int64_t round_half_away(double v) {
  return static_cast<std::int64_t>(std::round(v));
}

/// round_half_away(v / 2^shift) in pure integer arithmetic.
inline std::int64_t rshift_round(std::int64_t v, int shift) {
  if (shift <= 0) return v << (-shift);
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  if (v >= 0) return (v + half) >> shift;
  return -((-v + half) >> shift);
}

/// round_half_away(num / den) for den > 0, integer only.
inline std::int64_t div_round(std::int64_t num, std::int64_t den) {
  if (num >= 0) return (num + den / 2) / den;
  return -((-num + den / 2) / den);
}

inline std::int64_t clamp_i64(std::int64_t v, std::int64_t lo,
                              std::int64_t hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace qlower
