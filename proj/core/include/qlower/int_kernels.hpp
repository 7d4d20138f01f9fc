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
#include <functional>
#include <string>

#include "qlower/fixed_point.hpp"
#include "qlower/kernels.hpp"
#include "qlower/lut.hpp"
#include "qlower/tensor.hpp"

namespace qlower::ikernels {

// Integer-only kernels of the deploy path. Inputs and outputs are integer
// codes; accumulators are 64-bit with overflow checks. None of these
// touch floating point.

/// acc = sum W_q * (x_q - Zx); padding taps read Zx (real zero).
Tensor conv2d(const Tensor& x, const Tensor& w, std::int64_t x_zero,
              const kernels::ConvSpec& spec);
/// Last axis; a rank-4 input is flattened to [N, C*H*W].
Tensor linear(const Tensor& x, const Tensor& w, std::int64_t x_zero);

/// Requantizes an accumulator tensor channel-wise along mq.channel_axis.
Tensor mulquant(const Tensor& acc, const MulQuantParams& mq);

/// Output codes on the grid (bits, signed) with probabilities scaled by
/// 2^out_frac. Per row along the last axis: subtract the row max, exp by
/// LUT, integer sum, multiply by the LUT reciprocal of the sum.
Tensor softmax(const Tensor& logits, const LutTable& exp_lut, const LutTable& recip_lut,
               int out_frac);

struct GeluParams {
  LutTable lut;  // entries are output codes
  std::int64_t in_zero = 0;
  /// Identity requantization above the clip: S_in / S_out.
  std::int64_t id_mult = 0;
  int id_frac = 12;
  std::int64_t out_zero = 0;
  std::int64_t lo = 0;
  std::int64_t hi = 255;
};

Tensor gelu(const Tensor& x, const GeluParams& p);

/// Fixed-point 1/sqrt(v) for v given with `in_frac` fraction bits; result
/// has `out_frac` fraction bits. Bit-scan seed with a linear mantissa
/// correction, then two Newton steps.
std::int64_t inv_sqrt_fixed(std::int64_t v, int in_frac, int out_frac);

struct LayerNormParams {
  std::vector<std::int64_t> gamma;  // gamma codes, FpSpec fp
  std::vector<std::int64_t> beta;   // beta codes, FpSpec fp
  FpSpec fp;
  std::int64_t in_zero = 0;
  /// eps / S_in^2 at var_frac, floored at 1.
  std::int64_t eps_code = 1;
  /// 1 / S_out at out_frac, 32-bit container.
  std::int64_t out_mult = 0;
  int out_frac = 12;
  std::int64_t out_zero = 0;
  std::int64_t lo = 0;
  std::int64_t hi = 255;
  int var_frac = 8;
  int isqrt_frac = 14;
};

/// Per-row integer mean (rounded), sum of squared deviations with 64-bit
/// accumulation, Newton inverse square root, fixed-point gamma / beta.
Tensor layernorm_instant(const Tensor& x, const LayerNormParams& p);

Tensor relu(const Tensor& x, std::int64_t zero);

struct AddParams {
  std::int64_t a_zero = 0;
  std::int64_t b_zero = 0;
  std::int64_t a_mult = 0;  // S_a / S_out
  std::int64_t b_mult = 0;  // S_b / S_out
  int frac = 12;
  std::int64_t out_zero = 0;
  std::int64_t lo = 0;
  std::int64_t hi = 255;
};

Tensor add(const Tensor& a, const Tensor& b, const AddParams& p);

Tensor maxpool(const Tensor& x, const kernels::PoolSpec& spec);
/// Rounded mean of (x - Z) over in-bounds taps, plus Z.
Tensor avgpool(const Tensor& x, std::int64_t zero, const kernels::PoolSpec& spec);

struct AttentionParams {
  const Tensor* wq = nullptr;
  const Tensor* wk = nullptr;
  const Tensor* wv = nullptr;
  const Tensor* wo = nullptr;
  std::int64_t heads = 1;
  std::int64_t x_zero = 0;
  MulQuantParams mq_q, mq_k, mq_v;
  /// Scores requantization includes 1/sqrt(d).
  MulQuantParams mq_scores;
  /// ctx requantization includes 2^-probs_frac.
  MulQuantParams mq_ctx;
  MulQuantParams mq_out;
  LutTable exp_lut;
  LutTable recip_lut;
  int probs_frac = 12;
  int probs_bits = 13;
};

using IntHook = std::function<void(const std::string&, const Tensor&)>;

Tensor attention(const Tensor& x, const AttentionParams& p, const IntHook& hook = {});

}  // namespace qlower::ikernels
