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

#include "qlower/quant_params.hpp"
#include "qlower/tensor.hpp"

namespace qlower {

/// out = clamp(round_half_away(x / S + Z), qmin, qmax), per element and per
/// channel along qp.axis when the params are per-channel. kInvalidArgument
/// on invalid params or a channel-count mismatch.
Tensor quantize(const Tensor& x, const QuantParams& qp);

/// out = (xq - Z) * S.
Tensor dequantize(const Tensor& xq, const QuantParams& qp);

/// dequantize(quantize(x)): the training-path view of the same grid.
Tensor fake_quant(const Tensor& x, const QuantParams& qp);

std::int64_t quantize_value(double x, double scale, std::int64_t zero_point,
                            std::int64_t qmin, std::int64_t qmax);
float dequantize_value(std::int64_t q, double scale, std::int64_t zero_point);

}  // namespace qlower
