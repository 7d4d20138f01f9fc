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

#include "qlower/quantizer.hpp"

#include "qlower/error.hpp"
#include "qlower/instrument.hpp"
#include "qlower/rounding.hpp"

namespace qlower {

namespace instrument {

namespace {
thread_local std::uint64_t g_float_ops = 0;
}

std::uint64_t float_op_count() { return g_float_ops; }
void note_float_op(std::uint64_t n) { g_float_ops += n; }

}  // namespace instrument

namespace {

// Channel index of flat element i, or 0 for per-tensor params.
struct ChannelMap {
  std::int64_t stride = 1;
  std::int64_t extent = 1;
  bool per_channel = false;

  ChannelMap(const Shape& shape, const QuantParams& qp) {
    if (!qp.per_channel()) return;
    const int rank = static_cast<int>(shape.size());
    require(qp.axis >= 0 && qp.axis < rank, ErrorKind::kInvalidArgument,
            "per-channel axis " + std::to_string(qp.axis) +
                " out of range for shape " + shape_to_string(shape));
    extent = shape[static_cast<std::size_t>(qp.axis)];
    require(extent == static_cast<std::int64_t>(qp.channels()),
            ErrorKind::kInvalidArgument,
            "per-channel scale length " + std::to_string(qp.channels()) +
                " does not match channel extent " + std::to_string(extent));
    stride = strides_of(shape)[static_cast<std::size_t>(qp.axis)];
    per_channel = true;
  }

  std::size_t operator()(std::size_t i) const {
    if (!per_channel) return 0;
    return static_cast<std::size_t>((static_cast<std::int64_t>(i) / stride) % extent);
  }
};

}  // namespace

std::int64_t quantize_value(double x, double scale, std::int64_t zero_point,
                            std::int64_t qmin, std::int64_t qmax) {
  return clamp_i64(round_half_away(x / scale + static_cast<double>(zero_point)),
                   qmin, qmax);
}

float dequantize_value(std::int64_t q, double scale, std::int64_t zero_point) {
  return static_cast<float>(static_cast<double>(q - zero_point) * scale);
}

Tensor quantize(const Tensor& x, const QuantParams& qp) {
  require_valid(qp);
  require(x.is_float(), ErrorKind::kInvalidArgument, "quantize expects a float tensor");
  const ChannelMap ch(x.shape(), qp);
  Tensor out(x.shape(), DataType::int_type(qp.bits, qp.is_signed));
  auto src = x.floats();
  auto dst = out.ints();
  const auto lo = qp.qmin();
  const auto hi = qp.qmax();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto c = ch(i);
    dst[i] = quantize_value(src[i], qp.scale_at(c), qp.zero_point_at(c), lo, hi);
  }
  instrument::note_float_op(src.size());
  return out;
}

Tensor dequantize(const Tensor& xq, const QuantParams& qp) {
  require_valid(qp);
  require(!xq.is_float(), ErrorKind::kInvalidArgument,
          "dequantize expects an integer tensor");
  const ChannelMap ch(xq.shape(), qp);
  Tensor out(xq.shape(), DataType::float32());
  auto src = xq.ints();
  auto dst = out.floats();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto c = ch(i);
    dst[i] = dequantize_value(src[i], qp.scale_at(c), qp.zero_point_at(c));
  }
  instrument::note_float_op(src.size());
  return out;
}

Tensor fake_quant(const Tensor& x, const QuantParams& qp) {
  return dequantize(quantize(x, qp), qp);
}

}  // namespace qlower
