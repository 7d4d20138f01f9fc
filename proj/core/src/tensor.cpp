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

#include "qlower/tensor.hpp"

#include <sstream>

#include "qlower/error.hpp"

namespace qlower {

std::int64_t element_count(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::int64_t DataType::min_value() const {
  if (!is_signed) return 0;
  if (bits >= 64) return INT64_MIN;
  return -(std::int64_t{1} << (bits - 1));
}

std::int64_t DataType::max_value() const {
  if (bits >= 64) return INT64_MAX;
  if (!is_signed) return (std::int64_t{1} << bits) - 1;
  return (std::int64_t{1} << (bits - 1)) - 1;
}

int DataType::storage_bytes() const {
  if (is_float) return 4;
  if (bits <= 8) return 1;
  if (bits <= 16) return 2;
  if (bits <= 32) return 4;
  return 8;
}

std::string DataType::storage_name() const {
  if (is_float) return "float32";
  return (is_signed ? "int" : "uint") + std::to_string(storage_bytes() * 8);
}

std::string to_string(const DataType& dtype) {
  if (dtype.is_float) return "float32";
  return (dtype.is_signed ? "int" : "uint") + std::to_string(dtype.bits);
}

Tensor::Tensor(Shape shape, DataType dtype)
    : shape_(std::move(shape)), dtype_(dtype) {
  for (auto d : shape_) {
    require(d > 0, ErrorKind::kShapeMismatch,
            "tensor extents must be positive, got " + shape_to_string(shape_));
  }
  if (dtype_.is_float) {
    fdata_.assign(static_cast<std::size_t>(size()), 0.0f);
  } else {
    require(dtype_.bits >= 1 && dtype_.bits <= 64, ErrorKind::kInvalidArgument,
            "integer bitwidth out of range");
    idata_.assign(static_cast<std::size_t>(size()), 0);
  }
}

Tensor Tensor::from_floats(Shape shape, std::vector<float> data) {
  Tensor t(std::move(shape), DataType::float32());
  require(static_cast<std::int64_t>(data.size()) == t.size(),
          ErrorKind::kShapeMismatch, "float data size does not match shape");
  t.fdata_ = std::move(data);
  return t;
}

Tensor Tensor::from_ints(Shape shape, std::vector<std::int64_t> data, int bits,
                         bool is_signed) {
  Tensor t(std::move(shape), DataType::int_type(bits, is_signed));
  require(static_cast<std::int64_t>(data.size()) == t.size(),
          ErrorKind::kShapeMismatch, "integer data size does not match shape");
  t.idata_ = std::move(data);
  return t;
}

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  require(axis >= 0 && axis < rank(), ErrorKind::kInvalidArgument,
          "axis out of range for shape " + shape_to_string(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

std::span<float> Tensor::floats() {
  require(dtype_.is_float, ErrorKind::kInvalidArgument,
          "float view requested on integer tensor");
  return fdata_;
}

std::span<const float> Tensor::floats() const {
  require(dtype_.is_float, ErrorKind::kInvalidArgument,
          "float view requested on integer tensor");
  return fdata_;
}

std::span<std::int64_t> Tensor::ints() {
  require(!dtype_.is_float, ErrorKind::kInvalidArgument,
          "integer view requested on float tensor");
  return idata_;
}

std::span<const std::int64_t> Tensor::ints() const {
  require(!dtype_.is_float, ErrorKind::kInvalidArgument,
          "integer view requested on float tensor");
  return idata_;
}

Tensor Tensor::reshaped(Shape shape) const {
  require(element_count(shape) == size(), ErrorKind::kShapeMismatch,
          "cannot reshape " + shape_to_string(shape_) + " to " +
              shape_to_string(shape));
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

std::int64_t Tensor::first_out_of_range() const {
  if (dtype_.is_float) return -1;
  const auto lo = dtype_.min_value();
  const auto hi = dtype_.max_value();
  for (std::size_t i = 0; i < idata_.size(); ++i) {
    if (idata_[i] < lo || idata_[i] > hi) return static_cast<std::int64_t>(i);
  }
  return -1;
}

std::vector<std::int64_t> strides_of(const Shape& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] =
        s[static_cast<std::size_t>(i) + 1] * shape[static_cast<std::size_t>(i) + 1];
  }
  return s;
}

}  // namespace qlower
