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
#include <span>
#include <string>
#include <vector>

namespace qlower {

using Shape = std::vector<std::int64_t>;

std::int64_t element_count(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Element type: float32, or an integer of a declared logical bitwidth.
/// Stored tensors are limited to 2..32 bits; runtime accumulators may use
/// up to 64.
struct DataType {
  bool is_float = true;
  int bits = 32;
  bool is_signed = true;

  static DataType float32() { return {true, 32, true}; }
  static DataType int_type(int bits, bool is_signed) {
    return {false, bits, is_signed};
  }

  std::int64_t min_value() const;
  std::int64_t max_value() const;
  /// Smallest power-of-two byte width holding `bits`.
  int storage_bytes() const;
  /// "float32", "int8", "uint16", ... (names the storage type).
  std::string storage_name() const;

  bool operator==(const DataType&) const = default;
};

std::string to_string(const DataType& dtype);

/// Dense row-major tensor. Float data lives in `floats()`, integer data in
/// `ints()`; exactly one of the two buffers is populated.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, DataType dtype);

  static Tensor from_floats(Shape shape, std::vector<float> data);
  static Tensor from_ints(Shape shape, std::vector<std::int64_t> data,
                          int bits, bool is_signed);

  const Shape& shape() const { return shape_; }
  const DataType& dtype() const { return dtype_; }
  bool is_float() const { return dtype_.is_float; }
  std::int64_t size() const { return element_count(shape_); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const;

  std::span<float> floats();
  std::span<const float> floats() const;
  std::span<std::int64_t> ints();
  std::span<const std::int64_t> ints() const;

  /// Same data viewed under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  /// First element index violating the declared integer range, or -1.
  std::int64_t first_out_of_range() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  DataType dtype_ = DataType::float32();
  std::vector<float> fdata_;
  std::vector<std::int64_t> idata_;
};

/// Row-major strides for `shape`.
std::vector<std::int64_t> strides_of(const Shape& shape);

}  // namespace qlower
