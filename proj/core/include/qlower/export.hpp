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
#include <filesystem>
#include <string>
#include <vector>

#include "qlower/graph.hpp"
#include "qlower/tensor.hpp"

namespace qlower {

enum class ExportFormat { kHex, kBinstr, kRawbin, kDecimalJson };

std::string to_string(ExportFormat f);
ExportFormat export_format_from_string(const std::string& name);

struct ExportConfig {
  ExportFormat format = ExportFormat::kHex;
  /// Bits per word; 0 uses each tensor's own bitwidth.
  int word_bits = 0;
  /// Text formats concatenate this many words per line, lane 0 in the
  /// least significant position.
  int words_per_line = 1;
  /// Unroll order of the tensor axes; empty means row-major.
  std::vector<int> axis_order;
  /// rawbin only: two 4-bit values per byte, low nibble first.
  bool pack = false;
};

/// Layout needed to invert an export.
struct TensorLayout {
  Shape shape;
  int bits = 8;
  bool is_signed = true;
};

std::string export_hex(const Tensor& t, const ExportConfig& cfg = {});
Tensor parse_hex(const std::string& text, const TensorLayout& layout, const ExportConfig& cfg = {});

std::string export_binstr(const Tensor& t, const ExportConfig& cfg = {});
Tensor parse_binstr(const std::string& text, const TensorLayout& layout,
                    const ExportConfig& cfg = {});

std::vector<std::uint8_t> export_rawbin(const Tensor& t, const ExportConfig& cfg = {});
Tensor parse_rawbin(const std::vector<std::uint8_t>& bytes, const TensorLayout& layout,
                    const ExportConfig& cfg = {});

std::string export_decimal_json(const Tensor& t, const ExportConfig& cfg = {});
Tensor parse_decimal_json(const std::string& text, const TensorLayout& layout,
                          const ExportConfig& cfg = {});

/// Writes a fused graph as a deployment bundle:
///   manifest.json       layer order, shapes, bitwidths, attributes
///   weights/<layer>.*   conv / linear / attention weights in cfg.format
///   scale/<layer>.json  MulQuant codes, LUT tables and other integer params
/// Output is byte-identical for identical inputs. kNotFullyFused names the
/// first float tensor; kIo on unwritable paths.
void export_model(const Graph& g, const std::filesystem::path& dir, const ExportConfig& cfg = {});

/// Exact inverse of export_model.
Graph import_bundle(const std::filesystem::path& dir);

}  // namespace qlower
