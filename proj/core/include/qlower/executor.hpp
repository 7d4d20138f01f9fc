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

#include <map>
#include <string>

#include "qlower/graph.hpp"
#include "qlower/tensor.hpp"

namespace qlower {

/// Edge name -> value, including attention internals ("<node>:scores").
using Trace = std::map<std::string, Tensor>;

/// fp32 forward of the first graph input to the first graph output.
Tensor exec_float(const Graph& g, const Tensor& x, Trace* trace = nullptr);

/// Training-path semantics: every weight and every annotated edge passes
/// through fake quantization. kMissingAnnotation names the edge or weight
/// lacking params.
Tensor exec_fakequant(const Graph& g, const Tensor& x, Trace* trace = nullptr);

struct IntRunOptions {
  /// Throw kFloatOpInIntegerPath if any float op runs.
  bool assert_int_only = false;
  /// Edges whose values replace the computed ones when consumed
  /// (teacher forcing for per-layer comparisons).
  const Trace* forced = nullptr;
};

/// Deploy-path semantics on a fused graph: integer codes in (the quantstub
/// output), integer codes out (the dequantstub input).
Tensor exec_int(const Graph& g, const Tensor& x_q, Trace* trace = nullptr,
                const IntRunOptions& opts = {});

/// Quantstub of a fused graph applied to a float input.
Tensor quantize_input(const Graph& g, const Tensor& x);
/// Dequantstub of a fused graph applied to integer output codes.
Tensor dequantize_output(const Graph& g, const Tensor& y_q);

/// quantize_input -> exec_int -> dequantize_output.
Tensor exec_deployed(const Graph& g, const Tensor& x, Trace* trace = nullptr);

/// Row-wise argmax over the last axis.
std::vector<std::int64_t> argmax_rows(const Tensor& t);

}  // namespace qlower
