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

#include "qlower/graph.hpp"
#include "qlower/tensor.hpp"

namespace qlower {

/// Integer vs fake-quant divergence on one quantized edge, in output LSBs.
/// `max_lsb` / `mean_lsb` feed every layer the fake-quant inputs (teacher
/// forcing), so they measure that layer alone; the e2e_* fields come from
/// the free-running integer model and include accumulated drift.
struct LayerDiff {
  std::string edge;
  std::string node;
  double max_lsb = 0.0;
  double mean_lsb = 0.0;
  double e2e_max_lsb = 0.0;
  double e2e_mean_lsb = 0.0;
  std::int64_t count = 0;
};

struct ExecReport {
  std::vector<LayerDiff> layers;
  std::int64_t samples = 0;
  /// Row argmax of the deployed output vs the fake-quant output.
  double argmax_agreement = 0.0;
  /// Row argmax of the deployed output vs the float output.
  double argmax_agreement_float = 0.0;
  double runtime_float_ms = 0.0;
  double runtime_fakequant_ms = 0.0;
  double runtime_int_ms = 0.0;

  double max_layer_lsb() const;
  /// Runtimes are wall-clock and vary run to run; leave them out when the
  /// report must be reproducible.
  std::string to_json(bool with_runtime = true) const;
};

/// Runs the calibrated graph (float and fake-quant) and the fused graph
/// (integer) on every batch and compares them per quantized edge.
ExecReport compare_paths(const Graph& calibrated, const Graph& fused,
                         const std::vector<Tensor>& batches);

}  // namespace qlower
