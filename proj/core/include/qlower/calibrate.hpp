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

#include <set>
#include <string>
#include <vector>

#include "qlower/adaround.hpp"
#include "qlower/graph.hpp"
#include "qlower/observer.hpp"

namespace qlower {

enum class CalibMethod { kMinMax, kMse, kAdaRound };

std::string to_string(CalibMethod m);
CalibMethod calib_method_from_string(const std::string& name);

struct QConfig {
  int w_bits = 8;
  int a_bits = 8;
  bool symmetric_w = true;
  bool symmetric_a = false;
  /// Activations default to unsigned asymmetric codes.
  bool signed_a = false;
  bool per_channel_w = true;
  CalibMethod method = CalibMethod::kMinMax;
  /// 0 uses every batch.
  int calib_batches = 0;
  /// When > 0, activation ranges clip at this percentile.
  double act_percentile = 0.0;
  /// Fold batchnorm into the preceding weights before quantization.
  bool prefuse = false;
  /// "instant" or "running" layernorm statistics.
  std::string layernorm_mode = "instant";
  AdaRoundConfig adaround;
  /// Softmax probabilities use an unsigned grid with this many fraction bits.
  int probs_frac = 12;
};

/// Throws kConfig on out-of-range settings.
void validate_qconfig(const QConfig& cfg);

/// conv2d/linear [-> batchnorm] [-> relu] chains that become one integer
/// op plus one MulQuant. The chain output is the quantization point.
struct Segment {
  std::string op;
  std::string bn;    // empty when absent
  std::string relu;  // empty when absent
  std::string input;
  std::string output;
};

std::vector<Segment> find_segments(const Graph& g);

/// Edges that carry their own activation QuantParams: graph inputs, segment
/// outputs, and outputs of attention, layernorm, gelu, softmax, add and
/// standalone batchnorm. Pass-through ops (pooling, flatten, standalone
/// relu) inherit their input's params instead.
std::set<std::string> quant_points(const Graph& g);

bool is_pass_through(const Graph& g, const Node& n);

/// The fixed grid of softmax outputs: unsigned, scale 2^-frac.
QuantParams probs_qparams(int frac);

/// Annotates every conv/linear/attention weight and every activation edge
/// (plus attention internals). In prefuse mode batchnorm is folded into the
/// preceding weights first. With AdaRound, frozen integer weights are stored
/// as the node's "weight_q" parameter. kEmptyCalibration on no batches.
Graph calibrate_graph(const Graph& g, const std::vector<Tensor>& batches, const QConfig& cfg);

/// Weight params of one tensor under cfg (per-channel along axis 0 when set).
QuantParams weight_qparams(const Tensor& w, const QConfig& cfg);

}  // namespace qlower
