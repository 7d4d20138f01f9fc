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

#include <optional>
#include <string>
#include <vector>

#include "qlower/fixed_point.hpp"
#include "qlower/graph.hpp"

namespace qlower {

/// gamma, beta, running mean / variance and eps of one normalization.
struct NormParams {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> mean;
  std::vector<double> var;
  double eps = 1e-5;

  std::size_t channels() const { return gamma.size(); }
  static NormParams from_node(const Graph& g, const Node& bn);
};

struct PrefuseResult {
  Tensor w;
  std::vector<double> beta_star;
};

/// W_fuse[o] = gamma[o] * W[o] / sqrt(var[o] + eps)
/// beta*[o]  = beta[o] - gamma[o] * mean[o] / sqrt(var[o] + eps)
/// An optional conv bias b adds gamma[o] * b[o] / sqrt(var[o] + eps).
PrefuseResult bn_prefuse(const Tensor& w, const NormParams& np, const Tensor* bias = nullptr);

struct ChannelwiseResult {
  std::vector<double> gamma_star;
  std::vector<double> beta_star;
};

/// gamma*[o] = gamma[o] / sqrt(var[o] + eps), beta* as in bn_prefuse.
ChannelwiseResult bn_channelwise(const NormParams& np);

enum class FuseKind { kPrefuse, kChannelwise };
enum class LayerNormMode { kInstant, kRunning };

std::string to_string(FuseKind k);
FuseKind fuse_kind_from_string(const std::string& name);
std::string to_string(LayerNormMode m);
LayerNormMode layernorm_mode_from_string(const std::string& name);

struct FuseMode {
  FuseKind kind = FuseKind::kChannelwise;
  FpSpec fp;
  int lut_entries = 256;
  int lut_frac = 12;
  /// GELU table domain when the input grid has more codes than entries.
  double gelu_clip = 4.0;
};

/// Rewrites a calibrated graph into integer-only form:
///   quantstub -> {int conv/linear -> mulquant, int add, LUT gelu / softmax,
///   int layernorm, int attention, pooling, flatten} -> dequantstub.
/// Every parameter tensor of the result is integer. Errors:
/// kUnfusablePattern (batchnorm without a preceding conv/linear),
/// kMissingAnnotation, kFixedPointOverflow, kConfig (mode does not match
/// the calibration).
Graph fuse_graph(const Graph& g, const FuseMode& mode);

/// Integer replacement of one layernorm node, appended to `out` with its
/// tensors. `input` / `output` are the integer edge names. Running mode
/// folds the calibration statistics into a MulQuant exactly like
/// batchnorm; instant mode keeps gamma / beta as fixed-point codes for the
/// integer layernorm op. kMissingAnnotation when running statistics are
/// requested but were not recorded.
std::vector<Node> layernorm_fold(const Graph& g, const Node& ln, LayerNormMode mode,
                                 const FuseMode& fm, Graph& out, const std::string& input,
                                 const std::string& output);

/// Name of the first float parameter tensor, if any.
std::optional<std::string> first_float_tensor(const Graph& g);

}  // namespace qlower
