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
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qlower/quant_params.hpp"
#include "qlower/tensor.hpp"

namespace qlower {

enum class OpKind {
  kConv2d,
  kLinear,
  kBatchNorm,
  kLayerNorm,
  kRelu,
  kGelu,
  kSoftmax,
  kAdd,
  kAvgPool,
  kMaxPool,
  kFlatten,
  kAttention,
  kMulQuant,
  kQuantStub,
  kDequantStub,
};

std::string to_string(OpKind kind);
/// nullopt for names outside the supported op set.
std::optional<OpKind> op_kind_from_string(const std::string& name);

using AttrValue = std::variant<std::int64_t, double, std::vector<std::int64_t>,
                               std::vector<double>, std::string>;

/// Kind-specific node attributes (stride, padding, heads, eps, ...).
class Attributes {
 public:
  void set(const std::string& key, AttrValue value) {
    values_[key] = std::move(value);
  }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void erase(const std::string& key) { values_.erase(key); }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  double get_double(const std::string& key) const;
  std::vector<std::int64_t> get_ints(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;

  const std::map<std::string, AttrValue>& values() const { return values_; }

  bool operator==(const Attributes&) const = default;

 private:
  std::map<std::string, AttrValue> values_;
};

struct Node {
  std::string id;
  OpKind kind = OpKind::kRelu;
  Attributes attrs;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  /// Parameter role ("weight", "gamma", ...) -> tensor name in the store.
  std::map<std::string, std::string> params;

  bool has_param(const std::string& role) const {
    return params.count(role) > 0;
  }

  bool operator==(const Node&) const = default;
};

struct ValueInfo {
  std::string name;
  Shape shape;
  DataType dtype = DataType::float32();

  bool operator==(const ValueInfo&) const = default;
};

/// Stages a graph moves through; recorded in `meta["stage"]`.
inline constexpr const char* kStageFloat = "float";
inline constexpr const char* kStageCalibrated = "calibrated";
inline constexpr const char* kStageFused = "fused";

/// Topologically ordered compute graph plus its tensor store and
/// quantization annotations. Activation annotations live on edges, weight
/// annotations on parameter tensors.
struct Graph {
  std::vector<Node> nodes;
  std::vector<ValueInfo> inputs;
  std::vector<std::string> outputs;
  std::map<std::string, Tensor> tensors;
  std::map<std::string, QuantParams> weight_quant;
  std::map<std::string, QuantParams> edge_quant;
  std::map<std::string, Shape> edge_shapes;
  std::map<std::string, std::string> meta;

  std::string stage() const;

  const Node* find_node(const std::string& id) const;
  Node* find_node(const std::string& id);
  /// Node producing `edge`, or nullptr for graph inputs / unknown edges.
  const Node* producer(const std::string& edge) const;
  std::vector<const Node*> consumers(const std::string& edge) const;

  const Tensor& param(const Node& node, const std::string& role) const;
  const QuantParams* edge_qp(const std::string& edge) const;
  const QuantParams* weight_qp(const std::string& tensor) const;

  /// Adds a tensor under a fresh name derived from `hint`; returns the name.
  std::string add_tensor(const std::string& hint, Tensor t);

  bool operator==(const Graph&) const = default;
};

/// Name used for an attention node's internal quantization points
/// (q, k, v, scores, probs, ctx).
inline std::string internal_edge(const std::string& node_id,
                                 const std::string& what) {
  return node_id + ":" + what;
}

}  // namespace qlower
