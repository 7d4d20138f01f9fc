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

#include "qlower/graph.hpp"

#include <array>
#include <utility>

#include "qlower/error.hpp"

namespace qlower {

namespace {

constexpr std::array<std::pair<OpKind, const char*>, 15> kOpNames{{
    {OpKind::kConv2d, "conv2d"},
    {OpKind::kLinear, "linear"},
    {OpKind::kBatchNorm, "batchnorm"},
    {OpKind::kLayerNorm, "layernorm"},
    {OpKind::kRelu, "relu"},
    {OpKind::kGelu, "gelu"},
    {OpKind::kSoftmax, "softmax"},
    {OpKind::kAdd, "add"},
    {OpKind::kAvgPool, "avgpool"},
    {OpKind::kMaxPool, "maxpool"},
    {OpKind::kFlatten, "flatten"},
    {OpKind::kAttention, "attention"},
    {OpKind::kMulQuant, "mulquant"},
    {OpKind::kQuantStub, "quantstub"},
    {OpKind::kDequantStub, "dequantstub"},
}};

template <typename T>
const T* find_attr(const std::map<std::string, AttrValue>& values,
                   const std::string& key) {
  auto it = values.find(key);
  if (it == values.end()) return nullptr;
  return std::get_if<T>(&it->second);
}

}  // namespace

std::string to_string(OpKind kind) {
  for (const auto& [k, name] : kOpNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<OpKind> op_kind_from_string(const std::string& name) {
  for (const auto& [k, n] : kOpNames) {
    if (name == n) return k;
  }
  return std::nullopt;
}

std::int64_t Attributes::get_int(const std::string& key,
                                 std::int64_t fallback) const {
  if (auto* v = find_attr<std::int64_t>(values_, key)) return *v;
  return fallback;
}

std::int64_t Attributes::get_int(const std::string& key) const {
  auto* v = find_attr<std::int64_t>(values_, key);
  require(v != nullptr, ErrorKind::kInvalidGraph,
          "missing integer attribute '" + key + "'");
  return *v;
}

double Attributes::get_double(const std::string& key, double fallback) const {
  if (auto* v = find_attr<double>(values_, key)) return *v;
  if (auto* v = find_attr<std::int64_t>(values_, key)) {
    return static_cast<double>(*v);
  }
  return fallback;
}

double Attributes::get_double(const std::string& key) const {
  require(has(key), ErrorKind::kInvalidGraph,
          "missing real attribute '" + key + "'");
  return get_double(key, 0.0);
}

std::vector<std::int64_t> Attributes::get_ints(const std::string& key) const {
  if (auto* v = find_attr<std::vector<std::int64_t>>(values_, key)) return *v;
  if (auto* v = find_attr<std::int64_t>(values_, key)) return {*v};
  fail(ErrorKind::kInvalidGraph, "missing integer-list attribute '" + key + "'");
}

std::vector<double> Attributes::get_doubles(const std::string& key) const {
  if (auto* v = find_attr<std::vector<double>>(values_, key)) return *v;
  if (auto* v = find_attr<double>(values_, key)) return {*v};
  fail(ErrorKind::kInvalidGraph, "missing real-list attribute '" + key + "'");
}

std::string Attributes::get_string(const std::string& key,
                                   const std::string& fallback) const {
  if (auto* v = find_attr<std::string>(values_, key)) return *v;
  return fallback;
}

std::string Graph::stage() const {
  auto it = meta.find("stage");
  return it == meta.end() ? kStageFloat : it->second;
}

const Node* Graph::find_node(const std::string& id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

Node* Graph::find_node(const std::string& id) {
  for (auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

const Node* Graph::producer(const std::string& edge) const {
  for (const auto& n : nodes) {
    for (const auto& o : n.outputs) {
      if (o == edge) return &n;
    }
  }
  return nullptr;
}

std::vector<const Node*> Graph::consumers(const std::string& edge) const {
  std::vector<const Node*> out;
  for (const auto& n : nodes) {
    for (const auto& i : n.inputs) {
      if (i == edge) {
        out.push_back(&n);
        break;
      }
    }
  }
  return out;
}

const Tensor& Graph::param(const Node& node, const std::string& role) const {
  auto it = node.params.find(role);
  require(it != node.params.end(), ErrorKind::kInvalidGraph,
          "node '" + node.id + "' has no parameter '" + role + "'");
  auto t = tensors.find(it->second);
  require(t != tensors.end(), ErrorKind::kInvalidGraph,
          "node '" + node.id + "' references missing tensor '" + it->second +
              "'");
  return t->second;
}

const QuantParams* Graph::edge_qp(const std::string& edge) const {
  auto it = edge_quant.find(edge);
  return it == edge_quant.end() ? nullptr : &it->second;
}

const QuantParams* Graph::weight_qp(const std::string& tensor) const {
  auto it = weight_quant.find(tensor);
  return it == weight_quant.end() ? nullptr : &it->second;
}

std::string Graph::add_tensor(const std::string& hint, Tensor t) {
  std::string name = hint;
  for (int i = 1; tensors.count(name); ++i) {
    name = hint + "_" + std::to_string(i);
  }
  tensors.emplace(name, std::move(t));
  return name;
}

}  // namespace qlower
