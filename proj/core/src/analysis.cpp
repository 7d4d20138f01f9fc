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

#include "qlower/analysis.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "qlower/error.hpp"

namespace qlower {

namespace {

[[noreturn]] void shape_error(const Node& n, const std::string& msg) {
  fail(ErrorKind::kShapeMismatch,
       "node '" + n.id + "' (" + to_string(n.kind) + "): " + msg);
}

std::int64_t conv_extent(std::int64_t in, std::int64_t k, std::int64_t pad,
                         std::int64_t stride) {
  return (in + 2 * pad - k) / stride + 1;
}

void expect_inputs(const Node& n, std::size_t count,
                   const std::vector<Shape>& in) {
  if (in.size() != count) {
    shape_error(n, "expected " + std::to_string(count) + " input(s), got " +
                       std::to_string(in.size()));
  }
}

Shape param_shape(const Graph& g, const Node& n, const std::string& role) {
  auto it = n.params.find(role);
  if (it == n.params.end()) shape_error(n, "missing parameter '" + role + "'");
  auto t = g.tensors.find(it->second);
  if (t == g.tensors.end()) {
    shape_error(n, "parameter tensor '" + it->second + "' not found");
  }
  return t->second.shape();
}

// Producer index per edge; graph inputs map to -1.
std::map<std::string, int> producer_index(const Graph& g) {
  std::map<std::string, int> out;
  for (const auto& in : g.inputs) out[in.name] = -1;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    for (const auto& o : g.nodes[i].outputs) out[o] = static_cast<int>(i);
  }
  return out;
}

}  // namespace

std::vector<Shape> node_output_shapes(const Graph& g, const Node& n,
                                      const std::vector<Shape>& in) {
  const auto& a = n.attrs;
  switch (n.kind) {
    case OpKind::kConv2d: {
      expect_inputs(n, 1, in);
      const Shape w = param_shape(g, n, "weight");
      if (in[0].size() != 4) shape_error(n, "conv2d input must be NCHW");
      if (w.size() != 4) shape_error(n, "conv2d weight must be OIHW");
      const auto groups = a.get_int("groups", 1);
      const auto stride = a.get_int("stride", 1);
      const auto pad = a.get_int("padding", 0);
      if (groups < 1 || in[0][1] % groups != 0 || w[0] % groups != 0) {
        shape_error(n, "invalid group count");
      }
      if (w[1] * groups != in[0][1]) {
        shape_error(n, "weight expects " + std::to_string(w[1] * groups) +
                           " input channels, got " + std::to_string(in[0][1]));
      }
      if (stride < 1 || pad < 0) shape_error(n, "invalid stride/padding");
      const auto ho = conv_extent(in[0][2], w[2], pad, stride);
      const auto wo = conv_extent(in[0][3], w[3], pad, stride);
      if (ho < 1 || wo < 1) shape_error(n, "kernel larger than padded input");
      if (n.has_param("bias") && param_shape(g, n, "bias") != Shape{w[0]}) {
        shape_error(n, "bias length must equal output channels");
      }
      return {{in[0][0], w[0], ho, wo}};
    }
    case OpKind::kLinear: {
      expect_inputs(n, 1, in);
      const Shape w = param_shape(g, n, "weight");
      if (w.size() != 2) shape_error(n, "linear weight must be (out, in)");
      Shape out = in[0];
      if (out.size() == 4) out = {out[0], out[1] * out[2] * out[3]};
      if (out.size() < 2 || out.back() != w[1]) {
        shape_error(n, "input feature extent " +
                           std::to_string(out.empty() ? 0 : out.back()) +
                           " does not match weight in-features " +
                           std::to_string(w[1]));
      }
      if (n.has_param("bias") && param_shape(g, n, "bias") != Shape{w[0]}) {
        shape_error(n, "bias length must equal out-features");
      }
      out.back() = w[0];
      return {out};
    }
    case OpKind::kBatchNorm: {
      expect_inputs(n, 1, in);
      if (in[0].size() < 2) shape_error(n, "batchnorm needs a channel axis");
      for (const char* role : {"gamma", "beta", "mean", "var"}) {
        if (param_shape(g, n, role) != Shape{in[0][1]}) {
          shape_error(n, std::string(role) + " length must equal channels");
        }
      }
      return {in[0]};
    }
    case OpKind::kLayerNorm: {
      expect_inputs(n, 1, in);
      if (in[0].empty()) shape_error(n, "layernorm needs a feature axis");
      for (const char* role : {"gamma", "beta"}) {
        if (n.has_param(role) && param_shape(g, n, role) != Shape{in[0].back()}) {
          shape_error(n, std::string(role) + " length must equal features");
        }
      }
      return {in[0]};
    }
    case OpKind::kRelu:
    case OpKind::kGelu:
    case OpKind::kSoftmax:
    case OpKind::kQuantStub:
    case OpKind::kDequantStub:
      expect_inputs(n, 1, in);
      return {in[0]};
    case OpKind::kMulQuant: {
      expect_inputs(n, 1, in);
      const auto axis = a.get_int("channel_axis", 1);
      if (n.has_param("multiplier")) {
        const auto m = param_shape(g, n, "multiplier");
        const auto c = in[0][static_cast<std::size_t>(axis)];
        if (m.size() != 1 || (m[0] != 1 && m[0] != c)) {
          shape_error(n, "multiplier length must be 1 or the channel count");
        }
      }
      return {in[0]};
    }
    case OpKind::kAdd:
      expect_inputs(n, 2, in);
      if (in[0] != in[1]) {
        shape_error(n, "operand shapes differ: " + shape_to_string(in[0]) +
                           " vs " + shape_to_string(in[1]));
      }
      return {in[0]};
    case OpKind::kAvgPool:
    case OpKind::kMaxPool: {
      expect_inputs(n, 1, in);
      if (in[0].size() != 4) shape_error(n, "pooling input must be NCHW");
      if (a.get_int("global", 0) != 0) return {{in[0][0], in[0][1], 1, 1}};
      const auto k = a.get_int("kernel", 2);
      const auto stride = a.get_int("stride", k);
      const auto pad = a.get_int("padding", 0);
      const auto ho = conv_extent(in[0][2], k, pad, stride);
      const auto wo = conv_extent(in[0][3], k, pad, stride);
      if (k < 1 || stride < 1 || ho < 1 || wo < 1) {
        shape_error(n, "invalid pooling window");
      }
      return {{in[0][0], in[0][1], ho, wo}};
    }
    case OpKind::kFlatten: {
      expect_inputs(n, 1, in);
      if (in[0].empty()) shape_error(n, "cannot flatten a scalar");
      std::int64_t rest = 1;
      for (std::size_t i = 1; i < in[0].size(); ++i) rest *= in[0][i];
      return {{in[0][0], rest}};
    }
    case OpKind::kAttention: {
      expect_inputs(n, 1, in);
      if (in[0].size() != 3) shape_error(n, "attention input must be [B,T,E]");
      const auto e = in[0][2];
      const auto heads = a.get_int("heads", 1);
      if (heads < 1 || e % heads != 0) {
        shape_error(n, "embed dim " + std::to_string(e) +
                           " not divisible by heads " + std::to_string(heads));
      }
      for (const char* role : {"wq", "wk", "wv", "wo"}) {
        if (param_shape(g, n, role) != Shape{e, e}) {
          shape_error(n, std::string(role) + " must be (E, E)");
        }
      }
      return {in[0]};
    }
  }
  shape_error(n, "unsupported op");
}

Graph infer_shapes(const Graph& g) {
  Graph out = g;
  out.edge_shapes.clear();
  for (const auto& in : g.inputs) out.edge_shapes[in.name] = in.shape;
  for (const auto& n : g.nodes) {
    std::vector<Shape> in_shapes;
    for (const auto& e : n.inputs) {
      auto it = out.edge_shapes.find(e);
      if (it == out.edge_shapes.end()) {
        shape_error(n, "input edge '" + e + "' has no resolved shape");
      }
      in_shapes.push_back(it->second);
    }
    auto shapes = node_output_shapes(g, n, in_shapes);
    if (shapes.size() != n.outputs.size()) {
      shape_error(n, "expected " + std::to_string(shapes.size()) +
                         " output edge(s)");
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      out.edge_shapes[n.outputs[i]] = shapes[i];
    }
    if (n.kind == OpKind::kAttention) {
      const auto& x = in_shapes[0];
      const auto heads = n.attrs.get_int("heads", 1);
      for (const char* what : {"q", "k", "v", "ctx"}) {
        out.edge_shapes[internal_edge(n.id, what)] = x;
      }
      const Shape scores{x[0], heads, x[1], x[1]};
      out.edge_shapes[internal_edge(n.id, "scores")] = scores;
      out.edge_shapes[internal_edge(n.id, "probs")] = scores;
    }
  }
  return out;
}

std::vector<std::string> find_cycle(const Graph& g) {
  const auto prod = producer_index(g);
  const std::size_t n = g.nodes.size();
  std::vector<int> color(n, 0);  // 0 white, 1 grey, 2 black
  std::vector<int> parent(n, -1);
  std::vector<std::string> cycle;

  std::function<bool(int)> dfs = [&](int u) {
    color[static_cast<std::size_t>(u)] = 1;
    for (const auto& e : g.nodes[static_cast<std::size_t>(u)].inputs) {
      auto it = prod.find(e);
      if (it == prod.end() || it->second < 0) continue;
      const int v = it->second;
      if (color[static_cast<std::size_t>(v)] == 1) {
        cycle.push_back(g.nodes[static_cast<std::size_t>(v)].id);
        for (int w = u; w != v && w >= 0; w = parent[static_cast<std::size_t>(w)]) {
          cycle.push_back(g.nodes[static_cast<std::size_t>(w)].id);
        }
        return true;
      }
      if (color[static_cast<std::size_t>(v)] == 0) {
        parent[static_cast<std::size_t>(v)] = u;
        if (dfs(v)) return true;
      }
    }
    color[static_cast<std::size_t>(u)] = 2;
    return false;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (color[i] == 0 && dfs(static_cast<int>(i))) break;
  }
  std::sort(cycle.begin(), cycle.end());
  return cycle;
}

void topo_sort(Graph& g) {
  auto cycle = find_cycle(g);
  if (!cycle.empty()) {
    std::string ids;
    for (const auto& id : cycle) ids += (ids.empty() ? "" : ", ") + id;
    fail(ErrorKind::kCyclicGraph, "graph contains a cycle among nodes: " + ids);
  }
  const auto prod = producer_index(g);
  const std::size_t n = g.nodes.size();
  std::vector<int> indeg(n, 0);
  std::vector<std::vector<std::size_t>> users(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::set<int> deps;
    for (const auto& e : g.nodes[i].inputs) {
      auto it = prod.find(e);
      if (it != prod.end() && it->second >= 0) deps.insert(it->second);
    }
    indeg[i] = static_cast<int>(deps.size());
    for (int d : deps) users[static_cast<std::size_t>(d)].push_back(i);
  }
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indeg[i] == 0) ready.insert(i);
  }
  std::vector<Node> ordered;
  ordered.reserve(n);
  while (!ready.empty()) {
    const auto i = *ready.begin();
    ready.erase(ready.begin());
    ordered.push_back(g.nodes[i]);
    for (auto u : users[i]) {
      if (--indeg[u] == 0) ready.insert(u);
    }
  }
  g.nodes = std::move(ordered);
}

namespace {

struct RequiredAttr {
  OpKind kind;
  const char* key;
};

constexpr RequiredAttr kRequiredAttrs[] = {
    {OpKind::kBatchNorm, "eps"},
    {OpKind::kAttention, "heads"},
};

const char* const kRequiredParams[][5] = {
    /* conv2d */ {"weight", nullptr},
    /* linear */ {"weight", nullptr},
    /* batchnorm */ {"gamma", "beta", "mean", "var", nullptr},
};

}  // namespace

std::vector<Violation> validate(const Graph& g) {
  std::vector<Violation> out;
  auto add = [&](const std::string& where, const std::string& msg) {
    out.push_back({where, msg});
  };
  try {
    std::set<std::string> ids;
    std::map<std::string, int> producers;
    for (const auto& in : g.inputs) {
      producers[in.name]++;
      for (auto d : in.shape) {
        if (d <= 0) add(in.name, "graph input has non-positive extent");
      }
    }
    for (const auto& n : g.nodes) {
      if (!ids.insert(n.id).second) add(n.id, "duplicate node id");
      for (const auto& o : n.outputs) producers[o]++;
      for (const auto& [role, tname] : n.params) {
        if (!g.tensors.count(tname)) {
          add(n.id, "parameter '" + role + "' references missing tensor '" +
                        tname + "'");
        }
      }
      for (const auto& r : kRequiredAttrs) {
        if (r.kind == n.kind && !n.attrs.has(r.key)) {
          add(n.id, std::string("missing required attribute '") + r.key + "'");
        }
      }
      const int kidx = n.kind == OpKind::kConv2d   ? 0
                       : n.kind == OpKind::kLinear ? 1
                       : n.kind == OpKind::kBatchNorm ? 2
                                                      : -1;
      if (kidx >= 0) {
        for (const char* const* p = kRequiredParams[kidx]; *p; ++p) {
          if (!n.has_param(*p)) {
            add(n.id, std::string("missing required parameter '") + *p + "'");
          }
        }
      }
      if (n.kind == OpKind::kAttention) {
        for (const char* p : {"wq", "wk", "wv", "wo"}) {
          if (!n.has_param(p)) {
            add(n.id, std::string("missing required parameter '") + p + "'");
          }
        }
      }
      if (n.has_param("weight") && g.tensors.count(n.params.at("weight"))) {
        const auto& w = g.tensors.at(n.params.at("weight"));
        if (n.kind == OpKind::kConv2d && w.rank() != 4) {
          add(n.id, "conv2d weight must be OIHW (rank 4)");
        }
        if (n.kind == OpKind::kLinear && w.rank() != 2) {
          add(n.id, "linear weight must be (out, in)");
        }
      }
    }
    for (const auto& [edge, count] : producers) {
      if (count > 1) {
        add(edge, "edge has " + std::to_string(count) + " producers");
      }
    }
    for (const auto& n : g.nodes) {
      for (const auto& e : n.inputs) {
        if (!producers.count(e)) add(n.id, "input edge '" + e + "' has no producer");
      }
    }
    for (const auto& o : g.outputs) {
      if (!producers.count(o)) add(o, "graph output has no producer");
    }

    auto cycle = find_cycle(g);
    if (!cycle.empty()) {
      std::string list;
      for (const auto& id : cycle) list += (list.empty() ? "" : ", ") + id;
      add(cycle.front(), "cycle among nodes: " + list);
    } else {
      std::set<std::string> seen;
      for (const auto& in : g.inputs) seen.insert(in.name);
      for (const auto& n : g.nodes) {
        for (const auto& e : n.inputs) {
          if (producers.count(e) && !seen.count(e)) {
            add(n.id, "not in topological order: consumes '" + e +
                          "' before it is produced");
          }
        }
        for (const auto& o : n.outputs) seen.insert(o);
      }
    }

    for (const auto& [name, t] : g.tensors) {
      if (!t.is_float() && (t.dtype().bits < 2 || t.dtype().bits > 32)) {
        add(name, "stored integer tensors need 2..32 bits");
      }
      const auto bad = t.first_out_of_range();
      if (bad >= 0) {
        add(name, "element " + std::to_string(bad) + " = " +
                      std::to_string(t.ints()[static_cast<std::size_t>(bad)]) +
                      " outside " + to_string(t.dtype()) + " range");
      }
    }

    for (const auto& [name, qp] : g.weight_quant) {
      for (const auto& m : check_quant_params(qp)) add(name, m);
      auto it = g.tensors.find(name);
      if (it == g.tensors.end()) {
        add(name, "weight annotation for unknown tensor");
        continue;
      }
      if (qp.per_channel()) {
        const auto& t = it->second;
        if (qp.axis < 0 || qp.axis >= t.rank()) {
          add(name, "per-channel axis out of range");
        } else if (static_cast<std::int64_t>(qp.scale.size()) != t.dim(qp.axis)) {
          add(name, "per-channel scale length " +
                        std::to_string(qp.scale.size()) + " does not match " +
                        std::to_string(t.dim(qp.axis)) + " channels");
        }
      }
    }
    for (const auto& [edge, qp] : g.edge_quant) {
      for (const auto& m : check_quant_params(qp)) add(edge, m);
    }

    if (cycle.empty() && out.empty()) {
      try {
        (void)infer_shapes(g);
      } catch (const Error& e) {
        add("shape", e.what());
      }
    }
  } catch (const std::exception& e) {
    add("graph", std::string("validation aborted: ") + e.what());
  }
  return out;
}

}  // namespace qlower
