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

#include "qlower/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "qlower/analysis.hpp"
#include "qlower/error.hpp"
#include "qlower/executor.hpp"
#include "qlower/fusion.hpp"
#include "qlower/kernels.hpp"

namespace qlower {

std::string to_string(CalibMethod m) {
  switch (m) {
    case CalibMethod::kMinMax: return "minmax";
    case CalibMethod::kMse: return "mse";
    case CalibMethod::kAdaRound: return "adaround";
  }
  return "minmax";
}

CalibMethod calib_method_from_string(const std::string& name) {
  for (auto m : {CalibMethod::kMinMax, CalibMethod::kMse, CalibMethod::kAdaRound}) {
    if (to_string(m) == name) return m;
  }
  fail(ErrorKind::kConfig, "unknown calibration method '" + name + "'");
}

void validate_qconfig(const QConfig& cfg) {
  auto bits_ok = [](int b) { return b >= 2 && b <= 16; };
  require(bits_ok(cfg.w_bits), ErrorKind::kConfig,
          "w_bits must be in [2, 16], got " + std::to_string(cfg.w_bits));
  require(bits_ok(cfg.a_bits), ErrorKind::kConfig,
          "a_bits must be in [2, 16], got " + std::to_string(cfg.a_bits));
  require(cfg.calib_batches >= 0, ErrorKind::kConfig, "calib_batches is negative");
  require(cfg.act_percentile >= 0.0 && cfg.act_percentile <= 100.0, ErrorKind::kConfig,
          "act_percentile must be in [0, 100]");
  require(cfg.probs_frac >= 1 && cfg.probs_frac <= 15, ErrorKind::kConfig,
          "probs_frac must be in [1, 15]");
  require(cfg.adaround.iters >= 0 && cfg.adaround.lr > 0 && cfg.adaround.lambda_reg >= 0,
          ErrorKind::kConfig, "adaround settings out of range");
  require(cfg.symmetric_w, ErrorKind::kConfig,
          "integer lowering needs symmetric weights");
  layernorm_mode_from_string(cfg.layernorm_mode);
}

namespace {

const Node* sole_consumer(const Graph& g, const std::string& edge, OpKind kind) {
  if (std::find(g.outputs.begin(), g.outputs.end(), edge) != g.outputs.end()) return nullptr;
  auto cs = g.consumers(edge);
  if (cs.size() != 1 || cs[0]->kind != kind) return nullptr;
  return cs[0];
}

}  // namespace

std::vector<Segment> find_segments(const Graph& g) {
  std::vector<Segment> out;
  for (const auto& n : g.nodes) {
    if (n.kind != OpKind::kConv2d && n.kind != OpKind::kLinear) continue;
    Segment s{n.id, "", "", n.inputs[0], n.outputs[0]};
    if (const auto* bn = sole_consumer(g, s.output, OpKind::kBatchNorm)) {
      s.bn = bn->id;
      s.output = bn->outputs[0];
    }
    if (const auto* r = sole_consumer(g, s.output, OpKind::kRelu)) {
      s.relu = r->id;
      s.output = r->outputs[0];
    }
    out.push_back(s);
  }
  return out;
}

bool is_pass_through(const Graph& g, const Node& n) {
  switch (n.kind) {
    case OpKind::kMaxPool:
    case OpKind::kAvgPool:
    case OpKind::kFlatten:
      return true;
    case OpKind::kRelu:
      for (const auto& s : find_segments(g)) {
        if (s.relu == n.id) return false;
      }
      return true;
    default:
      return false;
  }
}

std::set<std::string> quant_points(const Graph& g) {
  std::set<std::string> pts;
  for (const auto& in : g.inputs) pts.insert(in.name);
  std::set<std::string> absorbed;
  for (const auto& s : find_segments(g)) {
    pts.insert(s.output);
    if (!s.bn.empty()) absorbed.insert(s.bn);
  }
  for (const auto& n : g.nodes) {
    switch (n.kind) {
      case OpKind::kAttention:
      case OpKind::kLayerNorm:
      case OpKind::kGelu:
      case OpKind::kSoftmax:
      case OpKind::kAdd:
        pts.insert(n.outputs[0]);
        break;
      case OpKind::kBatchNorm:
        if (!absorbed.count(n.id)) pts.insert(n.outputs[0]);
        break;
      default:
        break;
    }
  }
  return pts;
}

QuantParams probs_qparams(int frac) {
  return QuantParams::per_tensor(std::ldexp(1.0, -frac), 0, frac + 1, false, false);
}

namespace {

QuantParams slice_qp(const QuantParams& qp, std::int64_t from, std::int64_t count) {
  if (!qp.per_channel()) return qp;
  QuantParams s = qp;
  s.scale.assign(qp.scale.begin() + from, qp.scale.begin() + from + count);
  s.zero_point.assign(qp.zero_point.begin() + from, qp.zero_point.begin() + from + count);
  return s;
}

Tensor rows_of(const Tensor& w, std::int64_t from, std::int64_t count) {
  const auto cols = w.size() / w.dim(0);
  std::vector<float> v(w.floats().begin() + from * cols, w.floats().begin() + (from + count) * cols);
  return Tensor::from_floats({count, cols}, std::move(v));
}

}  // namespace

QuantParams weight_qparams(const Tensor& w, const QConfig& cfg) {
  require(w.is_float() && w.rank() >= 1 && w.size() > 0, ErrorKind::kInvalidArgument,
          "weight quantization needs a non-empty float tensor");
  const bool mse = cfg.method == CalibMethod::kMse;
  auto one = [&](const Tensor& t) {
    if (mse && t.size() >= 64) {
      return compute_qparams_mse(t, cfg.w_bits, true, cfg.symmetric_w).qp;
    }
    auto obs = Observer::minmax();
    obs.observe(t);
    return compute_qparams(obs, cfg.w_bits, true, cfg.symmetric_w).qp;
  };
  if (!cfg.per_channel_w || w.dim(0) == 1) {
    auto qp = one(w);
    qp.axis = 0;
    return qp;
  }
  QuantParams qp;
  qp.scale.clear();
  qp.zero_point.clear();
  for (std::int64_t o = 0; o < w.dim(0); ++o) {
    auto c = one(rows_of(w, o, 1));
    qp.scale.push_back(c.scale[0]);
    qp.zero_point.push_back(c.zero_point[0]);
    qp.bits = c.bits;
    qp.is_signed = c.is_signed;
    qp.symmetric = c.symmetric;
  }
  qp.axis = 0;
  return qp;
}

namespace {

constexpr std::int64_t kMaxAdaRoundRows = 2048;

Observer make_observer(const QConfig& cfg) {
  if (cfg.act_percentile > 0.0) return Observer::percentile(cfg.act_percentile);
  if (cfg.method == CalibMethod::kMse) return Observer::mse();
  return Observer::minmax();
}

// Deterministic subsample of at most kMaxAdaRoundRows rows.
Tensor thin_rows(const std::vector<float>& data, std::int64_t rows, std::int64_t cols) {
  const std::int64_t step = std::max<std::int64_t>(1, (rows + kMaxAdaRoundRows - 1) / kMaxAdaRoundRows);
  std::vector<float> out;
  std::int64_t kept = 0;
  for (std::int64_t r = 0; r < rows; r += step, ++kept) {
    out.insert(out.end(), data.begin() + r * cols, data.begin() + (r + 1) * cols);
  }
  return Tensor::from_floats({kept, cols}, std::move(out));
}

void prefuse_rewrite(Graph& g) {
  for (const auto& s : find_segments(g)) {
    if (s.bn.empty()) continue;
    const Node bn = *g.find_node(s.bn);
    Node& op = *g.find_node(s.op);
    const Tensor* bias = op.has_param("bias") ? &g.param(op, "bias") : nullptr;
    auto r = bn_prefuse(g.param(op, "weight"), NormParams::from_node(g, bn), bias);
    std::vector<float> b(r.beta_star.begin(), r.beta_star.end());
    const auto o = static_cast<std::int64_t>(b.size());
    op.params["weight"] = g.add_tensor(op.id + ".weight_fused", std::move(r.w));
    op.params["bias"] = g.add_tensor(op.id + ".bias_fused", Tensor::from_floats({o}, std::move(b)));
    op.outputs = bn.outputs;
    std::erase_if(g.nodes, [&](const Node& n) { return n.id == bn.id; });
  }
  // Drop tensors no node references any more.
  std::set<std::string> used;
  for (const auto& n : g.nodes) {
    for (const auto& [role, name] : n.params) used.insert(name);
  }
  std::erase_if(g.tensors, [&](const auto& kv) { return !used.count(kv.first); });
}

// Calibration rows for one conv group or the linear layer, from the float
// inputs seen on `edge`.
Tensor adaround_rows(const Node& n, const Tensor& w, const std::vector<Tensor>& inputs,
                     std::int64_t group) {
  std::vector<float> data;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  for (const auto& x : inputs) {
    Tensor m;
    if (n.kind == OpKind::kConv2d) {
      kernels::ConvSpec spec{n.attrs.get_int("stride", 1), n.attrs.get_int("padding", 0),
                             n.attrs.get_int("groups", 1)};
      m = kernels::im2col(x, w.dim(2), w.dim(3), spec, group);
    } else {
      const auto k = w.dim(1);
      m = x.reshaped({x.size() / k, k});
    }
    rows += m.dim(0);
    cols = m.dim(1);
    data.insert(data.end(), m.floats().begin(), m.floats().end());
  }
  return thin_rows(data, rows, cols);
}

void run_adaround(Graph& g, Node& n, const std::vector<Tensor>& inputs, const QConfig& cfg) {
  const Tensor& w = g.param(n, "weight");
  const auto& qp = g.weight_quant.at(n.params.at("weight"));
  const std::int64_t groups = n.kind == OpKind::kConv2d ? n.attrs.get_int("groups", 1) : 1;
  const auto og = w.dim(0) / groups;
  std::vector<std::int64_t> codes;
  codes.reserve(static_cast<std::size_t>(w.size()));
  for (std::int64_t gi = 0; gi < groups; ++gi) {
    const Tensor wg = rows_of(w, gi * og, og);
    const QuantParams qg = slice_qp(qp, gi * og, og);
    const Tensor x = adaround_rows(n, w, inputs, gi);
    auto st = adaround_fit(wg, qg, x, adaround_init(wg, qg, cfg.adaround), cfg.adaround.iters);
    const Tensor q = adaround_freeze(wg, qg, st);
    codes.insert(codes.end(), q.ints().begin(), q.ints().end());
  }
  n.params["weight_q"] =
      g.add_tensor(n.id + ".weight_q", Tensor::from_ints(w.shape(), std::move(codes), qp.bits, true));
}

struct RunningStats {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::int64_t count = 0;
};

}  // namespace

Graph calibrate_graph(const Graph& g_in, const std::vector<Tensor>& batches_in, const QConfig& cfg) {
  validate_qconfig(cfg);
  require(g_in.stage() == kStageFloat, ErrorKind::kConfig,
          "calibration needs a float graph, got stage '" + g_in.stage() + "'");
  std::vector<Tensor> batches = batches_in;
  if (cfg.calib_batches > 0 && static_cast<int>(batches.size()) > cfg.calib_batches) {
    batches.resize(static_cast<std::size_t>(cfg.calib_batches));
  }
  require(!batches.empty(), ErrorKind::kEmptyCalibration, "no calibration batches given");

  Graph g = infer_shapes(g_in);
  if (cfg.prefuse) {
    prefuse_rewrite(g);
    g = infer_shapes(g);
  }
  g.edge_quant.clear();
  g.weight_quant.clear();

  const auto points = quant_points(g);
  std::vector<std::string> observed(points.begin(), points.end());
  for (const auto& n : g.nodes) {
    if (n.kind != OpKind::kAttention) continue;
    for (const char* what : {"q", "k", "v", "scores", "ctx"}) {
      observed.push_back(internal_edge(n.id, what));
    }
  }
  std::map<std::string, Observer> obs;
  for (const auto& e : observed) obs.emplace(e, make_observer(cfg));
  std::map<std::string, RunningStats> ln_stats;
  std::map<std::string, std::vector<Tensor>> ada_inputs;

  for (const auto& x : batches) {
    Trace trace;
    exec_float(g, x, &trace);
    for (auto& [edge, o] : obs) {
      auto it = trace.find(edge);
      require(it != trace.end(), ErrorKind::kInvalidGraph,
              "calibration trace has no value for edge '" + edge + "'");
      o.observe(it->second, edge);
    }
    for (const auto& n : g.nodes) {
      if (n.kind == OpKind::kLayerNorm) {
        auto& st = ln_stats[n.id];
        for (float v : trace.at(n.inputs[0]).floats()) {
          st.sum += v;
          st.sum_sq += static_cast<double>(v) * v;
          ++st.count;
        }
      }
      if (cfg.method == CalibMethod::kAdaRound &&
          (n.kind == OpKind::kConv2d || n.kind == OpKind::kLinear)) {
        ada_inputs[n.id].push_back(trace.at(n.inputs[0]));
      }
    }
  }

  for (auto& [edge, o] : obs) {
    g.edge_quant[edge] = compute_qparams(o, cfg.a_bits, cfg.signed_a, cfg.symmetric_a).qp;
  }
  for (const auto& n : g.nodes) {
    if (n.kind == OpKind::kSoftmax) g.edge_quant[n.outputs[0]] = probs_qparams(cfg.probs_frac);
    if (n.kind == OpKind::kAttention) {
      g.edge_quant[internal_edge(n.id, "probs")] = probs_qparams(cfg.probs_frac);
    }
    // Interior segment edges stay unannotated; pass-through ops inherit.
    if (!points.count(n.outputs[0]) && is_pass_through(g, n)) {
      const auto* in = g.edge_qp(n.inputs[0]);
      if (in) g.edge_quant[n.outputs[0]] = *in;
    }
  }

  for (auto& n : g.nodes) {
    for (const char* role : {"weight", "wq", "wk", "wv", "wo"}) {
      if (!n.has_param(role)) continue;
      const auto& name = n.params.at(role);
      g.weight_quant[name] = weight_qparams(g.tensors.at(name), cfg);
    }
    if (n.kind == OpKind::kLayerNorm) {
      n.attrs.set("mode", cfg.layernorm_mode);
      const auto& st = ln_stats[n.id];
      const double mean = st.sum / static_cast<double>(st.count);
      const double var = std::max(0.0, st.sum_sq / static_cast<double>(st.count) - mean * mean);
      n.params["running_mean"] =
          g.add_tensor(n.id + ".running_mean", Tensor::from_floats({1}, {static_cast<float>(mean)}));
      n.params["running_var"] =
          g.add_tensor(n.id + ".running_var", Tensor::from_floats({1}, {static_cast<float>(var)}));
    }
  }
  if (cfg.method == CalibMethod::kAdaRound) {
    for (auto& n : g.nodes) {
      if (n.kind == OpKind::kConv2d || n.kind == OpKind::kLinear) {
        run_adaround(g, n, ada_inputs.at(n.id), cfg);
      }
    }
  }

  g.meta["stage"] = kStageCalibrated;
  g.meta["fuse_mode"] = cfg.prefuse ? "prefuse" : "channelwise";
  g.meta["probs_frac"] = std::to_string(cfg.probs_frac);
  g.meta["method"] = to_string(cfg.method);
  g.meta["w_bits"] = std::to_string(cfg.w_bits);
  g.meta["a_bits"] = std::to_string(cfg.a_bits);
  return g;
}

}  // namespace qlower
