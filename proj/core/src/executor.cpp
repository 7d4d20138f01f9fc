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

#include "qlower/executor.hpp"

#include <algorithm>
#include <set>

#include "qlower/calibrate.hpp"
#include "qlower/error.hpp"
#include "qlower/fixed_point.hpp"
#include "qlower/instrument.hpp"
#include "qlower/int_kernels.hpp"
#include "qlower/kernels.hpp"
#include "qlower/lut.hpp"
#include "qlower/quantizer.hpp"

namespace qlower {

namespace {

kernels::ConvSpec conv_spec(const Node& n) {
  return {n.attrs.get_int("stride", 1), n.attrs.get_int("padding", 0), n.attrs.get_int("groups", 1)};
}

kernels::PoolSpec pool_spec(const Node& n) {
  const auto k = n.attrs.get_int("kernel", 2);
  return {k, n.attrs.get_int("stride", k), n.attrs.get_int("padding", 0),
          n.attrs.get_int("global", 0) != 0};
}

const Tensor* opt_param(const Graph& g, const Node& n, const std::string& role) {
  return n.has_param(role) ? &g.param(n, role) : nullptr;
}

void check_input(const Graph& g, const Tensor& x) {
  require(!g.inputs.empty() && !g.outputs.empty(), ErrorKind::kInvalidGraph,
          "graph has no inputs or outputs");
  const auto& want = g.inputs[0].shape;
  bool ok = x.rank() == static_cast<int>(want.size());
  for (std::size_t i = 1; ok && i < want.size(); ++i) ok = want[i] == x.dim(static_cast<int>(i));
  require(ok, ErrorKind::kShapeMismatch,
          "input '" + g.inputs[0].name + "' expects " + shape_to_string(want) + ", got " +
              shape_to_string(x.shape()));
}

class FloatRunner {
 public:
  FloatRunner(const Graph& g, bool fq) : g_(g), fq_(fq) {
    if (fq_) points_ = quant_points(g);
  }

  Tensor run(const Tensor& x, Trace* trace) {
    check_input(g_, x);
    require(x.is_float(), ErrorKind::kInvalidArgument, "float execution needs a float input");
    std::map<std::string, Tensor> env;
    env[g_.inputs[0].name] = edge_out(g_.inputs[0].name, x);
    for (const auto& n : g_.nodes) {
      auto in = [&](std::size_t i) -> const Tensor& { return env.at(n.inputs[i]); };
      Tensor y = eval(n, in, trace);
      y = edge_out(n.outputs[0], std::move(y));
      env[n.outputs[0]] = y;
    }
    if (trace) {
      for (const auto& [k, v] : env) (*trace)[k] = v;
    }
    return env.at(g_.outputs[0]);
  }

 private:
  const QuantParams& need(const std::string& edge) const {
    const auto* qp = g_.edge_qp(edge);
    if (!qp) fail(ErrorKind::kMissingAnnotation, "edge '" + edge + "' has no quant params");
    return *qp;
  }

  Tensor edge_out(const std::string& edge, Tensor y) const {
    if (!fq_) return y;
    if (points_.count(edge)) return fake_quant(y, need(edge));
    if (const auto* qp = g_.edge_qp(edge)) return fake_quant(y, *qp);
    return y;
  }

  Tensor weight(const Node& n, const std::string& role) const {
    const Tensor& w = g_.param(n, role);
    if (!fq_) return w;
    const auto& name = n.params.at(role);
    const auto* qp = g_.weight_qp(name);
    if (!qp) {
      fail(ErrorKind::kMissingAnnotation,
           "weight '" + name + "' of node '" + n.id + "' has no quant params");
    }
    auto frozen = n.params.find(role + "_q");
    if (frozen != n.params.end()) return dequantize(g_.tensors.at(frozen->second), *qp);
    return fake_quant(w, *qp);
  }

  template <typename In>
  Tensor eval(const Node& n, In&& in, Trace* trace) const {
    switch (n.kind) {
      case OpKind::kConv2d: {
        const Tensor w = weight(n, "weight");
        return kernels::conv2d(in(0), w, opt_param(g_, n, "bias"), conv_spec(n));
      }
      case OpKind::kLinear: {
        const Tensor w = weight(n, "weight");
        return kernels::linear(in(0), w, opt_param(g_, n, "bias"));
      }
      case OpKind::kBatchNorm:
        return kernels::batchnorm(in(0), g_.param(n, "gamma"), g_.param(n, "beta"),
                                  g_.param(n, "mean"), g_.param(n, "var"),
                                  n.attrs.get_double("eps", 1e-5));
      case OpKind::kLayerNorm: {
        std::optional<std::pair<double, double>> running;
        if (fq_ && n.attrs.get_string("mode", "instant") == "running") {
          require(n.has_param("running_mean") && n.has_param("running_var"),
                  ErrorKind::kMissingAnnotation,
                  "layernorm '" + n.id + "' has no recorded running statistics");
          running = std::make_pair(static_cast<double>(g_.param(n, "running_mean").floats()[0]),
                                   static_cast<double>(g_.param(n, "running_var").floats()[0]));
        }
        return kernels::layernorm(in(0), opt_param(g_, n, "gamma"), opt_param(g_, n, "beta"),
                                  n.attrs.get_double("eps", 1e-5), running);
      }
      case OpKind::kRelu: return kernels::relu(in(0));
      case OpKind::kGelu: return kernels::gelu(in(0));
      case OpKind::kSoftmax: return kernels::softmax(in(0));
      case OpKind::kAdd: return kernels::add(in(0), in(1));
      case OpKind::kMaxPool: return kernels::maxpool(in(0), pool_spec(n));
      case OpKind::kAvgPool: return kernels::avgpool(in(0), pool_spec(n));
      case OpKind::kFlatten: return kernels::flatten(in(0));
      case OpKind::kAttention: {
        std::map<std::string, Tensor> ws;
        for (const char* role : {"wq", "wk", "wv", "wo"}) ws[role] = weight(n, role);
        kernels::AttentionWeights aw{&ws["wq"], &ws["wk"], &ws["wv"], &ws["wo"],
                                     opt_param(g_, n, "bq"), opt_param(g_, n, "bk"),
                                     opt_param(g_, n, "bv"), opt_param(g_, n, "bo")};
        auto hook = [&](const std::string& what, Tensor& t) {
          const auto edge = internal_edge(n.id, what);
          if (fq_) t = fake_quant(t, need(edge));
          if (trace) (*trace)[edge] = t;
        };
        return kernels::attention(in(0), aw, n.attrs.get_int("heads", 1), hook);
      }
      case OpKind::kMulQuant:
      case OpKind::kQuantStub:
      case OpKind::kDequantStub:
        break;
    }
    fail(ErrorKind::kInvalidGraph,
         "node '" + n.id + "' (" + to_string(n.kind) + ") is lowered; use the integer executor");
  }

  const Graph& g_;
  bool fq_;
  std::set<std::string> points_;
};

const Node& stub(const Graph& g, OpKind kind) {
  for (const auto& n : g.nodes) {
    if (n.kind == kind) return n;
  }
  fail(ErrorKind::kNotFullyFused,
       std::string("graph has no ") + (kind == OpKind::kQuantStub ? "quantstub" : "dequantstub"));
}

QuantParams stub_qp(const Node& n) {
  return QuantParams::per_tensor(bits_double(n.attrs.get_int("scale_bits")),
                                 n.attrs.get_int("zero_point"),
                                 static_cast<int>(n.attrs.get_int("bits")),
                                 n.attrs.get_int("signed") != 0,
                                 n.attrs.get_int("symmetric", 0) != 0);
}

ikernels::LayerNormParams layernorm_params(const Graph& g, const Node& n) {
  const auto& a = n.attrs;
  ikernels::LayerNormParams p;
  const auto& gm = g.param(n, "gamma").ints();
  const auto& bt = g.param(n, "beta").ints();
  p.gamma.assign(gm.begin(), gm.end());
  p.beta.assign(bt.begin(), bt.end());
  p.fp = {static_cast<int>(a.get_int("int_bits")), static_cast<int>(a.get_int("frac_bits"))};
  p.in_zero = a.get_int("in_zero");
  p.eps_code = a.get_int("eps_code");
  p.out_mult = a.get_int("out_mult");
  p.out_frac = static_cast<int>(a.get_int("out_frac"));
  p.out_zero = a.get_int("out_zero");
  p.lo = a.get_int("lo");
  p.hi = a.get_int("hi");
  p.var_frac = static_cast<int>(a.get_int("var_frac", 8));
  p.isqrt_frac = static_cast<int>(a.get_int("isqrt_frac", 14));
  return p;
}

Tensor int_eval(const Graph& g, const Node& n, const std::vector<const Tensor*>& in, Trace* trace) {
  const auto& a = n.attrs;
  const Tensor& x = *in[0];
  require(!x.is_float(), ErrorKind::kFloatOpInIntegerPath,
          "node '" + n.id + "' received a float tensor on the integer path");
  switch (n.kind) {
    case OpKind::kConv2d:
      return ikernels::conv2d(x, g.param(n, "weight"), a.get_int("input_zero_point", 0), conv_spec(n));
    case OpKind::kLinear:
      return ikernels::linear(x, g.param(n, "weight"), a.get_int("input_zero_point", 0));
    case OpKind::kMulQuant:
      return ikernels::mulquant(x, mulquant_from_node(g, n));
    case OpKind::kAdd: {
      ikernels::AddParams p{a.get_int("a_zero"), a.get_int("b_zero"), a.get_int("a_mult"),
                            a.get_int("b_mult"), static_cast<int>(a.get_int("frac")),
                            a.get_int("out_zero"), a.get_int("lo"), a.get_int("hi")};
      return ikernels::add(x, *in[1], p);
    }
    case OpKind::kGelu: {
      ikernels::GeluParams p{load_lut(g, n, "lut", LutKind::kGelu), a.get_int("in_zero"),
                             a.get_int("id_mult"), static_cast<int>(a.get_int("id_frac")),
                             a.get_int("out_zero"), a.get_int("lo"), a.get_int("hi")};
      return ikernels::gelu(x, p);
    }
    case OpKind::kSoftmax:
      return ikernels::softmax(x, load_lut(g, n, "exp_lut", LutKind::kExp),
                               load_lut(g, n, "recip_lut", LutKind::kReciprocal),
                               static_cast<int>(a.get_int("probs_frac")));
    case OpKind::kLayerNorm:
      return ikernels::layernorm_instant(x, layernorm_params(g, n));
    case OpKind::kRelu:
      return ikernels::relu(x, a.get_int("zero_point", 0));
    case OpKind::kMaxPool:
      return ikernels::maxpool(x, pool_spec(n));
    case OpKind::kAvgPool:
      return ikernels::avgpool(x, a.get_int("zero_point", 0), pool_spec(n));
    case OpKind::kFlatten:
      return x.reshaped({x.dim(0), x.size() / x.dim(0)});
    case OpKind::kAttention: {
      ikernels::AttentionParams p;
      p.wq = &g.param(n, "wq");
      p.wk = &g.param(n, "wk");
      p.wv = &g.param(n, "wv");
      p.wo = &g.param(n, "wo");
      p.heads = a.get_int("heads", 1);
      p.x_zero = a.get_int("input_zero_point", 0);
      p.mq_q = load_mulquant(g, n, "q.");
      p.mq_k = load_mulquant(g, n, "k.");
      p.mq_v = load_mulquant(g, n, "v.");
      p.mq_scores = load_mulquant(g, n, "scores.");
      p.mq_ctx = load_mulquant(g, n, "ctx.");
      p.mq_out = load_mulquant(g, n, "out.");
      p.exp_lut = load_lut(g, n, "exp_lut", LutKind::kExp);
      p.recip_lut = load_lut(g, n, "recip_lut", LutKind::kReciprocal);
      p.probs_frac = static_cast<int>(a.get_int("probs_frac", 12));
      p.probs_bits = p.probs_frac + 1;
      auto hook = [&](const std::string& what, const Tensor& t) {
        if (trace) (*trace)[internal_edge(n.id, what)] = t;
      };
      return ikernels::attention(x, p, hook);
    }
    case OpKind::kBatchNorm:
      fail(ErrorKind::kNotFullyFused, "batchnorm '" + n.id + "' was not fused");
    case OpKind::kQuantStub:
    case OpKind::kDequantStub:
      break;
  }
  fail(ErrorKind::kInvalidGraph, "unexpected stub '" + n.id + "' inside the integer body");
}

}  // namespace

Tensor exec_float(const Graph& g, const Tensor& x, Trace* trace) {
  return FloatRunner(g, false).run(x, trace);
}

Tensor exec_fakequant(const Graph& g, const Tensor& x, Trace* trace) {
  return FloatRunner(g, true).run(x, trace);
}

Tensor exec_int(const Graph& g, const Tensor& x_q, Trace* trace, const IntRunOptions& opts) {
  require(!x_q.is_float(), ErrorKind::kInvalidArgument, "integer execution needs integer codes");
  const Node& qs = stub(g, OpKind::kQuantStub);
  const Node& ds = stub(g, OpKind::kDequantStub);
  const auto before = instrument::float_op_count();
  std::map<std::string, Tensor> env;
  env[qs.outputs[0]] = x_q;
  auto get = [&](const std::string& e) -> const Tensor* {
    if (opts.forced) {
      auto it = opts.forced->find(e);
      if (it != opts.forced->end()) return &it->second;
    }
    auto it = env.find(e);
    require(it != env.end(), ErrorKind::kInvalidGraph, "edge '" + e + "' has no value");
    return &it->second;
  };
  for (const auto& n : g.nodes) {
    if (n.kind == OpKind::kQuantStub || n.kind == OpKind::kDequantStub) continue;
    std::vector<const Tensor*> in;
    for (const auto& e : n.inputs) in.push_back(get(e));
    env[n.outputs[0]] = int_eval(g, n, in, trace);
  }
  Tensor out = *get(ds.inputs[0]);
  if (trace) {
    for (const auto& [k, v] : env) (*trace)[k] = v;
  }
  if (opts.assert_int_only) {
    const auto after = instrument::float_op_count();
    require(after == before, ErrorKind::kFloatOpInIntegerPath,
            std::to_string(after - before) + " float operations ran on the integer path");
  }
  return out;
}

Tensor quantize_input(const Graph& g, const Tensor& x) {
  check_input(g, x);
  return quantize(x, stub_qp(stub(g, OpKind::kQuantStub)));
}

Tensor dequantize_output(const Graph& g, const Tensor& y_q) {
  return dequantize(y_q, stub_qp(stub(g, OpKind::kDequantStub)));
}

Tensor exec_deployed(const Graph& g, const Tensor& x, Trace* trace) {
  return dequantize_output(g, exec_int(g, quantize_input(g, x), trace));
}

std::vector<std::int64_t> argmax_rows(const Tensor& t) {
  require(t.rank() >= 1 && t.size() > 0, ErrorKind::kInvalidArgument, "argmax of an empty tensor");
  const auto cols = t.dim(t.rank() - 1);
  const auto rows = t.size() / cols;
  std::vector<std::int64_t> out;
  for (std::int64_t r = 0; r < rows; ++r) {
    std::int64_t best = 0;
    double bv = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) {
      const auto i = static_cast<std::size_t>(r * cols + c);
      const double v = t.is_float() ? t.floats()[i] : static_cast<double>(t.ints()[i]);
      if (c == 0 || v > bv) {
        best = c;
        bv = v;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace qlower
