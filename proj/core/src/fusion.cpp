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

#include "qlower/fusion.hpp"

#include <cmath>
#include <map>
#include <set>

#include "qlower/analysis.hpp"
#include "qlower/calibrate.hpp"
#include "qlower/error.hpp"
#include "qlower/lut.hpp"
#include "qlower/quantizer.hpp"
#include "qlower/rounding.hpp"

namespace qlower {

namespace {

std::vector<double> to_doubles(const Tensor& t) {
  auto f = t.floats();
  return {f.begin(), f.end()};
}

}  // namespace

NormParams NormParams::from_node(const Graph& g, const Node& bn) {
  NormParams np;
  np.gamma = to_doubles(g.param(bn, "gamma"));
  np.beta = to_doubles(g.param(bn, "beta"));
  np.mean = to_doubles(g.param(bn, "mean"));
  np.var = to_doubles(g.param(bn, "var"));
  np.eps = bn.attrs.get_double("eps", 1e-5);
  return np;
}

namespace {

void check_norm(const NormParams& np) {
  const auto c = np.gamma.size();
  require(np.beta.size() == c && np.mean.size() == c && np.var.size() == c,
          ErrorKind::kShapeMismatch, "normalization vectors differ in length");
  require(np.eps >= 0.0, ErrorKind::kInvalidArgument, "normalization eps is negative");
  for (std::size_t i = 0; i < c; ++i) {
    require(np.var[i] >= 0.0, ErrorKind::kInvalidArgument,
            "negative running variance on channel " + std::to_string(i));
    require(np.var[i] + np.eps > 0.0, ErrorKind::kInvalidArgument,
            "zero variance with zero eps on channel " + std::to_string(i));
  }
}

}  // namespace

ChannelwiseResult bn_channelwise(const NormParams& np) {
  check_norm(np);
  ChannelwiseResult r;
  for (std::size_t i = 0; i < np.channels(); ++i) {
    const double inv = 1.0 / std::sqrt(np.var[i] + np.eps);
    r.gamma_star.push_back(np.gamma[i] * inv);
    r.beta_star.push_back(np.beta[i] - np.gamma[i] * np.mean[i] * inv);
  }
  return r;
}

PrefuseResult bn_prefuse(const Tensor& w, const NormParams& np, const Tensor* bias) {
  require(w.is_float() && w.rank() >= 1, ErrorKind::kInvalidArgument,
          "prefuse expects a float weight tensor");
  require(w.dim(0) == static_cast<std::int64_t>(np.channels()), ErrorKind::kShapeMismatch,
          "weight has " + std::to_string(w.dim(0)) + " output channels, normalization has " +
              std::to_string(np.channels()));
  const auto cw = bn_channelwise(np);
  PrefuseResult r{w, cw.beta_star};
  const auto inner = w.size() / w.dim(0);
  auto ws = r.w.floats();
  for (std::int64_t o = 0; o < w.dim(0); ++o) {
    const double gs = cw.gamma_star[static_cast<std::size_t>(o)];
    for (std::int64_t k = 0; k < inner; ++k) {
      auto& v = ws[static_cast<std::size_t>(o * inner + k)];
      v = static_cast<float>(gs * v);
    }
    if (bias) r.beta_star[static_cast<std::size_t>(o)] += gs * bias->floats()[static_cast<std::size_t>(o)];
  }
  return r;
}

std::string to_string(FuseKind k) { return k == FuseKind::kPrefuse ? "prefuse" : "channelwise"; }

FuseKind fuse_kind_from_string(const std::string& name) {
  if (name == "prefuse") return FuseKind::kPrefuse;
  if (name == "channelwise") return FuseKind::kChannelwise;
  fail(ErrorKind::kConfig, "unknown fuse mode '" + name + "'");
}

std::string to_string(LayerNormMode m) {
  return m == LayerNormMode::kInstant ? "instant" : "running";
}

LayerNormMode layernorm_mode_from_string(const std::string& name) {
  if (name == "instant") return LayerNormMode::kInstant;
  if (name == "running") return LayerNormMode::kRunning;
  fail(ErrorKind::kConfig, "unknown layernorm mode '" + name + "'");
}

std::optional<std::string> first_float_tensor(const Graph& g) {
  for (const auto& [name, t] : g.tensors) {
    if (t.is_float()) return name;
  }
  return std::nullopt;
}

namespace {

const QuantParams& need_qp(const Graph& g, const std::string& edge, const std::string& node) {
  const auto* qp = g.edge_qp(edge);
  if (!qp) {
    fail(ErrorKind::kMissingAnnotation,
         "edge '" + edge + "' consumed by node '" + node + "' has no quant params");
  }
  return *qp;
}

// Integer weights of `role`: frozen AdaRound codes when present, otherwise
// the calibrated weight params applied to the float tensor.
std::pair<Tensor, QuantParams> int_weight(const Graph& g, const Node& n, const std::string& role) {
  const auto& name = n.params.at(role);
  const auto* qp = g.weight_qp(name);
  if (!qp) {
    fail(ErrorKind::kMissingAnnotation,
         "weight '" + name + "' of node '" + n.id + "' has no quant params");
  }
  for (auto z : qp->zero_point) {
    require(z == 0, ErrorKind::kConfig,
            "integer lowering needs symmetric weights; '" + name + "' has a zero point");
  }
  auto frozen = n.params.find(role + "_q");
  if (frozen != n.params.end()) return {g.tensors.at(frozen->second), *qp};
  return {quantize(g.tensors.at(name), *qp), *qp};
}

std::vector<double> bias_of(const Graph& g, const Node& n, const std::string& role) {
  if (!n.has_param(role)) return {};
  return to_doubles(g.param(n, role));
}

FixedPointCode encode_wide(double v, int frac, const std::string& what) {
  return encode_fixed(v, FpSpec{kBiasBits - frac, frac}, what);
}

struct Fuser {
  const Graph& g;
  const FuseMode& mode;
  Graph out;
  std::map<std::string, std::string> rename;

  std::string edge(const std::string& e) const {
    auto it = rename.find(e);
    return it == rename.end() ? e : it->second;
  }

  void quantstubs() {
    for (const auto& in : g.inputs) {
      const auto& qp = need_qp(g, in.name, "quantstub");
      Node n;
      n.id = "quant." + in.name;
      n.kind = OpKind::kQuantStub;
      n.inputs = {in.name};
      n.outputs = {in.name + ".q"};
      n.attrs.set("scale_bits", double_bits(qp.scale_at(0)));
      n.attrs.set("zero_point", qp.zero_point_at(0));
      n.attrs.set("bits", std::int64_t{qp.bits});
      n.attrs.set("signed", std::int64_t{qp.is_signed ? 1 : 0});
      n.attrs.set("symmetric", std::int64_t{qp.symmetric ? 1 : 0});
      rename[in.name] = in.name + ".q";
      out.edge_quant[in.name + ".q"] = qp;
      out.nodes.push_back(std::move(n));
    }
  }

  void segment(const Node& op, const Segment& seg) {
    const auto& in_qp = need_qp(g, seg.input, op.id);
    const auto& out_qp = need_qp(g, seg.output, op.id);
    auto [wq, wqp] = int_weight(g, op, "weight");
    std::vector<double> gamma_star;
    std::vector<double> beta_star = bias_of(g, op, "bias");
    if (!seg.bn.empty()) {
      const auto cw = bn_channelwise(NormParams::from_node(g, *g.find_node(seg.bn)));
      gamma_star = cw.gamma_star;
      if (beta_star.empty()) beta_star.assign(gamma_star.size(), 0.0);
      for (std::size_t i = 0; i < beta_star.size(); ++i) {
        beta_star[i] = cw.beta_star[i] + gamma_star[i] * beta_star[i];
      }
    }
    Node n;
    n.id = op.id;
    n.kind = op.kind;
    n.attrs = op.attrs;
    n.attrs.set("input_zero_point", in_qp.zero_point_at(0));
    n.inputs = {edge(seg.input)};
    n.outputs = {op.id + ".acc"};
    n.params["weight"] = out.add_tensor(op.params.at("weight"), std::move(wq));
    out.weight_quant[n.params["weight"]] = wqp;
    auto mq = build_mulquant(wqp.scale, in_qp.scale_at(0), out_qp.scale_at(0), gamma_star,
                             beta_star, mode.fp, out_qp, !seg.relu.empty());
    const auto& shape = g.edge_shapes.at(seg.output);
    mq.channel_axis = op.kind == OpKind::kConv2d ? 1 : static_cast<int>(shape.size()) - 1;
    auto mqn = mulquant_node(out, op.id + ".mq", n.outputs[0], seg.output, mq);
    out.nodes.push_back(std::move(n));
    out.nodes.push_back(std::move(mqn));
    out.edge_quant[seg.output] = out_qp;
  }

  void add(const Node& n) {
    const auto& qa = need_qp(g, n.inputs[0], n.id);
    const auto& qb = need_qp(g, n.inputs[1], n.id);
    const auto& qo = need_qp(g, n.outputs[0], n.id);
    Node m{n.id, OpKind::kAdd, {}, {edge(n.inputs[0]), edge(n.inputs[1])}, n.outputs, {}};
    m.attrs.set("a_zero", qa.zero_point_at(0));
    m.attrs.set("b_zero", qb.zero_point_at(0));
    m.attrs.set("a_mult", encode_fixed(qa.scale_at(0) / qo.scale_at(0), mode.fp,
                                       "add multiplier of '" + n.id + "'").code);
    m.attrs.set("b_mult", encode_fixed(qb.scale_at(0) / qo.scale_at(0), mode.fp,
                                       "add multiplier of '" + n.id + "'").code);
    m.attrs.set("frac", std::int64_t{mode.fp.frac_bits});
    m.attrs.set("out_zero", qo.zero_point_at(0));
    m.attrs.set("lo", qo.qmin());
    m.attrs.set("hi", qo.qmax());
    out.edge_quant[n.outputs[0]] = qo;
    out.nodes.push_back(std::move(m));
  }

  void gelu(const Node& n) {
    const auto& qi = need_qp(g, n.inputs[0], n.id);
    const auto& qo = need_qp(g, n.outputs[0], n.id);
    const auto codes = qi.qmax() - qi.qmin() + 1;
    const double s = qi.scale_at(0);
    const auto zi = qi.zero_point_at(0);
    LutTable lut;
    if (codes <= mode.lut_entries) {
      // One entry per input code.
      int e = 2;
      while (e < codes) e *= 2;
      const double lo = static_cast<double>(qi.qmin() - zi) * s;
      lut = lut_build(LutKind::kGelu, lo, lo + (e - 1) * s, e, qi, mode.fp, qo);
    } else {
      lut = lut_build(LutKind::kGelu, -mode.gelu_clip, mode.gelu_clip, mode.lut_entries, qi,
                      mode.fp, qo);
    }
    Node m{n.id, OpKind::kGelu, {}, {edge(n.inputs[0])}, n.outputs, {}};
    store_lut(out, m, "lut", lut);
    m.attrs.set("in_zero", zi);
    m.attrs.set("id_mult", encode_wide(s / qo.scale_at(0), mode.fp.frac_bits,
                                       "gelu identity multiplier").code);
    m.attrs.set("id_frac", std::int64_t{mode.fp.frac_bits});
    m.attrs.set("out_zero", qo.zero_point_at(0));
    m.attrs.set("lo", qo.qmin());
    m.attrs.set("hi", qo.qmax());
    out.edge_quant[n.outputs[0]] = qo;
    out.nodes.push_back(std::move(m));
  }

  std::pair<LutTable, LutTable> softmax_luts(const QuantParams& scores) const {
    const double s = scores.scale_at(0);
    const int e = mode.lut_entries;
    // Aligned so that entry k is the row-max difference of k - (e - 1) codes.
    auto in_qp = QuantParams::per_tensor(s, 0, 16, true, true);
    auto exp_lut = lut_build(LutKind::kExp, -(e - 1) * s, 0.0, e, in_qp,
                             FpSpec{2, mode.lut_frac});
    return {exp_lut, reciprocal_lut(e, FpSpec{2, 14})};
  }

  int probs_frac() const {
    auto it = g.meta.find("probs_frac");
    return it == g.meta.end() ? 12 : std::stoi(it->second);
  }

  void softmax(const Node& n) {
    const auto& qi = need_qp(g, n.inputs[0], n.id);
    auto [exp_lut, recip_lut] = softmax_luts(qi);
    Node m{n.id, OpKind::kSoftmax, {}, {edge(n.inputs[0])}, n.outputs, {}};
    store_lut(out, m, "exp_lut", exp_lut);
    store_lut(out, m, "recip_lut", recip_lut);
    m.attrs.set("probs_frac", std::int64_t{probs_frac()});
    out.edge_quant[n.outputs[0]] = probs_qparams(probs_frac());
    out.nodes.push_back(std::move(m));
  }

  void attention(const Node& n) {
    const auto& qx = need_qp(g, n.inputs[0], n.id);
    const auto& qo = need_qp(g, n.outputs[0], n.id);
    auto internal = [&](const char* what) -> const QuantParams& {
      return need_qp(g, internal_edge(n.id, what), n.id);
    };
    const auto& qq = internal("q");
    const auto& qk = internal("k");
    const auto& qv = internal("v");
    const auto& qs = internal("scores");
    const auto& qc = internal("ctx");
    const auto heads = n.attrs.get_int("heads");
    const auto e = g.edge_shapes.at(n.inputs[0]).back();
    const double d = static_cast<double>(e / heads);
    Node m{n.id, OpKind::kAttention, {}, {edge(n.inputs[0])}, n.outputs, {}};
    m.attrs.set("heads", heads);
    m.attrs.set("input_zero_point", qx.zero_point_at(0));
    m.attrs.set("probs_frac", std::int64_t{probs_frac()});
    auto proj = [&](const char* w, const char* b, const QuantParams& in,
                    const QuantParams& o, const std::string& prefix) {
      auto [wq, wqp] = int_weight(g, n, w);
      m.params[w] = out.add_tensor(n.params.at(w), std::move(wq));
      out.weight_quant[m.params[w]] = wqp;
      auto mq = build_mulquant(wqp.scale, in.scale_at(0), o.scale_at(0), {}, bias_of(g, n, b),
                               mode.fp, o, false);
      mq.channel_axis = 2;
      store_mulquant(out, m, prefix, mq);
    };
    proj("wq", "bq", qx, qq, "q.");
    proj("wk", "bk", qx, qk, "k.");
    proj("wv", "bv", qx, qv, "v.");
    auto smq = build_mulquant({qq.scale_at(0)}, qk.scale_at(0), qs.scale_at(0),
                              {1.0 / std::sqrt(d)}, {}, mode.fp, qs, false);
    store_mulquant(out, m, "scores.", smq);
    // Probabilities carry an exact 2^-frac scale, applied as a shift.
    auto cmq = build_mulquant({1.0}, qv.scale_at(0), qc.scale_at(0), {}, {}, mode.fp, qc, false);
    cmq.post_shift = probs_frac();
    store_mulquant(out, m, "ctx.", cmq);
    proj("wo", "bo", qc, qo, "out.");
    auto [exp_lut, recip_lut] = softmax_luts(qs);
    store_lut(out, m, "exp_lut", exp_lut);
    store_lut(out, m, "recip_lut", recip_lut);
    for (const char* what : {"q", "k", "v", "scores", "ctx"}) {
      out.edge_quant[internal_edge(n.id, what)] = internal(what);
    }
    out.edge_quant[internal_edge(n.id, "probs")] = probs_qparams(probs_frac());
    out.edge_quant[n.outputs[0]] = qo;
    out.nodes.push_back(std::move(m));
  }

  void pass_through(const Node& n) {
    const auto& qi = need_qp(g, n.inputs[0], n.id);
    Node m{n.id, n.kind, n.attrs, {edge(n.inputs[0])}, n.outputs, {}};
    if (n.kind == OpKind::kRelu || n.kind == OpKind::kAvgPool) {
      m.attrs.set("zero_point", qi.zero_point_at(0));
    }
    out.edge_quant[n.outputs[0]] = qi;
    out.nodes.push_back(std::move(m));
  }

  void dequantstubs() {
    std::vector<std::string> outs;
    for (const auto& o : g.outputs) {
      const auto& qp = need_qp(g, o, "dequantstub");
      Node n;
      n.id = "dequant." + o;
      n.kind = OpKind::kDequantStub;
      n.inputs = {edge(o)};
      n.outputs = {o + ".float"};
      n.attrs.set("scale_bits", double_bits(qp.scale_at(0)));
      n.attrs.set("zero_point", qp.zero_point_at(0));
      n.attrs.set("bits", std::int64_t{qp.bits});
      n.attrs.set("signed", std::int64_t{qp.is_signed ? 1 : 0});
      n.attrs.set("symmetric", std::int64_t{qp.symmetric ? 1 : 0});
      outs.push_back(n.outputs[0]);
      out.nodes.push_back(std::move(n));
    }
    out.outputs = outs;
  }
};

}  // namespace

std::vector<Node> layernorm_fold(const Graph& g, const Node& ln, LayerNormMode mode,
                                 const FuseMode& fm, Graph& out, const std::string& input,
                                 const std::string& output) {
  const auto& qi = need_qp(g, ln.inputs[0], ln.id);
  const auto& qo = need_qp(g, ln.outputs[0], ln.id);
  const auto f = g.edge_shapes.at(ln.inputs[0]).back();
  std::vector<double> gamma(static_cast<std::size_t>(f), 1.0);
  std::vector<double> beta(static_cast<std::size_t>(f), 0.0);
  if (ln.has_param("gamma")) gamma = to_doubles(g.param(ln, "gamma"));
  if (ln.has_param("beta")) beta = to_doubles(g.param(ln, "beta"));
  const double eps = ln.attrs.get_double("eps", 1e-5);
  if (mode == LayerNormMode::kRunning) {
    if (!ln.has_param("running_mean") || !ln.has_param("running_var")) {
      fail(ErrorKind::kMissingAnnotation,
           "layernorm '" + ln.id + "' has no recorded running statistics");
    }
    NormParams np;
    np.gamma = gamma;
    np.beta = beta;
    np.mean.assign(gamma.size(), g.param(ln, "running_mean").floats()[0]);
    np.var.assign(gamma.size(), g.param(ln, "running_var").floats()[0]);
    np.eps = eps;
    const auto cw = bn_channelwise(np);
    auto mq = build_mulquant({1.0}, qi.scale_at(0), qo.scale_at(0), cw.gamma_star, cw.beta_star,
                             fm.fp, qo, false);
    mq.input_zero_point = qi.zero_point_at(0);
    mq.channel_axis = static_cast<int>(g.edge_shapes.at(ln.inputs[0]).size()) - 1;
    return {mulquant_node(out, ln.id, input, output, mq)};
  }
  Node m{ln.id, OpKind::kLayerNorm, {}, {input}, {output}, {}};
  std::vector<std::int64_t> gc, bc;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    gc.push_back(encode_fixed(gamma[i], fm.fp, "layernorm gamma " + std::to_string(i)).code);
    bc.push_back(encode_fixed(beta[i], fm.fp, "layernorm beta " + std::to_string(i)).code);
  }
  m.params["gamma"] = out.add_tensor(ln.id + ".gamma", Tensor::from_ints({f}, gc, fm.fp.total_bits(), true));
  m.params["beta"] = out.add_tensor(ln.id + ".beta", Tensor::from_ints({f}, bc, fm.fp.total_bits(), true));
  const int var_frac = 8;
  const double s = qi.scale_at(0);
  m.attrs.set("int_bits", std::int64_t{fm.fp.int_bits});
  m.attrs.set("frac_bits", std::int64_t{fm.fp.frac_bits});
  m.attrs.set("in_zero", qi.zero_point_at(0));
  m.attrs.set("eps_code",
              std::max<std::int64_t>(1, round_half_away(std::ldexp(eps / (s * s), var_frac))));
  m.attrs.set("var_frac", std::int64_t{var_frac});
  m.attrs.set("isqrt_frac", std::int64_t{14});
  m.attrs.set("out_mult", encode_wide(1.0 / qo.scale_at(0), fm.fp.frac_bits,
                                      "layernorm output multiplier").code);
  m.attrs.set("out_frac", std::int64_t{fm.fp.frac_bits});
  m.attrs.set("out_zero", qo.zero_point_at(0));
  m.attrs.set("lo", qo.qmin());
  m.attrs.set("hi", qo.qmax());
  return {m};
}

Graph fuse_graph(const Graph& g_in, const FuseMode& mode) {
  require(g_in.stage() == kStageCalibrated, ErrorKind::kConfig,
          "fuse_graph needs a calibrated graph, got stage '" + g_in.stage() + "'");
  auto it = g_in.meta.find("fuse_mode");
  if (it != g_in.meta.end() && it->second != to_string(mode.kind)) {
    fail(ErrorKind::kConfig, "graph was calibrated for " + it->second +
                                 " fusion but " + to_string(mode.kind) + " was requested");
  }
  const Graph g = infer_shapes(g_in);
  Fuser fu{g, mode, {}, {}};
  fu.out.inputs = g.inputs;
  fu.out.meta = g.meta;
  fu.out.meta["stage"] = kStageFused;
  fu.out.meta["fuse_mode"] = to_string(mode.kind);
  fu.out.meta["int_bits"] = std::to_string(mode.fp.int_bits);
  fu.out.meta["frac_bits"] = std::to_string(mode.fp.frac_bits);
  fu.quantstubs();

  std::map<std::string, Segment> heads;
  std::set<std::string> absorbed;
  for (const auto& s : find_segments(g)) {
    heads[s.op] = s;
    if (!s.bn.empty()) absorbed.insert(s.bn);
    if (!s.relu.empty()) absorbed.insert(s.relu);
  }
  for (const auto& n : g.nodes) {
    if (absorbed.count(n.id)) continue;
    switch (n.kind) {
      case OpKind::kConv2d:
      case OpKind::kLinear:
        fu.segment(n, heads.at(n.id));
        break;
      case OpKind::kBatchNorm:
        fail(ErrorKind::kUnfusablePattern,
             "batchnorm '" + n.id + "' does not follow a conv2d or linear node");
      case OpKind::kAdd:
        fu.add(n);
        break;
      case OpKind::kGelu:
        fu.gelu(n);
        break;
      case OpKind::kSoftmax:
        fu.softmax(n);
        break;
      case OpKind::kAttention:
        fu.attention(n);
        break;
      case OpKind::kLayerNorm: {
        const auto lm = layernorm_mode_from_string(n.attrs.get_string("mode", "instant"));
        for (auto& m : layernorm_fold(g, n, lm, mode, fu.out, fu.edge(n.inputs[0]), n.outputs[0])) {
          fu.out.nodes.push_back(std::move(m));
        }
        fu.out.edge_quant[n.outputs[0]] = need_qp(g, n.outputs[0], n.id);
        break;
      }
      case OpKind::kRelu:
      case OpKind::kMaxPool:
      case OpKind::kAvgPool:
      case OpKind::kFlatten:
        fu.pass_through(n);
        break;
      case OpKind::kMulQuant:
      case OpKind::kQuantStub:
      case OpKind::kDequantStub:
        fail(ErrorKind::kInvalidGraph, "node '" + n.id + "' is already lowered");
    }
  }
  fu.dequantstubs();
  if (auto name = first_float_tensor(fu.out)) {
    fail(ErrorKind::kInvalidGraph, "fused graph still holds float tensor '" + *name + "'");
  }
  return infer_shapes(fu.out);
}

}  // namespace qlower
