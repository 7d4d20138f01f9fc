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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "qlower/analysis.hpp"
#include "qlower/calibrate.hpp"
#include "qlower/compare.hpp"
#include "qlower/error.hpp"
#include "qlower/executor.hpp"
#include "qlower/fixtures.hpp"
#include "qlower/fusion.hpp"
#include "qlower/instrument.hpp"
#include "qlower/kernels.hpp"
#include "qlower/quantizer.hpp"

namespace qlower {
namespace {

std::vector<Tensor> batches(const Graph& g, int count, std::uint64_t seed, std::int64_t n = 16) {
  Shape s = g.inputs.front().shape;
  s[0] = n;
  return random_batches(s, count, seed);
}

Graph calibrated_cnn(int bits, bool prefuse, std::uint64_t seed = 1) {
  const Graph g = fixture_cnn(seed);
  QConfig q;
  q.w_bits = bits;
  q.a_bits = bits;
  q.prefuse = prefuse;
  return calibrate_graph(g, batches(g, 4, seed + 100), q);
}

FuseMode fuse_mode(bool prefuse, FpSpec fp = {4, 12}) {
  FuseMode m;
  m.kind = prefuse ? FuseKind::kPrefuse : FuseKind::kChannelwise;
  m.fp = fp;
  return m;
}

// Independent scalar-loop forward of the fixture CNN.
std::vector<double> scalar_cnn(const Graph& g, const Tensor& x) {
  Shape shape = x.shape();
  std::vector<double> a(x.floats().begin(), x.floats().end());
  for (const auto& n : g.nodes) {
    if (n.kind == OpKind::kConv2d) {
      const auto& w = g.param(n, "weight");
      const auto st = n.attrs.get_int("stride"), pad = n.attrs.get_int("padding");
      const auto N = shape[0], C = shape[1], H = shape[2], W = shape[3];
      const auto O = w.dim(0), K = w.dim(2);
      const auto OH = (H + 2 * pad - K) / st + 1, OW = (W + 2 * pad - K) / st + 1;
      std::vector<double> y(static_cast<std::size_t>(N * O * OH * OW), 0.0);
      for (std::int64_t b = 0; b < N; ++b)
        for (std::int64_t o = 0; o < O; ++o)
          for (std::int64_t i = 0; i < OH; ++i)
            for (std::int64_t j = 0; j < OW; ++j) {
              double s = 0;
              for (std::int64_t c = 0; c < C; ++c)
                for (std::int64_t u = 0; u < K; ++u)
                  for (std::int64_t v = 0; v < K; ++v) {
                    const auto hi = i * st - pad + u, wj = j * st - pad + v;
                    if (hi < 0 || hi >= H || wj < 0 || wj >= W) continue;
                    s += a[static_cast<std::size_t>(((b * C + c) * H + hi) * W + wj)] *
                         w.floats()[static_cast<std::size_t>(((o * C + c) * K + u) * K + v)];
                  }
              y[static_cast<std::size_t>(((b * O + o) * OH + i) * OW + j)] = s;
            }
      a = std::move(y);
      shape = {N, O, OH, OW};
    } else if (n.kind == OpKind::kBatchNorm) {
      const auto np = NormParams::from_node(g, n);
      const auto hw = shape[2] * shape[3];
      for (std::size_t k = 0; k < a.size(); ++k) {
        const auto c = static_cast<std::size_t>((static_cast<std::int64_t>(k) / hw) % shape[1]);
        a[k] = np.gamma[c] * (a[k] - np.mean[c]) / std::sqrt(np.var[c] + np.eps) + np.beta[c];
      }
    } else if (n.kind == OpKind::kRelu) {
      for (auto& v : a) v = std::max(0.0, v);
    } else if (n.kind == OpKind::kLinear) {
      const auto& w = g.param(n, "weight");
      const auto& b = g.param(n, "bias");
      const auto N = shape[0], O = w.dim(0), K = w.dim(1);
      std::vector<double> y(static_cast<std::size_t>(N * O));
      for (std::int64_t r = 0; r < N; ++r)
        for (std::int64_t o = 0; o < O; ++o) {
          double s = b.floats()[static_cast<std::size_t>(o)];
          for (std::int64_t k = 0; k < K; ++k)
            s += a[static_cast<std::size_t>(r * K + k)] * w.floats()[static_cast<std::size_t>(o * K + k)];
          y[static_cast<std::size_t>(r * O + o)] = s;
        }
      a = std::move(y);
      shape = {N, O};
    }
  }
  return a;
}

TEST(ExecFloat, MatchesScalarLoop) {
  const Graph g = fixture_cnn(3);
  const Tensor x = batches(g, 1, 7, 4)[0];
  const auto y = exec_float(g, x);
  const auto ref = scalar_cnn(g, x);
  ASSERT_EQ(static_cast<std::size_t>(y.size()), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_NEAR(y.floats()[i], ref[i], 1e-5 * std::max(1.0, std::fabs(ref[i])));
  }
}

TEST(ExecFloat, OneByOneConv) {
  Graph g;
  g.inputs.push_back({"x", {1, 1, 1, 1}, DataType::float32()});
  g.tensors["w"] = Tensor::from_floats({1, 1, 1, 1}, {2.0f});
  Node c;
  c.id = "c";
  c.kind = OpKind::kConv2d;
  c.inputs = {"x"};
  c.outputs = {"y"};
  c.params["weight"] = "w";
  g.nodes.push_back(c);
  g.outputs = {"y"};
  EXPECT_EQ(exec_float(infer_shapes(g), Tensor::from_floats({1, 1, 1, 1}, {3.0f})).floats()[0], 6.0f);
}

TEST(Calibrate, AnnotatesEverything) {
  const Graph c = calibrated_cnn(8, false);
  EXPECT_EQ(c.stage(), kStageCalibrated);
  EXPECT_TRUE(validate(c).empty());
  for (const auto& n : c.nodes) {
    if (n.kind == OpKind::kConv2d || n.kind == OpKind::kLinear) {
      const auto* qp = c.weight_qp(n.params.at("weight"));
      ASSERT_NE(qp, nullptr) << n.id;
      EXPECT_EQ(static_cast<std::int64_t>(qp->channels()), c.param(n, "weight").dim(0));
    }
  }
  for (const auto& e : quant_points(c)) EXPECT_NE(c.edge_qp(e), nullptr) << e;
}

TEST(Calibrate, EmptyDataIsAnError) {
  try {
    calibrate_graph(fixture_cnn(1), {}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyCalibration);
  }
}

TEST(Calibrate, SegmentsFoldBnAndRelu) {
  const auto segs = find_segments(fixture_cnn(1));
  ASSERT_EQ(segs.size(), 4u);
  EXPECT_EQ(segs[0].bn, "bn0");
  EXPECT_EQ(segs[0].relu, "relu0");
  EXPECT_EQ(segs[3].op, "fc");
  EXPECT_TRUE(segs[3].bn.empty());
}

TEST(ExecFakeQuant, AgreesWithFloat) {
  // A random-init classifier has many rows whose top-2 logits sit within one
  // output step; quantized logits tie there. Rows with a clear float margin
  // must keep their argmax.
  const Graph c = calibrated_cnn(8, false);
  const double step = c.edge_qp("logits")->scale_at(0);
  std::int64_t agree = 0, total = 0;
  for (const auto& x : batches(c, 16, 55, 64)) {
    const auto yf = exec_float(c, x);
    const auto a = argmax_rows(yf);
    const auto b = argmax_rows(exec_fakequant(c, x));
    const auto k = yf.shape().back();
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto row = yf.floats().subspan(i * static_cast<std::size_t>(k), static_cast<std::size_t>(k));
      std::vector<float> v(row.begin(), row.end());
      std::partial_sort(v.begin(), v.begin() + 2, v.end(), std::greater<>());
      if (v[0] - v[1] <= 2 * step) continue;
      agree += a[i] == b[i];
      ++total;
    }
  }
  ASSERT_GT(total, 500);
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(total), 0.99);
}

TEST(ExecFakeQuant, MissingAnnotationNamesEdge) {
  Graph c = calibrated_cnn(8, false);
  c.edge_quant.erase("relu1.out");
  try {
    exec_fakequant(c, batches(c, 1, 1)[0]);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingAnnotation);
    EXPECT_NE(std::string(e.what()).find("relu1.out"), std::string::npos);
  }
}

TEST(ExecFakeQuant, FineGridConvergesToFloat) {
  const Graph g = fixture_cnn(4);
  QConfig q;
  q.w_bits = 16;
  q.a_bits = 16;
  const auto data = batches(g, 2, 9);
  const Graph c = calibrate_graph(g, data, q);
  const Tensor& x = data[0];
  const auto a = exec_float(c, x);
  const auto b = exec_fakequant(c, x);
  for (std::int64_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.floats()[i], b.floats()[i], 2e-3);
}

TEST(Fuse, PrefuseStructure) {
  const Graph f = fuse_graph(calibrated_cnn(8, true), fuse_mode(true));
  EXPECT_EQ(f.stage(), kStageFused);
  EXPECT_FALSE(first_float_tensor(f).has_value());
  const auto* conv = f.find_node("conv0");
  const auto* mq = f.find_node("conv0.mq");
  ASSERT_NE(conv, nullptr);
  ASSERT_NE(mq, nullptr);
  EXPECT_EQ(conv->kind, OpKind::kConv2d);
  EXPECT_EQ(mq->kind, OpKind::kMulQuant);
  EXPECT_EQ(f.find_node("bn0"), nullptr);
  EXPECT_EQ(f.find_node("relu0"), nullptr);
  EXPECT_EQ(mq->inputs[0], conv->outputs[0]);
}

TEST(Fuse, ChannelwiseCarriesVectorMultiplier) {
  const Graph f = fuse_graph(calibrated_cnn(4, false), fuse_mode(false));
  const auto mq = mulquant_from_node(f, *f.find_node("conv1.mq"));
  EXPECT_EQ(mq.channels(), 8u);
  EXPECT_TRUE(mq.relu_folded);
  EXPECT_EQ(mq.clamp_lo, mq.out_qp.zero_point_at(0));
}

TEST(Fuse, ModeMustMatchCalibration) {
  try {
    fuse_graph(calibrated_cnn(8, false), fuse_mode(true));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(Fuse, StandaloneBatchNormIsUnfusable) {
  Graph g = fixture_cnn(1, 1);
  // Feed bn0 from the graph input directly: no conv in front of it.
  Node bn = *g.find_node("bn0");
  bn.id = "bn_in";
  bn.inputs = {"x"};
  bn.outputs = {"bn_in.out"};
  // The batchnorm params are per channel; match the 3 input channels.
  for (const auto& [role, name] : bn.params) {
    Tensor t = g.tensors.at(name);
    std::vector<float> v(t.floats().begin(), t.floats().begin() + 3);
    bn.params[role] = g.add_tensor(name + ".in", Tensor::from_floats({3}, v));
  }
  g.nodes[0].inputs = {"bn_in.out"};
  g.nodes.insert(g.nodes.begin(), bn);
  g = infer_shapes(g);
  const Graph c = calibrate_graph(g, batches(g, 2, 3), {});
  try {
    fuse_graph(c, fuse_mode(false));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnfusablePattern);
    EXPECT_NE(std::string(e.what()).find("bn_in"), std::string::npos);
  }
}

TEST(ExecInt, IntegerOnlyAndDeterministic) {
  const Graph c = calibrated_cnn(8, false);
  const Graph f = fuse_graph(c, fuse_mode(false));
  const Tensor x = batches(c, 1, 77)[0];
  const Tensor xq = quantize_input(f, x);
  IntRunOptions opts;
  opts.assert_int_only = true;
  const auto before = instrument::float_op_count();
  const Tensor y1 = exec_int(f, xq, nullptr, opts);
  EXPECT_EQ(instrument::float_op_count(), before);
  EXPECT_FALSE(y1.is_float());
  EXPECT_EQ(exec_int(f, xq), y1);
}

TEST(ExecInt, AccurateAtWideFraction) {
  // With a 20-bit multiplier fraction the integer path tracks fake-quant to
  // within one output step per layer.
  const Graph c = calibrated_cnn(8, false);
  const Graph f = fuse_graph(c, fuse_mode(false, {8, 20}));
  const auto r = compare_paths(c, f, batches(c, 4, 78));
  for (const auto& l : r.layers) EXPECT_LE(l.max_lsb, 1.0) << l.edge;
  EXPECT_GE(r.argmax_agreement, 0.95);
}

TEST(Compare, IdenticalPathsAndDeterminism) {
  const Graph c = calibrated_cnn(8, false);
  const Graph f = fuse_graph(c, fuse_mode(false));
  const auto data = batches(c, 2, 79);
  const auto a = compare_paths(c, f, data);
  const auto b = compare_paths(c, f, data);
  EXPECT_EQ(a.to_json(false), b.to_json(false));
  EXPECT_EQ(a.samples, 32);
  EXPECT_FALSE(a.layers.empty());
}

TEST(Compare, VitBlockReportsEveryLayer) {
  const Graph g = fixture_vit_block(5);
  const Graph c = calibrate_graph(g, batches(g, 4, 80, 4), {});
  const Graph f = fuse_graph(c, fuse_mode(false));
  const auto r = compare_paths(c, f, batches(g, 2, 81, 4));
  std::set<std::string> nodes;
  for (const auto& l : r.layers) nodes.insert(l.node.substr(0, l.node.find('.')));
  for (const char* id : {"ln1", "attn", "res1", "ln2", "fc1", "gelu", "fc2", "res2"}) {
    EXPECT_TRUE(nodes.count(id)) << id;
  }
}

TEST(Attention, SingleTokenIsValuePath) {
  const Graph g = fixture_attention(6, 1, 16, 2);
  const Graph c = calibrate_graph(g, batches(g, 4, 82, 8), {});
  const Graph f = fuse_graph(c, fuse_mode(false, {8, 20}));
  Trace t;
  exec_int(f, quantize_input(f, batches(g, 1, 83, 2)[0]), &t);
  const auto& probs = t.at(internal_edge("attn", "probs"));
  for (auto p : probs.ints()) EXPECT_NEAR(static_cast<double>(p), 4096.0, 2.0);
}

TEST(Attention, BlockMatchesFakeQuantAtWideFraction) {
  const Graph g = fixture_attention(7);
  const Graph c = calibrate_graph(g, batches(g, 8, 84), {});
  const Graph f = fuse_graph(c, fuse_mode(false, {8, 24}));
  const auto r = compare_paths(c, f, batches(g, 4, 85));
  for (const auto& l : r.layers) {
    if (l.edge == "y") EXPECT_LE(l.max_lsb, 2.0);
  }
}

TEST(LayerNorm, RunningModeFoldsLikeBatchNorm) {
  const Graph g = fixture_vit_block(8);
  QConfig q;
  q.layernorm_mode = "running";
  const Graph c = calibrate_graph(g, batches(g, 4, 86, 4), q);
  const Graph f = fuse_graph(c, fuse_mode(false));
  const auto* ln = f.find_node("ln1");
  ASSERT_NE(ln, nullptr);
  EXPECT_EQ(ln->kind, OpKind::kMulQuant);
}

TEST(LayerNorm, RunningModeWithoutStatsIsMissing) {
  const Graph g = fixture_vit_block(8);
  Graph c = calibrate_graph(g, batches(g, 2, 87, 4), {});
  c.find_node("ln1")->params.erase("running_var");
  Graph out;
  try {
    layernorm_fold(c, *c.find_node("ln1"), LayerNormMode::kRunning, fuse_mode(false), out, "a", "b");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingAnnotation);
  }
}

}  // namespace
}  // namespace qlower
