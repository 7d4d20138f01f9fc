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

#include "qlower/fixtures.hpp"

#include <cmath>
#include <random>

#include "qlower/analysis.hpp"

namespace qlower {

namespace {

class Init {
 public:
  explicit Init(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(Shape shape, double stddev, double mean = 0.0) {
    std::normal_distribution<double> d(mean, stddev);
    std::vector<float> v(static_cast<std::size_t>(element_count(shape)));
    for (auto& x : v) x = static_cast<float>(d(rng_));
    return Tensor::from_floats(std::move(shape), std::move(v));
  }

  Tensor uniform(Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<float> v(static_cast<std::size_t>(element_count(shape)));
    for (auto& x : v) x = static_cast<float>(d(rng_));
    return Tensor::from_floats(std::move(shape), std::move(v));
  }

  Tensor log_uniform(Shape shape, double lo, double hi) {
    auto t = uniform(std::move(shape), std::log(lo), std::log(hi));
    for (auto& x : t.floats()) x = static_cast<float>(std::exp(x));
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

Node make_node(const std::string& id, OpKind kind, std::vector<std::string> in, std::string out) {
  Node n;
  n.id = id;
  n.kind = kind;
  n.inputs = std::move(in);
  n.outputs = {std::move(out)};
  return n;
}

void add_bn(Graph& g, Init& init, const std::string& id, const std::string& in,
            const std::string& out, std::int64_t c, Tensor gamma) {
  Node bn = make_node(id, OpKind::kBatchNorm, {in}, out);
  bn.attrs.set("eps", 1e-5);
  bn.params["gamma"] = g.add_tensor(id + ".gamma", std::move(gamma));
  bn.params["beta"] = g.add_tensor(id + ".beta", init.normal({c}, 0.1));
  bn.params["mean"] = g.add_tensor(id + ".mean", init.normal({c}, 0.1));
  bn.params["var"] = g.add_tensor(id + ".var", init.uniform({c}, 0.5, 1.5));
  g.nodes.push_back(std::move(bn));
}

Graph finish(Graph g) {
  g.meta["stage"] = kStageFloat;
  return infer_shapes(g);
}

}  // namespace

Graph fixture_cnn(std::uint64_t seed, int blocks, std::int64_t width, std::int64_t classes) {
  Init init(seed);
  Graph g;
  g.inputs.push_back({"x", {1, 3, 8, 8}, DataType::float32()});
  std::string edge = "x";
  std::int64_t c = 3;
  std::int64_t hw = 8;
  for (int b = 0; b < blocks; ++b) {
    const auto id = std::to_string(b);
    const std::int64_t stride = b == 0 ? 1 : 2;
    Node conv = make_node("conv" + id, OpKind::kConv2d, {edge}, "conv" + id + ".out");
    conv.attrs.set("stride", stride);
    conv.attrs.set("padding", std::int64_t{1});
    conv.params["weight"] = g.add_tensor("conv" + id + ".weight",
                                         init.normal({width, c, 3, 3}, std::sqrt(2.0 / (9.0 * c))));
    g.nodes.push_back(std::move(conv));
    add_bn(g, init, "bn" + id, "conv" + id + ".out", "bn" + id + ".out", width,
           init.uniform({width}, 0.5, 1.5));
    g.nodes.push_back(make_node("relu" + id, OpKind::kRelu, {"bn" + id + ".out"}, "relu" + id + ".out"));
    edge = "relu" + id + ".out";
    c = width;
    hw = (hw + 2 - 3) / stride + 1;
  }
  const auto features = c * hw * hw;
  Node fc = make_node("fc", OpKind::kLinear, {edge}, "logits");
  fc.params["weight"] = g.add_tensor("fc.weight", init.normal({classes, features}, std::sqrt(1.0 / features)));
  fc.params["bias"] = g.add_tensor("fc.bias", init.normal({classes}, 0.05));
  g.nodes.push_back(std::move(fc));
  g.outputs = {"logits"};
  return finish(std::move(g));
}

namespace {

Node attention_node(Graph& g, Init& init, const std::string& id, const std::string& in,
                    const std::string& out, std::int64_t embed, std::int64_t heads) {
  Node n = make_node(id, OpKind::kAttention, {in}, out);
  n.attrs.set("heads", heads);
  const double sd = std::sqrt(1.0 / static_cast<double>(embed));
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    n.params[w] = g.add_tensor(id + "." + w, init.normal({embed, embed}, sd));
  }
  for (const char* b : {"bq", "bk", "bv", "bo"}) {
    n.params[b] = g.add_tensor(id + "." + b, init.normal({embed}, 0.02));
  }
  return n;
}

}  // namespace

Graph fixture_attention(std::uint64_t seed, std::int64_t tokens, std::int64_t embed,
                        std::int64_t heads) {
  Init init(seed);
  Graph g;
  g.inputs.push_back({"x", {1, tokens, embed}, DataType::float32()});
  g.nodes.push_back(attention_node(g, init, "attn", "x", "y", embed, heads));
  g.outputs = {"y"};
  return finish(std::move(g));
}

Graph fixture_vit_block(std::uint64_t seed, std::int64_t tokens, std::int64_t embed,
                        std::int64_t heads) {
  Init init(seed);
  Graph g;
  g.inputs.push_back({"x", {1, tokens, embed}, DataType::float32()});
  auto ln = [&](const std::string& id, const std::string& in, const std::string& out) {
    Node n = make_node(id, OpKind::kLayerNorm, {in}, out);
    n.attrs.set("eps", 1e-5);
    n.params["gamma"] = g.add_tensor(id + ".gamma", init.uniform({embed}, 0.8, 1.2));
    n.params["beta"] = g.add_tensor(id + ".beta", init.normal({embed}, 0.05));
    g.nodes.push_back(std::move(n));
  };
  ln("ln1", "x", "ln1.out");
  g.nodes.push_back(attention_node(g, init, "attn", "ln1.out", "attn.out", embed, heads));
  g.nodes.push_back(make_node("res1", OpKind::kAdd, {"x", "attn.out"}, "res1.out"));
  ln("ln2", "res1.out", "ln2.out");
  const auto hidden = 2 * embed;
  Node fc1 = make_node("fc1", OpKind::kLinear, {"ln2.out"}, "fc1.out");
  fc1.params["weight"] = g.add_tensor("fc1.weight", init.normal({hidden, embed}, std::sqrt(2.0 / embed)));
  fc1.params["bias"] = g.add_tensor("fc1.bias", init.normal({hidden}, 0.02));
  g.nodes.push_back(std::move(fc1));
  g.nodes.push_back(make_node("gelu", OpKind::kGelu, {"fc1.out"}, "gelu.out"));
  Node fc2 = make_node("fc2", OpKind::kLinear, {"gelu.out"}, "fc2.out");
  fc2.params["weight"] = g.add_tensor("fc2.weight", init.normal({embed, hidden}, std::sqrt(1.0 / hidden)));
  fc2.params["bias"] = g.add_tensor("fc2.bias", init.normal({embed}, 0.02));
  g.nodes.push_back(std::move(fc2));
  g.nodes.push_back(make_node("res2", OpKind::kAdd, {"res1.out", "fc2.out"}, "y"));
  g.outputs = {"y"};
  return finish(std::move(g));
}

Graph fixture_gamma_spread(std::uint64_t seed, int layers, double spread) {
  Init init(seed);
  Graph g;
  g.inputs.push_back({"x", {1, 4, 6, 6}, DataType::float32()});
  std::string edge = "x";
  std::int64_t c = 4;
  const std::int64_t width = 8;
  for (int l = 0; l < layers; ++l) {
    const auto id = std::to_string(l);
    Node conv = make_node("conv" + id, OpKind::kConv2d, {edge}, "conv" + id + ".out");
    conv.attrs.set("padding", std::int64_t{1});
    conv.params["weight"] = g.add_tensor("conv" + id + ".weight",
                                         init.normal({width, c, 3, 3}, std::sqrt(2.0 / (9.0 * c))));
    g.nodes.push_back(std::move(conv));
    add_bn(g, init, "bn" + id, "conv" + id + ".out", "bn" + id + ".out", width,
           init.log_uniform({width}, 1.0, spread));
    // Pin both ends of the spread.
    auto gm = g.tensors.at("bn" + id + ".gamma").floats();
    gm[0] = 1.0f;
    gm[1] = static_cast<float>(spread);
    edge = "bn" + id + ".out";
    c = width;
  }
  g.outputs = {edge};
  return finish(std::move(g));
}

std::vector<Tensor> random_batches(const Shape& shape, int count, std::uint64_t seed, double stddev) {
  Init init(seed);
  std::vector<Tensor> out;
  for (int i = 0; i < count; ++i) out.push_back(init.normal(shape, stddev));
  return out;
}

Tensor random_uniform(const Shape& shape, std::uint64_t seed, double lo, double hi) {
  return Init(seed).uniform(shape, lo, hi);
}

}  // namespace qlower
