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

#include <filesystem>
#include <fstream>

#include "qlower/error.hpp"
#include "qlower/analysis.hpp"
#include "qlower/fixtures.hpp"
#include "qlower/model_io.hpp"
#include "test_util.hpp"

namespace qlower {
namespace {

namespace fs = std::filesystem;

Graph identity_graph() {
  Graph g;
  g.inputs.push_back({"x", {1, 4}, DataType::float32()});
  Node n;
  n.id = "flat";
  n.kind = OpKind::kFlatten;
  n.inputs = {"x"};
  n.outputs = {"y"};
  g.nodes.push_back(n);
  g.outputs = {"y"};
  return g;
}

TEST(ModelIo, IdentityGraphRoundTrip) {
  const auto dir = testing_dir("identity");
  const Graph g = identity_graph();
  save_model(g, dir);
  EXPECT_FALSE(fs::exists(dir / "tensors") && !fs::is_empty(dir / "tensors"));
  const Graph back = load_model(dir);
  EXPECT_EQ(back.nodes.size(), 1u);
  EXPECT_TRUE(validate(back).empty());
  EXPECT_EQ(back, g);
}

TEST(ModelIo, Int8BlobIsTwosComplement) {
  const auto dir = testing_dir("int8");
  Graph g = identity_graph();
  g.tensors["t"] = Tensor::from_ints({2}, {-3, 5}, 8, true);
  save_model(g, dir);
  std::ifstream f(dir / "tensors" / "t.bin", std::ios::binary);
  ASSERT_TRUE(f);
  const std::vector<char> bytes((std::istreambuf_iterator<char>(f)), {});
  ASSERT_EQ(bytes.size(), 2u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 0xFD);
  EXPECT_EQ(static_cast<unsigned char>(bytes[1]), 0x05);
  EXPECT_EQ(load_model(dir), g);
}

TEST(ModelIo, ByteCountMismatchNamesTensor) {
  const auto dir = testing_dir("short_blob");
  Graph g = identity_graph();
  g.tensors["w"] = Tensor::from_floats({2, 3}, std::vector<float>(6, 1.0f));
  save_model(g, dir);
  fs::resize_file(dir / "tensors" / "w.bin", 20);
  try {
    load_model(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kByteCountMismatch);
    EXPECT_NE(std::string(e.what()).find("w"), std::string::npos);
  }
}

TEST(ModelIo, MissingManifestIsIo) {
  try {
    load_model(testing_dir("empty"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(ModelIo, FixtureCnnRoundTripIsByteIdentical) {
  const Graph g = fixture_cnn(1, 2);
  EXPECT_EQ(g.nodes.size(), 7u);  // 2 x (conv, bn, relu) + linear
  const auto a = testing_dir("cnn_a");
  const auto b = testing_dir("cnn_b");
  save_model(g, a);
  const Graph back = load_model(a);
  EXPECT_EQ(back, g);
  save_model(back, b);
  EXPECT_EQ(dir_digest(a), dir_digest(b));
}

TEST(Shapes, ConvLinearAttention) {
  Graph g;
  g.inputs.push_back({"x", {1, 3, 32, 32}, DataType::float32()});
  g.tensors["w"] = Tensor::from_floats({16, 3, 3, 3}, std::vector<float>(16 * 27, 0.1f));
  Node c;
  c.id = "conv";
  c.kind = OpKind::kConv2d;
  c.inputs = {"x"};
  c.outputs = {"y"};
  c.params["weight"] = "w";
  c.attrs.set("stride", std::int64_t{1});
  c.attrs.set("padding", std::int64_t{1});
  g.nodes.push_back(c);
  g.outputs = {"y"};
  const Graph s = infer_shapes(g);
  EXPECT_EQ(s.edge_shapes.at("y"), (Shape{1, 16, 32, 32}));
  EXPECT_EQ(infer_shapes(s), s);

  Graph a = fixture_attention(1, 16, 64, 4);
  a = infer_shapes(a);
  EXPECT_EQ(a.edge_shapes.at(internal_edge("attn", "scores")), (Shape{1, 4, 16, 16}));
}

TEST(Shapes, LinearAfterFlatten) {
  Graph g;
  g.inputs.push_back({"x", {1, 512}, DataType::float32()});
  g.tensors["w"] = Tensor::from_floats({10, 512}, std::vector<float>(5120, 0.0f));
  Node f;
  f.id = "flat";
  f.kind = OpKind::kFlatten;
  f.inputs = {"x"};
  f.outputs = {"h"};
  Node l;
  l.id = "fc";
  l.kind = OpKind::kLinear;
  l.inputs = {"h"};
  l.outputs = {"y"};
  l.params["weight"] = "w";
  g.nodes = {f, l};
  g.outputs = {"y"};
  EXPECT_EQ(infer_shapes(g).edge_shapes.at("y"), (Shape{1, 10}));
}

TEST(Validate, PerChannelLengthMismatch) {
  Graph g = fixture_cnn(2);
  EXPECT_TRUE(validate(g).empty());
  const auto& w = g.nodes.front().params.at("weight");
  QuantParams qp;
  qp.scale = std::vector<double>(g.tensors.at(w).dim(0) + 8, 0.1);
  qp.zero_point = std::vector<std::int64_t>(qp.scale.size(), 0);
  g.weight_quant[w] = qp;
  EXPECT_EQ(validate(g).size(), 1u);
}

TEST(Validate, CycleListsNodes) {
  Graph g = fixture_cnn(2);
  // Feed the first conv from the last relu.
  const std::string back_edge = g.nodes[8].outputs[0];
  g.nodes[0].inputs[0] = back_edge;
  const auto v = validate(g);
  ASSERT_FALSE(v.empty());
  bool found = false;
  for (const auto& x : v) found = found || x.message.find("cycle") != std::string::npos;
  EXPECT_TRUE(found);
  EXPECT_FALSE(find_cycle(g).empty());
}

TEST(Validate, IntegerRangeViolation) {
  Graph g = identity_graph();
  g.tensors["t"] = Tensor::from_ints({2}, {0, 9}, 4, true);
  EXPECT_FALSE(validate(g).empty());
}

}  // namespace
}  // namespace qlower
