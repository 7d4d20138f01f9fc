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

#include <random>

#include "qlower/calibrate.hpp"
#include "qlower/error.hpp"
#include "qlower/executor.hpp"
#include "qlower/export.hpp"
#include "qlower/fixtures.hpp"
#include "qlower/fusion.hpp"
#include "test_util.hpp"

namespace qlower {
namespace {

namespace fs = std::filesystem;

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

Tensor random_ints(const Shape& shape, int bits, bool is_signed, std::uint64_t seed) {
  const auto dt = DataType::int_type(bits, is_signed);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> u(dt.min_value(), dt.max_value());
  std::vector<std::int64_t> v(static_cast<std::size_t>(element_count(shape)));
  for (auto& e : v) e = u(rng);
  return Tensor::from_ints(shape, v, bits, is_signed);
}

TensorLayout layout_of(const Tensor& t) { return {t.shape(), t.dtype().bits, t.dtype().is_signed}; }

TEST(ExportWords, HexAndBinaryExamples) {
  const Tensor m3 = Tensor::from_ints({1}, {-3}, 8, true);
  EXPECT_EQ(first_line(export_hex(m3)), "FD");
  EXPECT_EQ(first_line(export_binstr(m3)), "11111101");
  ExportConfig w12;
  w12.word_bits = 12;
  EXPECT_EQ(first_line(export_hex(Tensor::from_ints({1}, {26}, 12, true), w12)), "01A");
  EXPECT_EQ(first_line(export_binstr(Tensor::from_ints({1}, {5}, 4, true))), "0101");
}

TEST(ExportWords, RawbinPacking) {
  const Tensor t = Tensor::from_ints({2}, {1, 2}, 4, true);
  ExportConfig packed;
  packed.format = ExportFormat::kRawbin;
  packed.pack = true;
  EXPECT_EQ(export_rawbin(t, packed), (std::vector<std::uint8_t>{0x21}));
  ExportConfig plain;
  plain.format = ExportFormat::kRawbin;
  EXPECT_EQ(export_rawbin(t, plain), (std::vector<std::uint8_t>{0x01, 0x02}));
}

TEST(ExportWords, OutOfRangeValueIsRejected) {
  ExportConfig narrow;
  narrow.word_bits = 4;
  try {
    export_hex(Tensor::from_ints({1}, {100}, 8, true), narrow);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kValueOutOfRange);
  }
}

TEST(ExportWords, WordsPerLineLaneZeroIsLeastSignificant) {
  ExportConfig cfg;
  cfg.words_per_line = 2;
  const auto text = export_hex(Tensor::from_ints({2}, {1, 2}, 8, true), cfg);
  EXPECT_EQ(first_line(text), "0201");
}

struct RoundTripCase {
  int bits;
  bool is_signed;
};

class RoundTrip : public ::testing::TestWithParam<RoundTripCase> {};

TEST_P(RoundTrip, EveryFormatIsExact) {
  const auto c = GetParam();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor t = random_ints({3, 5, 2}, c.bits, c.is_signed, seed);
    const auto lay = layout_of(t);
    for (int wpl : {1, 3}) {
      for (const std::vector<int>& order : {std::vector<int>{}, std::vector<int>{2, 0, 1}}) {
        ExportConfig cfg;
        cfg.words_per_line = wpl;
        cfg.axis_order = order;
        ASSERT_EQ(parse_hex(export_hex(t, cfg), lay, cfg), t);
        ASSERT_EQ(parse_binstr(export_binstr(t, cfg), lay, cfg), t);
        ASSERT_EQ(parse_decimal_json(export_decimal_json(t, cfg), lay, cfg), t);
        ASSERT_EQ(parse_rawbin(export_rawbin(t, cfg), lay, cfg), t);
        if (c.bits <= 4) {
          cfg.pack = true;
          ASSERT_EQ(parse_rawbin(export_rawbin(t, cfg), lay, cfg), t);
        }
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Widths, RoundTrip,
                         ::testing::Values(RoundTripCase{2, true}, RoundTripCase{4, true},
                                           RoundTripCase{4, false}, RoundTripCase{8, true},
                                           RoundTripCase{8, false}, RoundTripCase{12, true},
                                           RoundTripCase{16, true}, RoundTripCase{32, true}));

Graph fused_cnn() {
  const Graph g = fixture_cnn(51);
  const Graph c = calibrate_graph(g, random_batches({16, 3, 8, 8}, 4, 52), {});
  FuseMode m;
  return fuse_graph(c, m);
}

TEST(Bundle, LayoutAndDeterminism) {
  const Graph f = fused_cnn();
  const auto a = testing_dir("a");
  const auto b = testing_dir("b");
  export_model(f, a);
  export_model(f, b);
  EXPECT_TRUE(fs::exists(a / "manifest.json"));
  for (const char* w : {"conv0", "conv1", "conv2", "fc"}) {
    EXPECT_TRUE(fs::exists(a / "weights" / (std::string(w) + ".hex"))) << w;
  }
  EXPECT_EQ(dir_digest(a), dir_digest(b));
}

TEST(Bundle, ImportReproducesIntegerExecution) {
  const Graph f = fused_cnn();
  for (auto fmt : {ExportFormat::kHex, ExportFormat::kBinstr, ExportFormat::kRawbin,
                   ExportFormat::kDecimalJson}) {
    const auto dir = testing_dir(to_string(fmt));
    ExportConfig cfg;
    cfg.format = fmt;
    export_model(f, dir, cfg);
    const Graph back = import_bundle(dir);
    for (const auto& x : random_batches({8, 3, 8, 8}, 3, 53)) {
      const Tensor xq = quantize_input(f, x);
      ASSERT_EQ(exec_int(back, xq), exec_int(f, xq)) << to_string(fmt);
      ASSERT_EQ(quantize_input(back, x), xq);
    }
  }
}

TEST(Bundle, FloatGraphIsRejected) {
  try {
    export_model(fixture_cnn(1), testing_dir("float"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNotFullyFused);
  }
}

}  // namespace
}  // namespace qlower
