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

#include <benchmark/benchmark.h>

#include <random>

#include "qlower/calibrate.hpp"
#include "qlower/executor.hpp"
#include "qlower/export.hpp"
#include "qlower/fixed_point.hpp"
#include "qlower/fixtures.hpp"
#include "qlower/fusion.hpp"
#include "qlower/int_kernels.hpp"
#include "qlower/lut.hpp"
#include "qlower/quantizer.hpp"
#include "qlower/sparsity.hpp"

namespace qlower {
namespace {

Tensor random_codes(const Shape& shape, int bits, bool is_signed, std::uint64_t seed) {
  const auto dt = DataType::int_type(bits, is_signed);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> u(dt.min_value(), dt.max_value());
  std::vector<std::int64_t> v(static_cast<std::size_t>(element_count(shape)));
  for (auto& e : v) e = u(rng);
  return Tensor::from_ints(shape, std::move(v), bits, is_signed);
}

void BM_Quantize(benchmark::State& state) {
  const auto n = state.range(0);
  const Tensor x = random_uniform({n}, 1, -4.0, 4.0);
  const auto qp = QuantParams::per_tensor(4.0 / 127, 0, 8, true, true);
  for (auto _ : state) benchmark::DoNotOptimize(quantize(x, qp));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Quantize)->Range(1 << 10, 1 << 18);

void BM_IntConv(benchmark::State& state) {
  const auto c = state.range(0);
  const Tensor x = random_codes({1, c, 16, 16}, 8, false, 2);
  const Tensor w = random_codes({c, c, 3, 3}, 8, true, 3);
  for (auto _ : state) benchmark::DoNotOptimize(ikernels::conv2d(x, w, 128, {1, 1, 1}));
  state.SetItemsProcessed(state.iterations() * c * c * 9 * 256);
}
BENCHMARK(BM_IntConv)->Arg(8)->Arg(16)->Arg(32);

void BM_MulQuant(benchmark::State& state) {
  const Tensor acc = random_codes({1, 32, 16, 16}, 24, true, 4);
  const auto out = QuantParams::per_tensor(0.05, 0, 8, false, false);
  std::vector<double> sw(32, 0.01);
  auto mq = build_mulquant(sw, 0.02, 0.05, {}, {0.1}, {4, 12}, out, true);
  for (auto _ : state) benchmark::DoNotOptimize(ikernels::mulquant(acc, mq));
  state.SetItemsProcessed(state.iterations() * acc.size());
}
BENCHMARK(BM_MulQuant);

void BM_IntSoftmax(benchmark::State& state) {
  const auto cols = state.range(0);
  const double s = 8.0 / 255;
  const auto exp_lut = lut_build(LutKind::kExp, -255 * s, 0.0, 256,
                                 QuantParams::per_tensor(s, 0, 16, true, true), {2, 12});
  const auto recip = reciprocal_lut();
  const Tensor x = random_codes({64, cols}, 8, true, 5);
  for (auto _ : state) benchmark::DoNotOptimize(ikernels::softmax(x, exp_lut, recip, 12));
  state.SetItemsProcessed(state.iterations() * x.size());
}
BENCHMARK(BM_IntSoftmax)->Arg(16)->Arg(64)->Arg(256);

void BM_PruneNm(benchmark::State& state) {
  const Tensor w = random_uniform({256, 256}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(prune_nm(w, 2, 4, 1));
}
BENCHMARK(BM_PruneNm);

struct Fused {
  Graph calibrated;
  Graph fused;
};

const Fused& fused_cnn() {
  static const Fused f = [] {
    const Graph g = fixture_cnn(7);
    Fused r;
    r.calibrated = calibrate_graph(g, random_batches({16, 3, 8, 8}, 4, 8), {});
    r.fused = fuse_graph(r.calibrated, {});
    return r;
  }();
  return f;
}

void BM_ExecFloat(benchmark::State& state) {
  const auto& f = fused_cnn();
  const Tensor x = random_batches({32, 3, 8, 8}, 1, 9)[0];
  for (auto _ : state) benchmark::DoNotOptimize(exec_float(f.calibrated, x));
}
BENCHMARK(BM_ExecFloat)->Unit(benchmark::kMicrosecond);

void BM_ExecFakeQuant(benchmark::State& state) {
  const auto& f = fused_cnn();
  const Tensor x = random_batches({32, 3, 8, 8}, 1, 9)[0];
  for (auto _ : state) benchmark::DoNotOptimize(exec_fakequant(f.calibrated, x));
}
BENCHMARK(BM_ExecFakeQuant)->Unit(benchmark::kMicrosecond);

void BM_ExecInt(benchmark::State& state) {
  const auto& f = fused_cnn();
  const Tensor xq = quantize_input(f.fused, random_batches({32, 3, 8, 8}, 1, 9)[0]);
  for (auto _ : state) benchmark::DoNotOptimize(exec_int(f.fused, xq));
}
BENCHMARK(BM_ExecInt)->Unit(benchmark::kMicrosecond);

void BM_ExportHex(benchmark::State& state) {
  const Tensor t = random_codes({64, 64, 3, 3}, 8, true, 10);
  for (auto _ : state) benchmark::DoNotOptimize(export_hex(t));
  state.SetItemsProcessed(state.iterations() * t.size());
}
BENCHMARK(BM_ExportHex);

}  // namespace
}  // namespace qlower

BENCHMARK_MAIN();
