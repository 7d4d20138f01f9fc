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

#include "qlower/compare.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "json_io.hpp"
#include "qlower/error.hpp"
#include "qlower/executor.hpp"
#include "qlower/quantizer.hpp"

namespace qlower {

double ExecReport::max_layer_lsb() const {
  double m = 0.0;
  for (const auto& l : layers) m = std::max(m, l.max_lsb);
  return m;
}

std::string ExecReport::to_json(bool with_runtime) const {
  detail::json j;
  j["samples"] = samples;
  j["argmax_agreement"] = argmax_agreement;
  j["argmax_agreement_float"] = argmax_agreement_float;
  j["max_layer_lsb"] = max_layer_lsb();
  auto& ls = j["layers"] = detail::json::array();
  for (const auto& l : layers) {
    ls.push_back({{"edge", l.edge},
                  {"node", l.node},
                  {"max_lsb", l.max_lsb},
                  {"mean_lsb", l.mean_lsb},
                  {"e2e_max_lsb", l.e2e_max_lsb},
                  {"e2e_mean_lsb", l.e2e_mean_lsb},
                  {"count", l.count}});
  }
  if (with_runtime) {
    j["runtime_ms"] = {{"float", runtime_float_ms},
                       {"fakequant", runtime_fakequant_ms},
                       {"int", runtime_int_ms}};
  }
  return j.dump(2);
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Acc {
  double max = 0.0;
  double sum = 0.0;
  double e2e_max = 0.0;
  double e2e_sum = 0.0;
  std::int64_t count = 0;
};

// Codes of the fake-quant value on the fused edge grid.
Tensor codes_of(const Tensor& fq, const QuantParams& qp) { return quantize(fq, qp); }

double agreement(const Tensor& a, const Tensor& b) {
  const auto ra = argmax_rows(a);
  const auto rb = argmax_rows(b);
  std::int64_t same = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) same += ra[i] == rb[i];
  return ra.empty() ? 1.0 : static_cast<double>(same) / static_cast<double>(ra.size());
}

}  // namespace

ExecReport compare_paths(const Graph& calibrated, const Graph& fused,
                         const std::vector<Tensor>& batches) {
  ExecReport r;
  std::map<std::string, Acc> acc;
  std::vector<std::string> order;
  std::map<std::string, std::string> owner;
  for (const auto& n : fused.nodes) {
    if (n.kind == OpKind::kQuantStub || n.kind == OpKind::kDequantStub) continue;
    for (const auto& e : n.outputs) {
      if (fused.edge_qp(e) && calibrated.edge_qp(e)) {
        order.push_back(e);
        owner[e] = n.id;
      }
    }
    if (n.kind == OpKind::kAttention) {
      for (const char* what : {"q", "k", "v", "scores", "probs", "ctx"}) {
        const auto e = internal_edge(n.id, what);
        if (fused.edge_qp(e)) {
          order.push_back(e);
          owner[e] = n.id;
        }
      }
    }
  }
  double agree = 0.0;
  double agree_f = 0.0;
  std::int64_t rows = 0;
  for (const auto& x : batches) {
    auto t0 = Clock::now();
    const Tensor yf = exec_float(calibrated, x);
    r.runtime_float_ms += ms_since(t0);
    Trace fq_trace;
    t0 = Clock::now();
    const Tensor yq = exec_fakequant(calibrated, x, &fq_trace);
    r.runtime_fakequant_ms += ms_since(t0);

    const Tensor xq = quantize_input(fused, x);
    Trace free_trace;
    t0 = Clock::now();
    const Tensor yi_codes = exec_int(fused, xq, &free_trace);
    r.runtime_int_ms += ms_since(t0);
    const Tensor yi = dequantize_output(fused, yi_codes);

    Trace forced;
    for (const auto& [e, qp] : fused.edge_quant) {
      auto it = fq_trace.find(e);
      if (it != fq_trace.end()) forced[e] = codes_of(it->second, qp);
    }
    for (const auto& in : fused.inputs) {
      forced[in.name + ".q"] = codes_of(fq_trace.at(in.name), *fused.edge_qp(in.name + ".q"));
    }
    Trace tf_trace;
    IntRunOptions opts;
    opts.forced = &forced;
    exec_int(fused, xq, &tf_trace, opts);

    for (const auto& e : order) {
      const auto& want = forced.count(e) ? forced.at(e) : codes_of(fq_trace.at(e), *fused.edge_qp(e));
      auto& a = acc[e];
      const auto& got_tf = tf_trace.at(e).ints();
      const auto& got_free = free_trace.at(e).ints();
      const auto& w = want.ints();
      require(got_tf.size() == w.size(), ErrorKind::kShapeMismatch,
              "edge '" + e + "' differs in size between paths");
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = std::abs(static_cast<double>(got_tf[i] - w[i]));
        const double d2 = std::abs(static_cast<double>(got_free[i] - w[i]));
        a.max = std::max(a.max, d);
        a.sum += d;
        a.e2e_max = std::max(a.e2e_max, d2);
        a.e2e_sum += d2;
      }
      a.count += static_cast<std::int64_t>(w.size());
    }
    const auto nrows = static_cast<std::int64_t>(argmax_rows(yq).size());
    agree += agreement(yi, yq) * static_cast<double>(nrows);
    agree_f += agreement(yi, yf) * static_cast<double>(nrows);
    rows += nrows;
  }
  for (const auto& e : order) {
    const auto& a = acc[e];
    const double n = std::max<double>(1.0, static_cast<double>(a.count));
    r.layers.push_back({e, owner[e], a.max, a.sum / n, a.e2e_max, a.e2e_sum / n, a.count});
  }
  r.samples = rows;
  r.argmax_agreement = rows ? agree / static_cast<double>(rows) : 1.0;
  r.argmax_agreement_float = rows ? agree_f / static_cast<double>(rows) : 1.0;
  return r;
}

}  // namespace qlower
