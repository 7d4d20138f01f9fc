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

#include "qlower/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qlower/error.hpp"

namespace qlower {

std::string to_string(SparsityMode m) { return m == SparsityMode::kNm ? "nm" : "elementwise"; }

SparsityMode sparsity_mode_from_string(const std::string& name) {
  if (name == "nm") return SparsityMode::kNm;
  if (name == "elementwise") return SparsityMode::kElementwise;
  fail(ErrorKind::kConfig, "unknown sparsity mode '" + name + "'");
}

Tensor prune_magnitude(const Tensor& w, double s) {
  require(w.is_float(), ErrorKind::kInvalidArgument, "pruning works on float weights");
  require(s >= 0.0 && s < 1.0, ErrorKind::kInvalidArgument,
          "target sparsity must be in [0, 1), got " + std::to_string(s));
  Tensor out = w;
  auto v = out.floats();
  const auto k = static_cast<std::size_t>(std::ceil(s * static_cast<double>(v.size()) - 1e-9));
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(v[a]) < std::fabs(v[b]);
  });
  for (std::size_t i = 0; i < k; ++i) v[idx[i]] = 0.0f;
  return out;
}

namespace {

struct AxisLayout {
  std::int64_t outer = 1;
  std::int64_t extent = 1;
  std::int64_t inner = 1;
};

AxisLayout layout(const Tensor& w, int axis) {
  require(axis >= 0 && axis < w.rank(), ErrorKind::kInvalidArgument,
          "group axis " + std::to_string(axis) + " out of range for rank " + std::to_string(w.rank()));
  AxisLayout l;
  for (int i = 0; i < axis; ++i) l.outer *= w.dim(i);
  l.extent = w.dim(axis);
  for (int i = axis + 1; i < w.rank(); ++i) l.inner *= w.dim(i);
  return l;
}

double magnitude(const Tensor& w, std::size_t i) {
  return w.is_float() ? std::fabs(static_cast<double>(w.floats()[i]))
                      : std::fabs(static_cast<double>(w.ints()[i]));
}

}  // namespace

Tensor prune_nm(const Tensor& w, int n, int m, int axis) {
  require(n >= 0 && m >= 1 && n < m, ErrorKind::kInvalidArgument,
          "N:M pruning needs 0 <= N < M, got " + std::to_string(n) + ":" + std::to_string(m));
  require(w.is_float(), ErrorKind::kInvalidArgument, "pruning works on float weights");
  const auto l = layout(w, axis);
  Tensor out = w;
  auto v = out.floats();
  const auto groups = l.extent / m;
  std::vector<std::size_t> pos(static_cast<std::size_t>(m));
  for (std::int64_t o = 0; o < l.outer; ++o) {
    for (std::int64_t gi = 0; gi < groups; ++gi) {
      for (std::int64_t in = 0; in < l.inner; ++in) {
        for (int j = 0; j < m; ++j) {
          pos[static_cast<std::size_t>(j)] =
              static_cast<std::size_t>((o * l.extent + gi * m + j) * l.inner + in);
        }
        auto order = pos;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return std::fabs(v[a]) > std::fabs(v[b]);
        });
        for (std::size_t j = static_cast<std::size_t>(n); j < order.size(); ++j) v[order[j]] = 0.0f;
      }
    }
  }
  return out;
}

NmCheck verify_nm(const Tensor& w, int n, int m, int axis) {
  require(n >= 0 && m >= 1 && n < m, ErrorKind::kInvalidArgument, "N:M check needs 0 <= N < M");
  const auto l = layout(w, axis);
  const auto groups = l.extent / m;
  std::int64_t id = 0;
  for (std::int64_t o = 0; o < l.outer; ++o) {
    for (std::int64_t gi = 0; gi < groups; ++gi) {
      for (std::int64_t in = 0; in < l.inner; ++in, ++id) {
        int zeros = 0;
        for (int j = 0; j < m; ++j) {
          zeros += magnitude(w, static_cast<std::size_t>((o * l.extent + gi * m + j) * l.inner + in)) == 0.0;
        }
        if (zeros < m - n) return {false, id};
      }
    }
  }
  return {};
}

double schedule_sparsity(const SparsitySchedule& s, std::int64_t t) {
  require(s.total_steps > 0 && t >= 0 && t <= s.total_steps, ErrorKind::kInvalidArgument,
          "schedule step " + std::to_string(t) + " outside [0, " + std::to_string(s.total_steps) + "]");
  const double r = 1.0 - static_cast<double>(t) / static_cast<double>(s.total_steps);
  return s.s_final + (s.s_init - s.s_final) * r * r * r;
}

double sparsity_of(const Tensor& w) {
  if (w.size() == 0) return 0.0;
  std::int64_t zeros = 0;
  for (std::int64_t i = 0; i < w.size(); ++i) zeros += magnitude(w, static_cast<std::size_t>(i)) == 0.0;
  return static_cast<double>(zeros) / static_cast<double>(w.size());
}

Graph prune_graph(const Graph& g, const SparsityConfig& cfg) {
  Graph out = g;
  const double s = cfg.schedule ? schedule_sparsity(*cfg.schedule, cfg.schedule->total_steps)
                                : cfg.target;
  for (const auto& n : out.nodes) {
    for (const char* role : {"weight", "wq", "wk", "wv", "wo"}) {
      if (!n.has_param(role)) continue;
      auto& t = out.tensors.at(n.params.at(role));
      t = cfg.mode == SparsityMode::kNm ? prune_nm(t, cfg.n, cfg.m, cfg.group_axis)
                                        : prune_magnitude(t, s);
    }
  }
  return out;
}

}  // namespace qlower
