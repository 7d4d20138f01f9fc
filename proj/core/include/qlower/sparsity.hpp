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

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "qlower/graph.hpp"
#include "qlower/tensor.hpp"

namespace qlower {

enum class SparsityMode { kElementwise, kNm };

std::string to_string(SparsityMode m);
SparsityMode sparsity_mode_from_string(const std::string& name);

struct SparsitySchedule {
  double s_init = 0.0;
  double s_final = 0.5;
  std::int64_t total_steps = 1;
};

struct SparsityConfig {
  SparsityMode mode = SparsityMode::kNm;
  double target = 0.5;
  int n = 2;
  int m = 4;
  /// Input-channel axis of conv / linear weights.
  int group_axis = 1;
  std::optional<SparsitySchedule> schedule;
};

/// Zeros the ceil(s * |W|) smallest magnitudes; ties go to the lower index.
Tensor prune_magnitude(const Tensor& w, double s);

/// Keeps the n largest magnitudes of every m consecutive elements along
/// `axis`. A trailing partial group stays dense. kInvalidArgument when
/// n >= m.
Tensor prune_nm(const Tensor& w, int n, int m, int axis);

struct NmCheck {
  bool ok = true;
  /// Index of the first complete group with fewer than m - n zeros, in
  /// row-major order of (outer, group, inner); -1 when ok.
  std::int64_t group = -1;
};

/// Works on float or integer tensors.
NmCheck verify_nm(const Tensor& w, int n, int m, int axis);

/// s(t) = s_final + (s_init - s_final) * (1 - t/T)^3.
double schedule_sparsity(const SparsitySchedule& s, std::int64_t t);

/// Fraction of exact zeros.
double sparsity_of(const Tensor& w);

/// Prunes every conv2d / linear / attention weight of a float graph.
/// Elementwise mode uses the schedule's value at its last step when set.
Graph prune_graph(const Graph& g, const SparsityConfig& cfg);

}  // namespace qlower
