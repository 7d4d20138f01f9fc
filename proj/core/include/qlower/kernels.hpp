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

#include <functional>
#include <optional>
#include <string>

#include "qlower/tensor.hpp"

namespace qlower::kernels {

// Float reference kernels. Reductions accumulate in double in a fixed
// left-to-right order so results are reproducible run to run.

struct ConvSpec {
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t groups = 1;
};

/// x [N,C,H,W], w [O,C/g,kh,kw], optional bias [O].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias,
              const ConvSpec& spec);

/// Applies to the last axis; a rank-4 input is flattened to [N, C*H*W].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias);

/// Per-channel (axis 1) affine normalization with running statistics.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 const Tensor& mean, const Tensor& var, double eps);

/// Normalizes over the last axis. With `running` set, the given (mean,
/// var) pair replaces the per-row statistics.
Tensor layernorm(const Tensor& x, const Tensor* gamma, const Tensor* beta,
                 double eps,
                 std::optional<std::pair<double, double>> running = {});

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
double gelu_value(double x);
/// Softmax along the last axis.
Tensor softmax(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);

struct PoolSpec {
  std::int64_t kernel = 2;
  std::int64_t stride = 2;
  std::int64_t padding = 0;
  bool global = false;
};

Tensor maxpool(const Tensor& x, const PoolSpec& spec);
/// Averages over the in-bounds window elements only.
Tensor avgpool(const Tensor& x, const PoolSpec& spec);
Tensor flatten(const Tensor& x);

/// Called on each attention intermediate ("q", "k", "v", "scores",
/// "probs", "ctx"); may rewrite it in place (fake quantization, tracing).
using AttentionHook = std::function<void(const std::string&, Tensor&)>;

struct AttentionWeights {
  const Tensor* wq = nullptr;
  const Tensor* wk = nullptr;
  const Tensor* wv = nullptr;
  const Tensor* wo = nullptr;
  const Tensor* bq = nullptr;
  const Tensor* bk = nullptr;
  const Tensor* bv = nullptr;
  const Tensor* bo = nullptr;
};

/// Multi-head self attention on x [B,T,E]; scores are scaled by 1/sqrt(d).
Tensor attention(const Tensor& x, const AttentionWeights& w, std::int64_t heads,
                 const AttentionHook& hook = {});

/// Splits [B,T,E] into [B,heads,T,E/heads] and back.
Tensor split_heads(const Tensor& x, std::int64_t heads);
Tensor merge_heads(const Tensor& x);

/// Conv patches for one group: rows are (n, oh, ow), columns (c, kh, kw).
/// Out-of-bounds taps read `pad_value`.
Tensor im2col(const Tensor& x, std::int64_t kh, std::int64_t kw,
              const ConvSpec& spec, std::int64_t group, float pad_value = 0.0f);

}  // namespace qlower::kernels
