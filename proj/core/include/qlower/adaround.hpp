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

#include <vector>

#include "qlower/quant_params.hpp"
#include "qlower/tensor.hpp"

namespace qlower {

struct AdaRoundConfig {
  int iters = 1000;
  double lambda_reg = 0.3;
  double beta_start = 18.0;
  double beta_end = 2.0;
  /// Fraction of iterations run without the rounding regularizer.
  double warmup = 0.2;
  double lr = 0.03;
};

/// Learned rounding offsets for one weight tensor. alpha has the weight's
/// shape; h(alpha) = clamp(sigmoid(alpha) * (zeta - gamma_lo) + gamma_lo, 0, 1).
struct AdaRoundState {
  Tensor alpha;
  double zeta = 1.1;
  double gamma_lo = -0.1;
  AdaRoundConfig cfg;
};

double rectified_sigmoid(double alpha, double zeta = 1.1, double gamma_lo = -0.1);

/// Annealed regularizer exponent at iteration t of cfg.iters.
double adaround_beta(const AdaRoundConfig& cfg, int t);

/// State whose soft offsets equal frac(W/S), i.e. the soft weights start at
/// the float weights.
AdaRoundState adaround_init(const Tensor& w, const QuantParams& qp,
                            const AdaRoundConfig& cfg = {});

/// Input Gram matrix X^T X / N of calibration rows X [N, K], normalized by
/// its mean diagonal so the objective is scale-free.
std::vector<double> adaround_gram(const Tensor& x);

/// Relaxed objective in grid units:
///   sum_o r_o G r_o^T + lambda * sum (1 - |2h - 1|^beta),  r = frac(W/S) - h
/// with weights flattened to [O, K]. When `grad` is given it receives
/// dL/dalpha (same layout as alpha). `use_reg` drops the regularizer.
double adaround_objective(const AdaRoundState& st, const Tensor& w,
                          const QuantParams& qp, const std::vector<double>& gram,
                          double beta, bool use_reg, std::vector<double>* grad);

/// Adam on alpha for `iters` steps against calibration rows
/// x [N, K] (K = weight elements per output row). kNonFinite names the
/// iteration on a non-finite loss.
AdaRoundState adaround_fit(const Tensor& w, const QuantParams& qp, const Tensor& x,
                           AdaRoundState st, int iters);

/// W_Q = clamp(floor(W/S) + (alpha >= 0 ? 1 : 0), qmin, qmax).
Tensor adaround_freeze(const Tensor& w, const QuantParams& qp, const AdaRoundState& st);

/// ||W X^T - W_hat X^T||^2 / rows(X) with W, W_hat flattened to [O, K].
double reconstruction_mse(const Tensor& w, const Tensor& w_hat, const Tensor& x);

}  // namespace qlower
