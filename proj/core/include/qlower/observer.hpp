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
#include <string>
#include <vector>

#include "qlower/quant_params.hpp"
#include "qlower/tensor.hpp"

namespace qlower {

enum class ObserverMode { kMinMax, kPercentile, kMse };

/// Running statistics of the values seen on one edge or weight.
///
/// MinMax tracks exact extrema, per-tensor or per-channel. Percentile and
/// MSE modes additionally keep a 2048-bin histogram over [-R, R], where R
/// is a power of two that doubles (merging bin pairs) when data outgrows
/// it, so two histograms can always be merged exactly up to binning.
class Observer {
 public:
  static constexpr int kBins = 2048;

  static Observer minmax();
  static Observer minmax_per_channel(int axis);
  static Observer percentile(double p);
  static Observer mse();

  /// Throws kNonFinite naming `edge` when the batch holds NaN/Inf.
  void observe(const Tensor& batch, const std::string& edge = "");

  ObserverMode mode() const { return mode_; }
  double percentile_value() const { return percentile_; }
  int axis() const { return axis_; }
  std::int64_t sample_count() const { return count_; }
  const std::vector<double>& running_min() const { return min_; }
  const std::vector<double>& running_max() const { return max_; }
  const std::vector<std::uint64_t>& histogram() const { return hist_; }
  double histogram_range() const { return range_; }

  /// Per-tensor (lo, hi) after the mode's clipping rule (percentile
  /// clips; minmax and mse report the raw extrema).
  std::pair<double, double> clip_range() const;

  /// Value at quantile q in [0, 1], interpolated within a histogram bin.
  double quantile(double q) const;

 private:
  void grow_to(double max_abs);
  void add_to_histogram(std::span<const float> values);

  ObserverMode mode_ = ObserverMode::kMinMax;
  double percentile_ = 100.0;
  int axis_ = -1;
  std::int64_t count_ = 0;
  std::vector<double> min_;
  std::vector<double> max_;
  std::vector<std::uint64_t> hist_;
  double range_ = 0.0;

  friend Observer merge(const Observer& a, const Observer& b);
};

/// Observing a then b equals observing a's and b's data together (exact
/// for minmax; up to binning for histograms). Modes must match.
Observer merge(const Observer& a, const Observer& b);

struct QParamsResult {
  QuantParams qp;
  /// Set when the observation was constant (S forced to 1).
  bool degenerate = false;
};

/// Symmetric: S = max(|min|, |max|) / qmax, Z = 0.
/// Asymmetric: S = (max - min) / (2^n - 1), Z = clamp(round(qmin - min/S)).
/// The asymmetric range is widened to include zero so real 0 is exact.
QParamsResult compute_qparams(double min, double max, int bits, bool is_signed,
                              bool symmetric);

/// From an observer; per-channel observers yield per-channel params. MSE
/// observers run the clip-ratio search over their histogram.
QParamsResult compute_qparams(const Observer& obs, int bits, bool is_signed,
                              bool symmetric);

/// Grid search over 100 clip ratios c in [0.5, 1.0] of the observed range,
/// returning the params minimizing sum (x - fake_quant(x))^2. Requires at
/// least 64 samples.
QParamsResult compute_qparams_mse(const Tensor& samples, int bits,
                                  bool is_signed = true, bool symmetric = true);

/// Clip ratios searched by compute_qparams_mse.
std::vector<double> mse_clip_ratios();

}  // namespace qlower
