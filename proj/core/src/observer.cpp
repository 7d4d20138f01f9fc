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

#include "qlower/observer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qlower/error.hpp"
#include "qlower/instrument.hpp"
#include "qlower/quantizer.hpp"
#include "qlower/rounding.hpp"

namespace qlower {

namespace {

constexpr double kMinRange = 1.0 / (1 << 20);

double fq_value(double x, const QuantParams& qp) {
  const auto q = quantize_value(x, qp.scale[0], qp.zero_point[0], qp.qmin(), qp.qmax());
  return static_cast<double>(q - qp.zero_point[0]) * qp.scale[0];
}

}  // namespace

Observer Observer::minmax() { return Observer{}; }

Observer Observer::minmax_per_channel(int axis) {
  Observer o;
  o.axis_ = axis;
  return o;
}

Observer Observer::percentile(double p) {
  require(p > 50.0 && p <= 100.0, ErrorKind::kInvalidArgument,
          "percentile must lie in (50, 100]");
  Observer o;
  o.mode_ = ObserverMode::kPercentile;
  o.percentile_ = p;
  return o;
}

Observer Observer::mse() {
  Observer o;
  o.mode_ = ObserverMode::kMse;
  return o;
}

void Observer::grow_to(double max_abs) {
  if (range_ == 0.0) {
    range_ = kMinRange;
    hist_.assign(kBins, 0);
  }
  while (range_ < max_abs) {
    std::vector<std::uint64_t> next(kBins, 0);
    for (int i = 0; i < kBins; ++i) next[static_cast<std::size_t>(kBins / 4 + i / 2)] += hist_[static_cast<std::size_t>(i)];
    hist_ = std::move(next);
    range_ *= 2.0;
  }
}

void Observer::add_to_histogram(std::span<const float> values) {
  double max_abs = 0.0;
  for (float v : values) max_abs = std::max(max_abs, std::fabs(static_cast<double>(v)));
  grow_to(max_abs);
  const double width = 2.0 * range_ / kBins;
  for (float v : values) {
    auto b = static_cast<std::int64_t>(std::floor((v + range_) / width));
    b = clamp_i64(b, 0, kBins - 1);
    hist_[static_cast<std::size_t>(b)]++;
  }
}

void Observer::observe(const Tensor& batch, const std::string& edge) {
  require(batch.is_float(), ErrorKind::kInvalidArgument,
          "observer expects float data");
  auto data = batch.floats();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      fail(ErrorKind::kNonFinite,
           "non-finite value at element " + std::to_string(i) + " on edge '" +
               (edge.empty() ? "<unnamed>" : edge) + "'");
    }
  }
  instrument::note_float_op(data.size());
  if (axis_ < 0) {
    if (min_.empty()) {
      min_ = {std::numeric_limits<double>::infinity()};
      max_ = {-std::numeric_limits<double>::infinity()};
    }
    for (float v : data) {
      min_[0] = std::min(min_[0], static_cast<double>(v));
      max_[0] = std::max(max_[0], static_cast<double>(v));
    }
  } else {
    require(axis_ < batch.rank(), ErrorKind::kInvalidArgument,
            "observer axis out of range on edge '" + edge + "'");
    const auto c = batch.dim(axis_);
    if (min_.empty()) {
      min_.assign(static_cast<std::size_t>(c), std::numeric_limits<double>::infinity());
      max_.assign(static_cast<std::size_t>(c), -std::numeric_limits<double>::infinity());
    }
    require(static_cast<std::int64_t>(min_.size()) == c, ErrorKind::kShapeMismatch,
            "channel count changed between batches on edge '" + edge + "'");
    const auto stride = strides_of(batch.shape())[static_cast<std::size_t>(axis_)];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto ch = static_cast<std::size_t>((static_cast<std::int64_t>(i) / stride) % c);
      min_[ch] = std::min(min_[ch], static_cast<double>(data[i]));
      max_[ch] = std::max(max_[ch], static_cast<double>(data[i]));
    }
  }
  if (mode_ != ObserverMode::kMinMax) add_to_histogram(data);
  count_ += static_cast<std::int64_t>(data.size());
}

double Observer::quantile(double q) const {
  require(count_ > 0 && !hist_.empty(), ErrorKind::kInvalidArgument,
          "quantile of an empty histogram");
  const double width = 2.0 * range_ / kBins;
  const double target = q * static_cast<double>(count_);
  double cum = 0.0;
  double value = max_[0];
  for (int b = 0; b < kBins; ++b) {
    const double c = static_cast<double>(hist_[static_cast<std::size_t>(b)]);
    if (c > 0 && cum + c >= target) {
      const double frac = std::clamp((target - cum) / c, 0.0, 1.0);
      value = -range_ + (b + frac) * width;
      break;
    }
    cum += c;
  }
  return std::clamp(value, min_[0], max_[0]);
}

std::pair<double, double> Observer::clip_range() const {
  require(count_ > 0, ErrorKind::kInvalidArgument, "observer has no samples");
  double lo = *std::min_element(min_.begin(), min_.end());
  double hi = *std::max_element(max_.begin(), max_.end());
  if (mode_ == ObserverMode::kPercentile) {
    const double p = percentile_ / 100.0;
    lo = quantile(1.0 - p);
    hi = quantile(p);
  }
  return {lo, hi};
}

Observer merge(const Observer& a, const Observer& b) {
  require(a.mode_ == b.mode_ && a.axis_ == b.axis_, ErrorKind::kInvalidArgument,
          "cannot merge observers of different modes");
  if (a.count_ == 0) return b;
  if (b.count_ == 0) return a;
  require(a.min_.size() == b.min_.size(), ErrorKind::kShapeMismatch,
          "cannot merge observers with different channel counts");
  Observer out = a;
  for (std::size_t i = 0; i < out.min_.size(); ++i) {
    out.min_[i] = std::min(a.min_[i], b.min_[i]);
    out.max_[i] = std::max(a.max_[i], b.max_[i]);
  }
  out.count_ = a.count_ + b.count_;
  if (a.mode_ != ObserverMode::kMinMax) {
    Observer other = b;
    const double r = std::max(a.range_, b.range_);
    out.grow_to(r);
    other.grow_to(r);
    for (std::size_t i = 0; i < out.hist_.size(); ++i) out.hist_[i] += other.hist_[i];
  }
  return out;
}

QParamsResult compute_qparams(double min, double max, int bits, bool is_signed,
                              bool symmetric) {
  require(bits >= 2 && bits <= 16, ErrorKind::kInvalidArgument,
          "bits must lie in 2..16");
  require(min <= max, ErrorKind::kInvalidArgument, "min exceeds max");
  QParamsResult r;
  r.qp = QuantParams::per_tensor(1.0, 0, bits, is_signed, symmetric);
  const auto qmin = r.qp.qmin();
  const auto qmax = r.qp.qmax();
  if (symmetric) {
    const double amax = std::max(std::fabs(min), std::fabs(max));
    if (amax == 0.0 || min == max) {
      r.degenerate = true;
      return r;
    }
    r.qp.scale[0] = amax / static_cast<double>(qmax);
    return r;
  }
  if (min == max) {
    r.degenerate = true;
    r.qp.zero_point[0] = clamp_i64(round_half_away(static_cast<double>(qmin) - min), qmin, qmax);
    return r;
  }
  const double lo = std::min(min, 0.0);
  const double hi = std::max(max, 0.0);
  const double s = (hi - lo) / static_cast<double>(qmax - qmin);
  r.qp.scale[0] = s;
  r.qp.zero_point[0] =
      clamp_i64(round_half_away(static_cast<double>(qmin) - lo / s), qmin, qmax);
  return r;
}

std::vector<double> mse_clip_ratios() {
  std::vector<double> c(100);
  for (int k = 0; k < 100; ++k) c[static_cast<std::size_t>(k)] = 0.5 + 0.5 * k / 99.0;
  return c;
}

namespace {

template <typename ErrorFn>
QParamsResult search_clip(double min, double max, int bits, bool is_signed,
                          bool symmetric, ErrorFn&& error_of) {
  QParamsResult best;
  double best_err = std::numeric_limits<double>::infinity();
  for (double c : mse_clip_ratios()) {
    auto r = compute_qparams(c * min, c * max, bits, is_signed, symmetric);
    const double err = error_of(r.qp);
    if (err < best_err) {
      best_err = err;
      best = r;
    }
  }
  return best;
}

}  // namespace

QParamsResult compute_qparams(const Observer& obs, int bits, bool is_signed,
                              bool symmetric) {
  require(obs.sample_count() > 0, ErrorKind::kInvalidArgument,
          "cannot compute quant params without observations");
  if (obs.axis() >= 0) {
    QParamsResult out;
    out.qp = QuantParams::per_tensor(1.0, 0, bits, is_signed, symmetric);
    out.qp.axis = obs.axis();
    out.qp.scale.clear();
    out.qp.zero_point.clear();
    for (std::size_t c = 0; c < obs.running_min().size(); ++c) {
      auto r = compute_qparams(obs.running_min()[c], obs.running_max()[c], bits,
                               is_signed, symmetric);
      out.degenerate = out.degenerate || r.degenerate;
      out.qp.scale.push_back(r.qp.scale[0]);
      out.qp.zero_point.push_back(r.qp.zero_point[0]);
    }
    return out;
  }
  const auto [lo, hi] = obs.clip_range();
  if (obs.mode() != ObserverMode::kMse || lo == hi) {
    return compute_qparams(lo, hi, bits, is_signed, symmetric);
  }
  const auto& hist = obs.histogram();
  const double width = 2.0 * obs.histogram_range() / Observer::kBins;
  return search_clip(lo, hi, bits, is_signed, symmetric, [&](const QuantParams& qp) {
    double err = 0.0;
    for (int b = 0; b < Observer::kBins; ++b) {
      const auto n = hist[static_cast<std::size_t>(b)];
      if (n == 0) continue;
      const double x = -obs.histogram_range() + (b + 0.5) * width;
      const double d = x - fq_value(x, qp);
      err += static_cast<double>(n) * d * d;
    }
    return err;
  });
}

QParamsResult compute_qparams_mse(const Tensor& samples, int bits, bool is_signed,
                                  bool symmetric) {
  require(samples.is_float(), ErrorKind::kInvalidArgument,
          "mse calibration expects float samples");
  require(samples.size() >= 64, ErrorKind::kInvalidArgument,
          "mse calibration needs at least 64 samples");
  auto x = samples.floats();
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  const double lo = *mn;
  const double hi = *mx;
  if (lo == hi) return compute_qparams(lo, hi, bits, is_signed, symmetric);
  instrument::note_float_op(x.size() * 100);
  return search_clip(lo, hi, bits, is_signed, symmetric, [&](const QuantParams& qp) {
    double err = 0.0;
    for (float v : x) {
      const double d = v - fq_value(v, qp);
      err += d * d;
    }
    return err;
  });
}

}  // namespace qlower
