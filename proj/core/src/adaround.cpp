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

#include "qlower/adaround.hpp"

#include <algorithm>
#include <cmath>

#include "qlower/error.hpp"

namespace qlower {

namespace {

struct Layout {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
};

Layout layout_of(const Tensor& w, const QuantParams& qp) {
  require(w.is_float() && w.rank() >= 1, ErrorKind::kInvalidArgument,
          "adaround expects a float weight tensor");
  require_valid(qp);
  Layout l{w.dim(0), w.size() / w.dim(0)};
  require(!qp.per_channel() || (qp.axis == 0 &&
                                static_cast<std::int64_t>(qp.channels()) == l.rows),
          ErrorKind::kInvalidArgument,
          "adaround needs per-tensor or output-channel (axis 0) scales");
  return l;
}

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

}  // namespace

double rectified_sigmoid(double alpha, double zeta, double gamma_lo) {
  return std::clamp(sigmoid(alpha) * (zeta - gamma_lo) + gamma_lo, 0.0, 1.0);
}

double adaround_beta(const AdaRoundConfig& cfg, int t) {
  const double warm = cfg.warmup * cfg.iters;
  if (t <= warm || cfg.iters <= warm) return cfg.beta_start;
  const double p = (t - warm) / (cfg.iters - warm);
  return cfg.beta_start + (cfg.beta_end - cfg.beta_start) * std::min(p, 1.0);
}

AdaRoundState adaround_init(const Tensor& w, const QuantParams& qp,
                            const AdaRoundConfig& cfg) {
  const auto l = layout_of(w, qp);
  AdaRoundState st;
  st.cfg = cfg;
  st.alpha = Tensor(w.shape(), DataType::float32());
  auto ws = w.floats();
  auto as = st.alpha.floats();
  const double span = st.zeta - st.gamma_lo;
  for (std::int64_t o = 0; o < l.rows; ++o) {
    const double s = qp.scale_at(static_cast<std::size_t>(o));
    for (std::int64_t k = 0; k < l.cols; ++k) {
      const auto i = static_cast<std::size_t>(o * l.cols + k);
      const double v = ws[i] / s;
      const double frac = v - std::floor(v);
      const double p = std::clamp((frac - st.gamma_lo) / span, 1e-6, 1.0 - 1e-6);
      as[i] = static_cast<float>(std::log(p / (1.0 - p)));
    }
  }
  return st;
}

std::vector<double> adaround_gram(const Tensor& x) {
  require(x.is_float() && x.rank() == 2, ErrorKind::kInvalidArgument,
          "adaround calibration rows must be a float [N, K] tensor");
  const auto n = x.dim(0), k = x.dim(1);
  std::vector<double> g(static_cast<std::size_t>(k * k), 0.0);
  auto xs = x.floats();
  for (std::int64_t r = 0; r < n; ++r) {
    const float* row = xs.data() + r * k;
    for (std::int64_t i = 0; i < k; ++i) {
      const double xi = row[i];
      if (xi == 0.0) continue;
      for (std::int64_t j = 0; j < k; ++j) g[static_cast<std::size_t>(i * k + j)] += xi * row[j];
    }
  }
  double diag = 0.0;
  for (std::int64_t i = 0; i < k; ++i) diag += g[static_cast<std::size_t>(i * k + i)];
  diag /= static_cast<double>(k);
  const double norm = diag > 0.0 ? diag : 1.0;
  for (auto& v : g) v /= norm;
  return g;
}

double adaround_objective(const AdaRoundState& st, const Tensor& w,
                          const QuantParams& qp, const std::vector<double>& gram,
                          double beta, bool use_reg, std::vector<double>* grad) {
  const auto l = layout_of(w, qp);
  require(static_cast<std::int64_t>(gram.size()) == l.cols * l.cols,
          ErrorKind::kShapeMismatch, "gram size does not match weight row length");
  auto ws = w.floats();
  auto as = st.alpha.floats();
  const double span = st.zeta - st.gamma_lo;
  const double lambda = st.cfg.lambda_reg;
  if (grad) grad->assign(as.size(), 0.0);
  std::vector<double> r(static_cast<std::size_t>(l.cols));
  std::vector<double> h(static_cast<std::size_t>(l.cols));
  std::vector<double> sg(static_cast<std::size_t>(l.cols));
  double loss = 0.0;
  for (std::int64_t o = 0; o < l.rows; ++o) {
    const double s = qp.scale_at(static_cast<std::size_t>(o));
    for (std::int64_t k = 0; k < l.cols; ++k) {
      const auto i = static_cast<std::size_t>(o * l.cols + k);
      const double v = ws[i] / s;
      sg[static_cast<std::size_t>(k)] = sigmoid(as[i]);
      h[static_cast<std::size_t>(k)] =
          std::clamp(sg[static_cast<std::size_t>(k)] * span + st.gamma_lo, 0.0, 1.0);
      r[static_cast<std::size_t>(k)] = (v - std::floor(v)) - h[static_cast<std::size_t>(k)];
    }
    for (std::int64_t a = 0; a < l.cols; ++a) {
      double rg = 0.0;
      for (std::int64_t b = 0; b < l.cols; ++b) {
        rg += gram[static_cast<std::size_t>(a * l.cols + b)] * r[static_cast<std::size_t>(b)];
      }
      const auto ka = static_cast<std::size_t>(a);
      loss += r[ka] * rg;
      double dl_dh = -2.0 * rg;
      if (use_reg) {
        const double u = 2.0 * h[ka] - 1.0;
        const double au = std::fabs(u);
        loss += lambda * (1.0 - std::pow(au, beta));
        if (au > 0.0) {
          dl_dh += -2.0 * lambda * beta * std::pow(au, beta - 1.0) * (u > 0 ? 1.0 : -1.0);
        }
      }
      if (grad) {
        const double raw = sg[ka] * span + st.gamma_lo;
        const double dh_da = (raw > 0.0 && raw < 1.0) ? sg[ka] * (1.0 - sg[ka]) * span : 0.0;
        (*grad)[static_cast<std::size_t>(o * l.cols + a)] = dl_dh * dh_da;
      }
    }
  }
  return loss;
}

AdaRoundState adaround_fit(const Tensor& w, const QuantParams& qp, const Tensor& x,
                           AdaRoundState st, int iters) {
  const auto l = layout_of(w, qp);
  require(x.rank() == 2 && x.dim(1) == l.cols, ErrorKind::kShapeMismatch,
          "calibration rows have " + std::to_string(x.rank() == 2 ? x.dim(1) : 0) +
              " columns, weight rows have " + std::to_string(l.cols));
  const auto gram = adaround_gram(x);
  st.cfg.iters = iters;
  std::vector<double> grad;
  auto as = st.alpha.floats();
  // Adam moments.
  constexpr double b1 = 0.9, b2 = 0.999, tiny = 1e-8;
  std::vector<double> m(as.size(), 0.0), v(as.size(), 0.0);
  double p1 = 1.0, p2 = 1.0;
  const int warm = static_cast<int>(st.cfg.warmup * iters);
  for (int t = 0; t < iters; ++t) {
    const double beta = adaround_beta(st.cfg, t);
    const double loss = adaround_objective(st, w, qp, gram, beta, t >= warm, &grad);
    if (!std::isfinite(loss)) {
      fail(ErrorKind::kNonFinite, "adaround loss is not finite at iteration " +
                                      std::to_string(t));
    }
    p1 *= b1;
    p2 *= b2;
    for (std::size_t i = 0; i < as.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      const double step = st.cfg.lr * (m[i] / (1.0 - p1)) / (std::sqrt(v[i] / (1.0 - p2)) + tiny);
      as[i] = static_cast<float>(as[i] - step);
    }
  }
  return st;
}

Tensor adaround_freeze(const Tensor& w, const QuantParams& qp, const AdaRoundState& st) {
  const auto l = layout_of(w, qp);
  require(st.alpha.shape() == w.shape(), ErrorKind::kShapeMismatch,
          "adaround state does not match the weight shape");
  Tensor out(w.shape(), DataType::int_type(qp.bits, qp.is_signed));
  auto ws = w.floats();
  auto as = st.alpha.floats();
  auto qs = out.ints();
  for (std::int64_t o = 0; o < l.rows; ++o) {
    const double s = qp.scale_at(static_cast<std::size_t>(o));
    const auto z = qp.zero_point_at(static_cast<std::size_t>(o));
    for (std::int64_t k = 0; k < l.cols; ++k) {
      const auto i = static_cast<std::size_t>(o * l.cols + k);
      const auto base = static_cast<std::int64_t>(std::floor(ws[i] / s));
      qs[i] = std::clamp(base + (as[i] >= 0.0f ? 1 : 0) + z, qp.qmin(), qp.qmax());
    }
  }
  return out;
}

double reconstruction_mse(const Tensor& w, const Tensor& w_hat, const Tensor& x) {
  require(w.shape() == w_hat.shape(), ErrorKind::kShapeMismatch,
          "reconstruction operands differ in shape");
  const auto rows = w.dim(0), cols = w.size() / w.dim(0);
  require(x.rank() == 2 && x.dim(1) == cols, ErrorKind::kShapeMismatch,
          "calibration rows do not match weight rows");
  auto a = w.floats();
  auto b = w_hat.floats();
  auto xs = x.floats();
  double err = 0.0;
  for (std::int64_t n = 0; n < x.dim(0); ++n) {
    for (std::int64_t o = 0; o < rows; ++o) {
      double d = 0.0;
      for (std::int64_t k = 0; k < cols; ++k) {
        const auto i = static_cast<std::size_t>(o * cols + k);
        d += (static_cast<double>(a[i]) - b[i]) * xs[static_cast<std::size_t>(n * cols + k)];
      }
      err += d * d;
    }
  }
  return err / static_cast<double>(x.dim(0));
}

}  // namespace qlower
