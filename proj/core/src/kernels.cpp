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

#include "qlower/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qlower/error.hpp"
#include "qlower/instrument.hpp"

namespace qlower::kernels {

namespace {

std::int64_t out_extent(std::int64_t in, std::int64_t k, std::int64_t pad,
                        std::int64_t stride) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias,
              const ConvSpec& spec) {
  require(x.rank() == 4 && w.rank() == 4, ErrorKind::kShapeMismatch,
          "conv2d expects NCHW input and OIHW weight");
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto o = w.dim(0), cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const auto g = spec.groups;
  require(cg * g == c && o % g == 0, ErrorKind::kShapeMismatch,
          "conv2d channel/group mismatch");
  const auto ho = out_extent(h, kh, spec.padding, spec.stride);
  const auto wo = out_extent(wd, kw, spec.padding, spec.stride);
  Tensor out({n, o, ho, wo}, DataType::float32());
  auto xs = x.floats();
  auto ws = w.floats();
  auto ys = out.floats();
  const auto og = o / g;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t oc = 0; oc < o; ++oc) {
      const auto grp = oc / og;
      for (std::int64_t oy = 0; oy < ho; ++oy) {
        for (std::int64_t ox = 0; ox < wo; ++ox) {
          double acc = bias ? bias->floats()[static_cast<std::size_t>(oc)] : 0.0;
          for (std::int64_t ic = 0; ic < cg; ++ic) {
            const auto cin = grp * cg + ic;
            for (std::int64_t ky = 0; ky < kh; ++ky) {
              const auto iy = oy * spec.stride - spec.padding + ky;
              if (iy < 0 || iy >= h) continue;
              for (std::int64_t kx = 0; kx < kw; ++kx) {
                const auto ix = ox * spec.stride - spec.padding + kx;
                if (ix < 0 || ix >= wd) continue;
                acc += static_cast<double>(
                           xs[static_cast<std::size_t>(((b * c + cin) * h + iy) * wd + ix)]) *
                       ws[static_cast<std::size_t>(((oc * cg + ic) * kh + ky) * kw + kx)];
              }
            }
          }
          ys[static_cast<std::size_t>(((b * o + oc) * ho + oy) * wo + ox)] =
              static_cast<float>(acc);
        }
      }
    }
  }
  instrument::note_float_op(static_cast<std::uint64_t>(out.size() * cg * kh * kw));
  return out;
}

Tensor linear(const Tensor& x_in, const Tensor& w, const Tensor* bias) {
  const Tensor x = x_in.rank() == 4
                       ? x_in.reshaped({x_in.dim(0), x_in.size() / x_in.dim(0)})
                       : x_in;
  require(w.rank() == 2 && x.rank() >= 1 && x.shape().back() == w.dim(1),
          ErrorKind::kShapeMismatch, "linear in-feature mismatch");
  const auto k = w.dim(1), o = w.dim(0);
  const auto rows = x.size() / k;
  Shape shape = x.shape();
  shape.back() = o;
  Tensor out(shape, DataType::float32());
  auto xs = x.floats();
  auto ws = w.floats();
  auto ys = out.floats();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t j = 0; j < o; ++j) {
      double acc = bias ? bias->floats()[static_cast<std::size_t>(j)] : 0.0;
      for (std::int64_t i = 0; i < k; ++i) {
        acc += static_cast<double>(xs[static_cast<std::size_t>(r * k + i)]) *
               ws[static_cast<std::size_t>(j * k + i)];
      }
      ys[static_cast<std::size_t>(r * o + j)] = static_cast<float>(acc);
    }
  }
  instrument::note_float_op(static_cast<std::uint64_t>(rows * o * k));
  return out;
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 const Tensor& mean, const Tensor& var, double eps) {
  require(x.rank() >= 2, ErrorKind::kShapeMismatch, "batchnorm needs a channel axis");
  const auto c = x.dim(1);
  const auto inner = x.size() / (x.dim(0) * c);
  Tensor out(x.shape(), DataType::float32());
  auto xs = x.floats();
  auto ys = out.floats();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto ch = static_cast<std::size_t>((static_cast<std::int64_t>(i) / inner) % c);
    const double inv = 1.0 / std::sqrt(static_cast<double>(var.floats()[ch]) + eps);
    ys[i] = static_cast<float>(gamma.floats()[ch] * (xs[i] - mean.floats()[ch]) * inv +
                               beta.floats()[ch]);
  }
  instrument::note_float_op(xs.size());
  return out;
}

Tensor layernorm(const Tensor& x, const Tensor* gamma, const Tensor* beta,
                 double eps, std::optional<std::pair<double, double>> running) {
  const auto f = x.shape().back();
  const auto rows = x.size() / f;
  Tensor out(x.shape(), DataType::float32());
  auto xs = x.floats();
  auto ys = out.floats();
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto* row = xs.data() + r * f;
    double mu = 0.0, var = 0.0;
    if (running) {
      mu = running->first;
      var = running->second;
    } else {
      for (std::int64_t i = 0; i < f; ++i) mu += row[i];
      mu /= static_cast<double>(f);
      for (std::int64_t i = 0; i < f; ++i) var += (row[i] - mu) * (row[i] - mu);
      var /= static_cast<double>(f);
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::int64_t i = 0; i < f; ++i) {
      double y = (row[i] - mu) * inv;
      if (gamma) y *= gamma->floats()[static_cast<std::size_t>(i)];
      if (beta) y += beta->floats()[static_cast<std::size_t>(i)];
      ys[static_cast<std::size_t>(r * f + i)] = static_cast<float>(y);
    }
  }
  instrument::note_float_op(xs.size() * 4);
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.floats()) v = std::max(v, 0.0f);
  instrument::note_float_op(x.floats().size());
  return out;
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

Tensor gelu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.floats()) v = static_cast<float>(gelu_value(v));
  instrument::note_float_op(x.floats().size());
  return out;
}

Tensor softmax(const Tensor& x) {
  const auto f = x.shape().back();
  const auto rows = x.size() / f;
  Tensor out(x.shape(), DataType::float32());
  auto xs = x.floats();
  auto ys = out.floats();
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto* row = xs.data() + r * f;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t i = 0; i < f; ++i) mx = std::max(mx, static_cast<double>(row[i]));
    double sum = 0.0;
    for (std::int64_t i = 0; i < f; ++i) sum += std::exp(row[i] - mx);
    for (std::int64_t i = 0; i < f; ++i) {
      ys[static_cast<std::size_t>(r * f + i)] =
          static_cast<float>(std::exp(row[i] - mx) / sum);
    }
  }
  instrument::note_float_op(xs.size() * 3);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::kShapeMismatch, "add operand shapes differ");
  Tensor out = a;
  auto bs = b.floats();
  auto ys = out.floats();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += bs[i];
  instrument::note_float_op(ys.size());
  return out;
}

namespace {

template <typename Reduce>
Tensor pool(const Tensor& x, const PoolSpec& spec, Reduce&& reduce) {
  require(x.rank() == 4, ErrorKind::kShapeMismatch, "pooling expects NCHW");
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto k_h = spec.global ? h : spec.kernel;
  const auto k_w = spec.global ? w : spec.kernel;
  const auto stride = spec.global ? 1 : spec.stride;
  const auto pad = spec.global ? 0 : spec.padding;
  const auto ho = out_extent(h, k_h, pad, stride);
  const auto wo = out_extent(w, k_w, pad, stride);
  Tensor out({n, c, ho, wo}, DataType::float32());
  auto xs = x.floats();
  auto ys = out.floats();
  std::vector<float> window;
  for (std::int64_t p = 0; p < n * c; ++p) {
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        window.clear();
        for (std::int64_t ky = 0; ky < k_h; ++ky) {
          const auto iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t kx = 0; kx < k_w; ++kx) {
            const auto ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            window.push_back(xs[static_cast<std::size_t>((p * h + iy) * w + ix)]);
          }
        }
        ys[static_cast<std::size_t>((p * ho + oy) * wo + ox)] = reduce(window);
      }
    }
  }
  instrument::note_float_op(xs.size());
  return out;
}

}  // namespace

Tensor maxpool(const Tensor& x, const PoolSpec& spec) {
  return pool(x, spec, [](const std::vector<float>& win) {
    return *std::max_element(win.begin(), win.end());
  });
}

Tensor avgpool(const Tensor& x, const PoolSpec& spec) {
  return pool(x, spec, [](const std::vector<float>& win) {
    double s = 0.0;
    for (float v : win) s += v;
    return static_cast<float>(s / static_cast<double>(win.size()));
  });
}

Tensor flatten(const Tensor& x) { return x.reshaped({x.dim(0), x.size() / x.dim(0)}); }

Tensor split_heads(const Tensor& x, std::int64_t heads) {
  const auto b = x.dim(0), t = x.dim(1), e = x.dim(2), d = e / heads;
  Tensor out({b, heads, t, d}, x.dtype());
  const bool fl = x.is_float();
  for (std::int64_t bi = 0; bi < b; ++bi) {
    for (std::int64_t ti = 0; ti < t; ++ti) {
      for (std::int64_t hi = 0; hi < heads; ++hi) {
        for (std::int64_t di = 0; di < d; ++di) {
          const auto src = static_cast<std::size_t>((bi * t + ti) * e + hi * d + di);
          const auto dst = static_cast<std::size_t>(((bi * heads + hi) * t + ti) * d + di);
          if (fl) {
            out.floats()[dst] = x.floats()[src];
          } else {
            out.ints()[dst] = x.ints()[src];
          }
        }
      }
    }
  }
  return out;
}

Tensor merge_heads(const Tensor& x) {
  const auto b = x.dim(0), heads = x.dim(1), t = x.dim(2), d = x.dim(3);
  Tensor out({b, t, heads * d}, x.dtype());
  const bool fl = x.is_float();
  for (std::int64_t bi = 0; bi < b; ++bi) {
    for (std::int64_t hi = 0; hi < heads; ++hi) {
      for (std::int64_t ti = 0; ti < t; ++ti) {
        for (std::int64_t di = 0; di < d; ++di) {
          const auto src = static_cast<std::size_t>(((bi * heads + hi) * t + ti) * d + di);
          const auto dst = static_cast<std::size_t>((bi * t + ti) * heads * d + hi * d + di);
          if (fl) {
            out.floats()[dst] = x.floats()[src];
          } else {
            out.ints()[dst] = x.ints()[src];
          }
        }
      }
    }
  }
  return out;
}

Tensor attention(const Tensor& x, const AttentionWeights& w, std::int64_t heads,
                 const AttentionHook& hook) {
  require(x.rank() == 3, ErrorKind::kShapeMismatch, "attention expects [B,T,E]");
  auto apply = [&](const char* what, Tensor& t) {
    if (hook) hook(what, t);
  };
  Tensor q = linear(x, *w.wq, w.bq);
  apply("q", q);
  Tensor k = linear(x, *w.wk, w.bk);
  apply("k", k);
  Tensor v = linear(x, *w.wv, w.bv);
  apply("v", v);
  const auto b = x.dim(0), t = x.dim(1), e = x.dim(2), d = e / heads;
  const Tensor qh = split_heads(q, heads);
  const Tensor kh = split_heads(k, heads);
  const Tensor vh = split_heads(v, heads);
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor scores({b, heads, t, t}, DataType::float32());
  for (std::int64_t p = 0; p < b * heads; ++p) {
    for (std::int64_t i = 0; i < t; ++i) {
      for (std::int64_t j = 0; j < t; ++j) {
        double acc = 0.0;
        for (std::int64_t di = 0; di < d; ++di) {
          acc += static_cast<double>(qh.floats()[static_cast<std::size_t>((p * t + i) * d + di)]) *
                 kh.floats()[static_cast<std::size_t>((p * t + j) * d + di)];
        }
        scores.floats()[static_cast<std::size_t>((p * t + i) * t + j)] =
            static_cast<float>(acc * inv);
      }
    }
  }
  apply("scores", scores);
  Tensor probs = softmax(scores);
  apply("probs", probs);
  Tensor ctxh({b, heads, t, d}, DataType::float32());
  for (std::int64_t p = 0; p < b * heads; ++p) {
    for (std::int64_t i = 0; i < t; ++i) {
      for (std::int64_t di = 0; di < d; ++di) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < t; ++j) {
          acc += static_cast<double>(probs.floats()[static_cast<std::size_t>((p * t + i) * t + j)]) *
                 vh.floats()[static_cast<std::size_t>((p * t + j) * d + di)];
        }
        ctxh.floats()[static_cast<std::size_t>((p * t + i) * d + di)] = static_cast<float>(acc);
      }
    }
  }
  instrument::note_float_op(static_cast<std::uint64_t>(2 * b * heads * t * t * d));
  Tensor ctx = merge_heads(ctxh);
  apply("ctx", ctx);
  return linear(ctx, *w.wo, w.bo);
}

Tensor im2col(const Tensor& x, std::int64_t kh, std::int64_t kw,
              const ConvSpec& spec, std::int64_t group, float pad_value) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto cg = c / spec.groups;
  const auto ho = out_extent(h, kh, spec.padding, spec.stride);
  const auto wo = out_extent(w, kw, spec.padding, spec.stride);
  const auto cols = cg * kh * kw;
  Tensor out({n * ho * wo, cols}, DataType::float32());
  auto xs = x.floats();
  auto ys = out.floats();
  std::int64_t row = 0;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox, ++row) {
        std::int64_t col = 0;
        for (std::int64_t ic = 0; ic < cg; ++ic) {
          const auto cin = group * cg + ic;
          for (std::int64_t ky = 0; ky < kh; ++ky) {
            for (std::int64_t kx = 0; kx < kw; ++kx, ++col) {
              const auto iy = oy * spec.stride - spec.padding + ky;
              const auto ix = ox * spec.stride - spec.padding + kx;
              const bool in = iy >= 0 && iy < h && ix >= 0 && ix < w;
              ys[static_cast<std::size_t>(row * cols + col)] =
                  in ? xs[static_cast<std::size_t>(((b * c + cin) * h + iy) * w + ix)]
                     : pad_value;
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace qlower::kernels
