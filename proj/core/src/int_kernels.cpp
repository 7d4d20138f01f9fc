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

#include "qlower/int_kernels.hpp"

#include <algorithm>
#include <bit>

#include "qlower/error.hpp"
#include "qlower/rounding.hpp"

namespace qlower::ikernels {

namespace {

using i128 = __int128;

std::int64_t out_extent(std::int64_t in, std::int64_t k, std::int64_t pad,
                        std::int64_t stride) {
  return (in + 2 * pad - k) / stride + 1;
}

Tensor acc_tensor(Shape shape) { return Tensor(std::move(shape), DataType::int_type(64, true)); }

void mac(std::int64_t& acc, std::int64_t a, std::int64_t b, const char* where) {
  std::int64_t p = 0;
  if (__builtin_mul_overflow(a, b, &p) || __builtin_add_overflow(acc, p, &acc)) {
    fail(ErrorKind::kAccumulatorOverflow, std::string("accumulator overflow in ") + where);
  }
}

std::int64_t narrow(i128 v, const char* where) {
  if (v > INT64_MAX || v < INT64_MIN) {
    fail(ErrorKind::kAccumulatorOverflow, std::string("intermediate overflow in ") + where);
  }
  return static_cast<std::int64_t>(v);
}

std::int64_t rshift_round128(i128 v, int shift) {
  if (shift <= 0) return narrow(v << (-shift), "shift");
  const i128 half = i128{1} << (shift - 1);
  if (v >= 0) return narrow((v + half) >> shift, "shift");
  return narrow(-((-v + half) >> shift), "shift");
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, std::int64_t x_zero,
              const kernels::ConvSpec& spec) {
  require(x.rank() == 4 && w.rank() == 4 && !x.is_float() && !w.is_float(),
          ErrorKind::kShapeMismatch, "integer conv2d expects NCHW / OIHW integer tensors");
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto o = w.dim(0), cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  require(cg * spec.groups == c && o % spec.groups == 0, ErrorKind::kShapeMismatch,
          "integer conv2d channel/group mismatch");
  const auto ho = out_extent(h, kh, spec.padding, spec.stride);
  const auto wo = out_extent(wd, kw, spec.padding, spec.stride);
  Tensor out = acc_tensor({n, o, ho, wo});
  auto xs = x.ints();
  auto ws = w.ints();
  auto ys = out.ints();
  const auto og = o / spec.groups;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t oc = 0; oc < o; ++oc) {
      const auto grp = oc / og;
      for (std::int64_t oy = 0; oy < ho; ++oy) {
        for (std::int64_t ox = 0; ox < wo; ++ox) {
          std::int64_t acc = 0;
          for (std::int64_t ic = 0; ic < cg; ++ic) {
            const auto cin = grp * cg + ic;
            for (std::int64_t ky = 0; ky < kh; ++ky) {
              const auto iy = oy * spec.stride - spec.padding + ky;
              if (iy < 0 || iy >= h) continue;
              for (std::int64_t kx = 0; kx < kw; ++kx) {
                const auto ix = ox * spec.stride - spec.padding + kx;
                if (ix < 0 || ix >= wd) continue;
                mac(acc,
                    xs[static_cast<std::size_t>(((b * c + cin) * h + iy) * wd + ix)] - x_zero,
                    ws[static_cast<std::size_t>(((oc * cg + ic) * kh + ky) * kw + kx)],
                    "conv2d");
              }
            }
          }
          ys[static_cast<std::size_t>(((b * o + oc) * ho + oy) * wo + ox)] = acc;
        }
      }
    }
  }
  return out;
}

Tensor linear(const Tensor& x_in, const Tensor& w, std::int64_t x_zero) {
  const Tensor x = x_in.rank() == 4
                       ? x_in.reshaped({x_in.dim(0), x_in.size() / x_in.dim(0)})
                       : x_in;
  require(!x.is_float() && !w.is_float() && w.rank() == 2 && x.shape().back() == w.dim(1),
          ErrorKind::kShapeMismatch, "integer linear in-feature mismatch");
  const auto k = w.dim(1), o = w.dim(0);
  const auto rows = x.size() / k;
  Shape shape = x.shape();
  shape.back() = o;
  Tensor out = acc_tensor(shape);
  auto xs = x.ints();
  auto ws = w.ints();
  auto ys = out.ints();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t j = 0; j < o; ++j) {
      std::int64_t acc = 0;
      for (std::int64_t i = 0; i < k; ++i) {
        mac(acc, xs[static_cast<std::size_t>(r * k + i)] - x_zero,
            ws[static_cast<std::size_t>(j * k + i)], "linear");
      }
      ys[static_cast<std::size_t>(r * o + j)] = acc;
    }
  }
  return out;
}

Tensor mulquant(const Tensor& acc, const MulQuantParams& mq) {
  require(!acc.is_float(), ErrorKind::kFloatOpInIntegerPath,
          "mulquant received a float tensor");
  const int axis = mq.channel_axis;
  std::int64_t stride = 1, extent = 1;
  const bool per_channel = mq.multiplier.size() > 1 || mq.bias.size() > 1;
  if (per_channel) {
    require(axis >= 0 && axis < acc.rank(), ErrorKind::kShapeMismatch,
            "mulquant channel axis out of range");
    extent = acc.dim(axis);
    stride = strides_of(acc.shape())[static_cast<std::size_t>(axis)];
    require((mq.multiplier.size() == 1 ||
             static_cast<std::int64_t>(mq.multiplier.size()) == extent) &&
                (mq.bias.size() == 1 || static_cast<std::int64_t>(mq.bias.size()) == extent),
            ErrorKind::kShapeMismatch, "mulquant channel count mismatch");
  }
  Tensor out(acc.shape(), DataType::int_type(mq.out_qp.bits, mq.out_qp.is_signed));
  auto src = acc.ints();
  auto dst = out.ints();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto ch = per_channel
                        ? static_cast<std::size_t>((static_cast<std::int64_t>(i) / stride) % extent)
                        : 0;
    dst[i] = requantize(src[i], mq, ch);
  }
  return out;
}

Tensor softmax(const Tensor& logits, const LutTable& exp_lut, const LutTable& recip_lut,
               int out_frac) {
  require(!logits.is_float(), ErrorKind::kFloatOpInIntegerPath,
          "integer softmax received a float tensor");
  const auto f = logits.shape().back();
  const auto rows = logits.size() / f;
  const int bits = out_frac + 1;
  Tensor out(logits.shape(), DataType::int_type(bits, false));
  const auto hi = (std::int64_t{1} << bits) - 1;
  auto xs = logits.ints();
  auto ys = out.ints();
  std::vector<std::int64_t> e(static_cast<std::size_t>(f));
  // Exp codes are relative to the row max, so the table input is the
  // non-positive difference (zero point 0).
  const auto exp_zero = exp_lut.in_qp.zero_point_at(0);
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto* row = xs.data() + r * f;
    const auto mx = *std::max_element(row, row + f);
    std::int64_t sum = 0;
    for (std::int64_t i = 0; i < f; ++i) {
      e[static_cast<std::size_t>(i)] =
          exp_lut.entries[lut_index(exp_lut, row[i] - mx + exp_zero)];
      sum += e[static_cast<std::size_t>(i)];
    }
    const auto [rc, rshift] = lut_reciprocal(recip_lut, sum);
    for (std::int64_t i = 0; i < f; ++i) {
      // p = e / sum at out_frac; e and sum share exp_frac so it cancels.
      const i128 num = static_cast<i128>(e[static_cast<std::size_t>(i)]) * rc;
      const auto p = rshift_round128(num << out_frac, rshift);
      ys[static_cast<std::size_t>(r * f + i)] = clamp_i64(p, 0, hi);
    }
  }
  return out;
}

Tensor gelu(const Tensor& x, const GeluParams& p) {
  require(!x.is_float(), ErrorKind::kFloatOpInIntegerPath,
          "integer gelu received a float tensor");
  const auto& q = p.lut.out_qp;
  require(q.has_value(), ErrorKind::kInvalidGraph, "gelu LUT must hold output codes");
  Tensor out(x.shape(), DataType::int_type(q->bits, q->is_signed));
  auto xs = x.ints();
  auto ys = out.ints();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto c = xs[i];
    std::int64_t y = 0;
    if (c > p.lut.hi_code) {
      y = rshift_round((c - p.in_zero) * p.id_mult, p.id_frac) + p.out_zero;
    } else if (c < p.lut.lo_code) {
      y = p.out_zero;
    } else {
      y = p.lut.entries[lut_index(p.lut, c)];
    }
    ys[i] = clamp_i64(y, p.lo, p.hi);
  }
  return out;
}

std::int64_t inv_sqrt_fixed(std::int64_t v, int in_frac, int out_frac) {
  require(v > 0, ErrorKind::kInvalidArgument, "inverse square root of a non-positive value");
  const int p = static_cast<int>(std::bit_width(static_cast<std::uint64_t>(v))) - 1;
  // Real value x = v / 2^in_frac = mm * 2^ee with an even exponent ee and
  // mantissa mm in [1, 4).
  const int e = p - in_frac;
  const int ee = e >= 0 ? (e / 2) * 2 : -(((-e) + 1) / 2) * 2;
  const int mshift = ee + in_frac - 16;
  const std::int64_t mm = mshift >= 0 ? (v >> mshift) : (v << (-mshift));
  // Linear fit of 1/sqrt(mm) on [1, 2) and [2, 4), 16 fraction bits.
  std::int64_t s = 0;
  if (mm < (std::int64_t{2} << 16)) {
    s = 65536 - ((19195 * (mm - 65536)) >> 16);
  } else {
    s = 46341 - ((6786 * (mm - (std::int64_t{2} << 16))) >> 16);
  }
  const int rshift = out_frac - 16 - ee / 2;
  i128 r = rshift >= 0 ? (static_cast<i128>(s) << rshift) : (static_cast<i128>(s) >> (-rshift));
  if (r < 1) r = 1;
  const i128 three = i128{3} << out_frac;
  for (int it = 0; it < 2; ++it) {
    // x * r^2 at out_frac, then r <- r * (3 - x r^2) / 2.
    const i128 xr = (static_cast<i128>(v) * r * r) >> (in_frac + out_frac);
    r = (r * (three - xr)) >> (out_frac + 1);
    if (r < 1) r = 1;
  }
  return narrow(r, "inverse square root");
}

Tensor layernorm_instant(const Tensor& x, const LayerNormParams& p) {
  require(!x.is_float(), ErrorKind::kFloatOpInIntegerPath,
          "integer layernorm received a float tensor");
  const auto f = x.shape().back();
  require(static_cast<std::int64_t>(p.gamma.size()) == f &&
              static_cast<std::int64_t>(p.beta.size()) == f,
          ErrorKind::kShapeMismatch, "layernorm gamma/beta length must equal features");
  const auto rows = x.size() / f;
  const auto hi_bits = std::bit_width(static_cast<std::uint64_t>(p.hi));
  Tensor out(x.shape(), DataType::int_type(std::max<int>(2, static_cast<int>(hi_bits) +
                                                                (p.lo < 0 ? 1 : 0)),
                                           p.lo < 0));
  auto xs = x.ints();
  auto ys = out.ints();
  const int big = p.fp.frac_bits + p.isqrt_frac + p.out_frac;
  std::vector<std::int64_t> d(static_cast<std::size_t>(f));
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto* row = xs.data() + r * f;
    std::int64_t sum = 0;
    for (std::int64_t i = 0; i < f; ++i) sum += row[i] - p.in_zero;
    const auto mu = div_round(sum, f);
    std::int64_t ss = 0;
    for (std::int64_t i = 0; i < f; ++i) {
      d[static_cast<std::size_t>(i)] = row[i] - p.in_zero - mu;
      mac(ss, d[static_cast<std::size_t>(i)], d[static_cast<std::size_t>(i)], "layernorm");
    }
    const auto var = div_round(ss << p.var_frac, f) + p.eps_code;
    const auto inv = inv_sqrt_fixed(var, p.var_frac, p.isqrt_frac);
    for (std::int64_t i = 0; i < f; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const i128 t = static_cast<i128>(d[k]) * inv;
      const i128 y = t * p.gamma[k] + (static_cast<i128>(p.beta[k]) << p.isqrt_frac);
      const auto q = rshift_round128(y * p.out_mult, big) + p.out_zero;
      ys[static_cast<std::size_t>(r * f + i)] = clamp_i64(q, p.lo, p.hi);
    }
  }
  return out;
}

Tensor relu(const Tensor& x, std::int64_t zero) {
  Tensor out = x;
  for (auto& v : out.ints()) v = std::max(v, zero);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, const AddParams& p) {
  require(a.shape() == b.shape() && !a.is_float() && !b.is_float(), ErrorKind::kShapeMismatch,
          "integer add operands differ");
  const auto bits = std::bit_width(static_cast<std::uint64_t>(p.hi)) + (p.lo < 0 ? 1 : 0);
  Tensor out(a.shape(), DataType::int_type(std::max<int>(2, static_cast<int>(bits)), p.lo < 0));
  auto as = a.ints();
  auto bs = b.ints();
  auto ys = out.ints();
  for (std::size_t i = 0; i < ys.size(); ++i) {
    std::int64_t acc = 0;
    mac(acc, as[i] - p.a_zero, p.a_mult, "add");
    mac(acc, bs[i] - p.b_zero, p.b_mult, "add");
    ys[i] = clamp_i64(rshift_round(acc, p.frac) + p.out_zero, p.lo, p.hi);
  }
  return out;
}

namespace {

template <typename Reduce>
Tensor pool(const Tensor& x, const kernels::PoolSpec& spec, Reduce&& reduce) {
  require(x.rank() == 4 && !x.is_float(), ErrorKind::kShapeMismatch,
          "integer pooling expects NCHW codes");
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto k_h = spec.global ? h : spec.kernel;
  const auto k_w = spec.global ? w : spec.kernel;
  const auto stride = spec.global ? 1 : spec.stride;
  const auto pad = spec.global ? 0 : spec.padding;
  const auto ho = out_extent(h, k_h, pad, stride);
  const auto wo = out_extent(w, k_w, pad, stride);
  Tensor out({n, c, ho, wo}, x.dtype());
  auto xs = x.ints();
  auto ys = out.ints();
  std::vector<std::int64_t> win;
  for (std::int64_t p = 0; p < n * c; ++p) {
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        win.clear();
        for (std::int64_t ky = 0; ky < k_h; ++ky) {
          const auto iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t kx = 0; kx < k_w; ++kx) {
            const auto ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            win.push_back(xs[static_cast<std::size_t>((p * h + iy) * w + ix)]);
          }
        }
        ys[static_cast<std::size_t>((p * ho + oy) * wo + ox)] = reduce(win);
      }
    }
  }
  return out;
}

}  // namespace

Tensor maxpool(const Tensor& x, const kernels::PoolSpec& spec) {
  return pool(x, spec, [](const std::vector<std::int64_t>& w) {
    return *std::max_element(w.begin(), w.end());
  });
}

Tensor avgpool(const Tensor& x, std::int64_t zero, const kernels::PoolSpec& spec) {
  return pool(x, spec, [zero](const std::vector<std::int64_t>& w) {
    std::int64_t s = 0;
    for (auto v : w) s += v - zero;
    return div_round(s, static_cast<std::int64_t>(w.size())) + zero;
  });
}

Tensor attention(const Tensor& x, const AttentionParams& p, const IntHook& hook) {
  require(x.rank() == 3 && !x.is_float(), ErrorKind::kShapeMismatch,
          "integer attention expects [B,T,E] codes");
  auto emit = [&](const char* what, const Tensor& t) {
    if (hook) hook(what, t);
  };
  const Tensor q = mulquant(linear(x, *p.wq, p.x_zero), p.mq_q);
  emit("q", q);
  const Tensor k = mulquant(linear(x, *p.wk, p.x_zero), p.mq_k);
  emit("k", k);
  const Tensor v = mulquant(linear(x, *p.wv, p.x_zero), p.mq_v);
  emit("v", v);
  const auto b = x.dim(0), t = x.dim(1), e = x.dim(2), heads = p.heads, d = e / heads;
  const Tensor qh = kernels::split_heads(q, heads);
  const Tensor kh = kernels::split_heads(k, heads);
  const Tensor vh = kernels::split_heads(v, heads);
  const auto zq = p.mq_q.out_qp.zero_point_at(0);
  const auto zk = p.mq_k.out_qp.zero_point_at(0);
  const auto zv = p.mq_v.out_qp.zero_point_at(0);
  Tensor sacc = acc_tensor({b, heads, t, t});
  for (std::int64_t ph = 0; ph < b * heads; ++ph) {
    for (std::int64_t i = 0; i < t; ++i) {
      for (std::int64_t j = 0; j < t; ++j) {
        std::int64_t acc = 0;
        for (std::int64_t di = 0; di < d; ++di) {
          mac(acc, qh.ints()[static_cast<std::size_t>((ph * t + i) * d + di)] - zq,
              kh.ints()[static_cast<std::size_t>((ph * t + j) * d + di)] - zk, "attention scores");
        }
        sacc.ints()[static_cast<std::size_t>((ph * t + i) * t + j)] = acc;
      }
    }
  }
  const Tensor scores = mulquant(sacc, p.mq_scores);
  emit("scores", scores);
  const Tensor probs = softmax(scores, p.exp_lut, p.recip_lut, p.probs_frac);
  emit("probs", probs);
  Tensor cacc = acc_tensor({b, heads, t, d});
  for (std::int64_t ph = 0; ph < b * heads; ++ph) {
    for (std::int64_t i = 0; i < t; ++i) {
      for (std::int64_t di = 0; di < d; ++di) {
        std::int64_t acc = 0;
        for (std::int64_t j = 0; j < t; ++j) {
          mac(acc, probs.ints()[static_cast<std::size_t>((ph * t + i) * t + j)],
              vh.ints()[static_cast<std::size_t>((ph * t + j) * d + di)] - zv, "attention context");
        }
        cacc.ints()[static_cast<std::size_t>((ph * t + i) * d + di)] = acc;
      }
    }
  }
  const Tensor ctx = kernels::merge_heads(mulquant(cacc, p.mq_ctx));
  emit("ctx", ctx);
  return mulquant(linear(ctx, *p.wo, p.mq_ctx.out_qp.zero_point_at(0)), p.mq_out);
}

}  // namespace qlower::ikernels
