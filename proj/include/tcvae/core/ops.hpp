// Copyright 2026 The tcvae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Differentiable tensor operations. Each one computes its value eagerly and,
// when recording, registers a rule that pushes the output gradient back into
// the inputs that require it.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tcvae/core/error.hpp"
#include "tcvae/core/kernels.hpp"
#include "tcvae/core/tensor.hpp"

namespace tcvae {

inline constexpr double kLayerNormEpsilon = 1e-5;

namespace detail {

enum class BinaryKind { kAdd, kSub, kMul };

inline Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind) {
  const bool same = a.shape() == b.shape();
  const bool a_scalar = a.numel() == 1;
  const bool b_scalar = b.numel() == 1;
  if (!same && !a_scalar && !b_scalar) {
    throw DimensionError("elementwise operands " + a.shape().str() + " and " +
                         b.shape().str() + " are not broadcast-compatible");
  }
  const Shape shape = same ? a.shape() : (a_scalar ? b.shape() : a.shape());
  const std::size_t n = shape.numel();
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t sa = (!same && a_scalar) ? 0 : 1;
  const std::size_t sb = (!same && b_scalar) ? 0 : 1;
  std::vector<double> out(n);
  switch (kind) {
    case BinaryKind::kAdd:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] + bv[i * sb];
      break;
    case BinaryKind::kSub:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] - bv[i * sb];
      break;
    case BinaryKind::kMul:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i * sa] * bv[i * sb];
      break;
  }
  const bool track = tracking({&a, &b});
  return make_result(shape, std::move(out), track,
                     [a, b, kind, sa, sb](Node& o) {
    const std::size_t n = o.value.size();
    const auto& g = o.grad;
    if (a.requires_grad()) {
      auto& ga = grad_of(a);
      const auto bv = b.data();
      for (std::size_t i = 0; i < n; ++i) {
        ga[i * sa] += kind == BinaryKind::kMul ? g[i] * bv[i * sb] : g[i];
      }
    }
    if (b.requires_grad()) {
      auto& gb = grad_of(b);
      const auto av = a.data();
      for (std::size_t i = 0; i < n; ++i) {
        switch (kind) {
          case BinaryKind::kAdd: gb[i * sb] += g[i]; break;
          case BinaryKind::kSub: gb[i * sb] -= g[i]; break;
          case BinaryKind::kMul: gb[i * sb] += g[i] * av[i * sa]; break;
        }
      }
    }
  });
}

// y = f(x) elementwise; `derivative(x, y)` gives dy/dx.
template <class F, class D>
Tensor unary(const Tensor& x, F f, D derivative) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), tracking({&x}),
                     [x, derivative](Node& o) {
    auto& gx = grad_of(x);
    const auto xv = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += o.grad[i] * derivative(xv[i], o.value[i]);
    }
  });
}

// e^x for x <= 0 within 3 ulp, saturating at e^-708. Written as straight-line
// arithmetic (Cody-Waite reduction, degree-13 Taylor polynomial) so loops
// over it vectorize.
inline double exp_nonpositive(double x) {
  x = x > -708.0 ? x : -708.0;
  constexpr double kLog2e = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShift = 6755399441055744.0;  // 1.5 * 2^52: rounds to integer
  const double t = x * kLog2e + kShift;
  const double n = t - kShift;
  const double r = (x - n * kLn2Hi) - n * kLn2Lo;
  double p = 1.0 / 6227020800.0;
  p = kernels::madd(p, r, 1.0 / 479001600.0);
  p = kernels::madd(p, r, 1.0 / 39916800.0);
  p = kernels::madd(p, r, 1.0 / 3628800.0);
  p = kernels::madd(p, r, 1.0 / 362880.0);
  p = kernels::madd(p, r, 1.0 / 40320.0);
  p = kernels::madd(p, r, 1.0 / 5040.0);
  p = kernels::madd(p, r, 1.0 / 720.0);
  p = kernels::madd(p, r, 1.0 / 120.0);
  p = kernels::madd(p, r, 1.0 / 24.0);
  p = kernels::madd(p, r, 1.0 / 6.0);
  p = kernels::madd(p, r, 0.5);
  p = kernels::madd(p, r, 1.0);
  p = kernels::madd(p, r, 1.0);
  const std::int64_t exponent =
      std::bit_cast<std::int64_t>(t) - std::bit_cast<std::int64_t>(kShift) + 1023;
  return p * std::bit_cast<double>(exponent << 52);
}

// Branch-free so mixed-sign inputs do not stall and loops vectorize.
inline double sigmoid(double x) {
  const double e = exp_nonpositive(-std::abs(x));
  const double r = 1.0 / (1.0 + e);
  return x >= 0 ? r : e * r;
}

inline void require_rank(const Tensor& t, std::size_t lo, std::size_t hi,
                         const char* what) {
  if (t.rank() < lo || t.rank() > hi) {
    throw DimensionError(std::string(what) + ": unsupported operand shape " +
                         t.shape().str());
  }
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(a, b, detail::BinaryKind::kAdd);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(a, b, detail::BinaryKind::kSub);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(a, b, detail::BinaryKind::kMul);
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

inline Tensor scale(const Tensor& x, double factor) {
  return detail::unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

inline Tensor silu(const Tensor& x) {
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  std::vector<double> slope(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    const double s = detail::sigmoid(v);
    out[i] = v * s;
    slope[i] = s * (1.0 + v * (1.0 - s));
  }
  const bool track = detail::tracking({&x});
  if (!track) slope.clear();
  return detail::make_result(x.shape(), std::move(out), track,
                             [x, slope = std::move(slope)](detail::Node& o) {
    auto& gx = detail::grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i] * slope[i];
  });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

inline Tensor square(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

// Values outside [lo, hi] are pinned and pass no gradient.
inline Tensor clamp(const Tensor& x, double lo, double hi) {
  return detail::unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

// Sum of all entries, as a {1} tensor.
inline Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return detail::make_result(Shape{1}, {total}, detail::tracking({&x}),
                             [x](detail::Node& o) {
    auto& gx = detail::grad_of(x);
    for (double& g : gx) g += o.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape.numel() != x.numel()) {
    throw DimensionError("cannot reshape " + x.shape().str() + " to " +
                         shape.str());
  }
  return detail::make_result(shape, x.values(), detail::tracking({&x}),
                             [x](detail::Node& o) {
    auto& gx = detail::grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
  });
}

namespace detail {

// Fills `rows` copies of the bias (or zeros) so a following accumulating
// product lands as product + bias.
inline std::vector<double> bias_rows(std::size_t rows, std::size_t n, const Tensor* bias) {
  std::vector<double> out(rows * n);
  if (bias != nullptr) {
    const auto bv = bias->data();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * n);
  }
  return out;
}

inline void bias_grad(const Tensor& bias, const std::vector<double>& g, std::size_t rows,
                      std::size_t n) {
  auto& gb = grad_of(bias);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
  }
}

inline Tensor affine(const Tensor& a, const Tensor& b, const Tensor* bias) {
  require_rank(a, 2, 4, "matmul");
  if (b.rank() != 2 || a.shape().back() != b.shape()[0]) {
    throw DimensionError("matmul: inner dimensions of " + a.shape().str() +
                         " and " + b.shape().str() + " differ");
  }
  const std::size_t k = b.shape()[0];
  const std::size_t n = b.shape()[1];
  if (bias != nullptr && (bias->rank() != 1 || bias->numel() != n)) {
    throw DimensionError("linear: bias " + bias->shape().str() + " does not match width " +
                         std::to_string(n));
  }
  const std::size_t m = a.numel() / k;
  std::vector<double> out = bias_rows(m, n, bias);
  kernels::gemm(m, n, k, a.data().data(), b.data().data(), out.data(), bias != nullptr);
  const Shape shape = a.shape().with(a.rank() - 1, n);
  const Tensor bias_t = bias != nullptr ? *bias : Tensor();
  const bool track = bias != nullptr ? tracking({&a, &b, bias}) : tracking({&a, &b});
  return make_result(shape, std::move(out), track,
                     [a, b, bias_t, m, n, k](Node& o) {
    if (a.requires_grad()) {
      kernels::gemm_nt(m, k, n, o.grad.data(), b.data().data(), grad_of(a).data(), true);
    }
    if (b.requires_grad()) {
      kernels::gemm_tn(k, n, m, a.data().data(), o.grad.data(), grad_of(b).data(), true);
    }
    if (bias_t.requires_grad()) bias_grad(bias_t, o.grad, m, n);
  });
}

}  // namespace detail

// a[..., k] * b[k, n] -> [..., n]; leading axes of `a` are flattened into rows.
inline Tensor matmul(const Tensor& a, const Tensor& b) { return detail::affine(a, b, nullptr); }

// matmul(x, w) + bias[n], as one node.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  return detail::affine(x, w, &bias);
}

// Position-wise feed-forward block silu(x w1 + b1) w2 + b2 over the last axis,
// as one node that keeps only the hidden activations and their slopes.
inline Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1,
                           const Tensor& w2, const Tensor& b2) {
  const std::size_t d = x.shape().back();
  const std::size_t hidden = w1.rank() == 2 ? w1.shape()[1] : 0;
  const bool ok = w1.rank() == 2 && w1.shape()[0] == d && b1.rank() == 1 &&
                  b1.numel() == hidden && w2.rank() == 2 && w2.shape()[0] == hidden &&
                  b2.rank() == 1 && b2.numel() == w2.shape()[1];
  if (!ok || hidden == 0) {
    throw DimensionError("feed_forward: weights " + w1.shape().str() + ", " +
                         w2.shape().str() + " do not fit input " + x.shape().str());
  }
  const std::size_t out_width = w2.shape()[1];
  const std::size_t rows = x.numel() / d;
  const bool track = detail::tracking({&x, &w1, &b1, &w2, &b2});

  std::vector<double> act = detail::bias_rows(rows, hidden, &b1);
  kernels::gemm(rows, hidden, d, x.data().data(), w1.data().data(), act.data(), true);
  // Left uninitialized: every entry is written below.
  std::shared_ptr<double[]> slope(track ? new double[act.size()] : nullptr);
  for (std::size_t i = 0; i < act.size(); ++i) {
    const double v = act[i];
    const double sg = detail::sigmoid(v);
    act[i] = v * sg;
    if (track) slope[i] = sg * (1.0 + v * (1.0 - sg));
  }
  std::vector<double> out = detail::bias_rows(rows, out_width, &b2);
  kernels::gemm(rows, out_width, hidden, act.data(), w2.data().data(), out.data(), true);
  if (!track) act.clear();
  const Shape shape = x.shape().with(x.rank() - 1, out_width);
  return detail::make_result(
      shape, std::move(out), track,
      [x, w1, b1, w2, b2, rows, d, hidden, out_width, act = std::move(act),
       slope = std::move(slope)](detail::Node& o) {
        const double* dy = o.grad.data();
        if (w2.requires_grad()) {
          kernels::gemm_tn(hidden, out_width, rows, act.data(), dy, detail::grad_of(w2).data(),
                           true);
        }
        if (b2.requires_grad()) detail::bias_grad(b2, o.grad, rows, out_width);
        thread_local std::vector<double> dh;
        dh.resize(rows * hidden);
        kernels::gemm_nt(rows, hidden, out_width, dy, w2.data().data(), dh.data());
        for (std::size_t i = 0; i < dh.size(); ++i) dh[i] *= slope[i];
        if (w1.requires_grad()) {
          kernels::gemm_tn(d, hidden, rows, x.data().data(), dh.data(),
                           detail::grad_of(w1).data(), true);
        }
        if (b1.requires_grad()) detail::bias_grad(b1, dh, rows, hidden);
        if (x.requires_grad()) {
          kernels::gemm_nt(rows, d, hidden, dh.data(), w1.data().data(),
                           detail::grad_of(x).data(), true);
        }
      });
}

// Scaled dot-product self-attention softmax(q k^T / sqrt(d_h)) v for q, k,
// v [B, T, d], with `heads` splitting the last axis evenly, as one node. Each
// head's [B, T, T] weights are appended to `weights` when given.
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                        std::vector<Tensor>* weights = nullptr) {
  if (q.rank() != 3 || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError("attention: q, k, v must share one [B x T x d] shape, got " +
                         q.shape().str() + ", " + k.shape().str() + ", " + v.shape().str());
  }
  const std::size_t batch = q.shape()[0];
  const std::size_t t = q.shape()[1];
  const std::size_t d = q.shape()[2];
  if (heads == 0 || d % heads != 0) {
    throw ContractViolation("attention heads must divide the model width");
  }
  const std::size_t dh = d / heads;
  const double factor = 1.0 / std::sqrt(static_cast<double>(dh));

  // Copies head h of entry b of x into a contiguous [T x d_h] block.
  const auto gather = [t, d, dh](const double* x, std::size_t b, std::size_t h, double* dst) {
    for (std::size_t i = 0; i < t; ++i) {
      std::copy_n(x + (b * t + i) * d + h * dh, dh, dst + i * dh);
    }
  };
  const auto scatter_add = [t, d, dh](const double* src, std::size_t b, std::size_t h,
                                      double* x) {
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < dh; ++j) x[(b * t + i) * d + h * dh + j] += src[i * dh + j];
    }
  };

  // probs[h][b] is the [T x T] weight matrix of head h for entry b.
  std::vector<double> probs(heads * batch * t * t);
  std::vector<double> out(batch * t * d);
  std::vector<double> qh(t * dh), kh(t * dh), vh(t * dh), oh(t * dh);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t b = 0; b < batch; ++b) {
      gather(q.data().data(), b, h, qh.data());
      gather(k.data().data(), b, h, kh.data());
      gather(v.data().data(), b, h, vh.data());
      double* a = probs.data() + (h * batch + b) * t * t;
      kernels::gemm_nt(t, t, dh, qh.data(), kh.data(), a);
      for (std::size_t i = 0; i < t; ++i) {
        double* row = a + i * t;
        double mx = row[0] * factor;
        for (std::size_t j = 0; j < t; ++j) {
          row[j] *= factor;
          mx = std::max(mx, row[j]);
        }
        for (std::size_t j = 0; j < t; ++j) row[j] = detail::exp_nonpositive(row[j] - mx);
        double total = 0.0;
        for (std::size_t j = 0; j < t; ++j) total += row[j];
        for (std::size_t j = 0; j < t; ++j) row[j] /= total;
      }
      kernels::gemm(t, dh, t, a, vh.data(), oh.data());
      for (std::size_t i = 0; i < t; ++i) {
        std::copy_n(oh.data() + i * dh, dh, out.data() + (b * t + i) * d + h * dh);
      }
    }
    if (weights != nullptr) {
      const auto first = probs.begin() + static_cast<std::ptrdiff_t>(h * batch * t * t);
      weights->emplace_back(Shape{batch, t, t},
                            std::vector<double>(first, first + static_cast<std::ptrdiff_t>(batch * t * t)));
    }
  }
  return detail::make_result(
      q.shape(), std::move(out), detail::tracking({&q, &k, &v}),
      [q, k, v, probs = std::move(probs), heads, batch, t, dh, factor, gather,
       scatter_add](detail::Node& o) {
        std::vector<double> qh(t * dh), kh(t * dh), vh(t * dh), go(t * dh), tmp(t * dh);
        std::vector<double> ds(t * t);
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t b = 0; b < batch; ++b) {
            const double* a = probs.data() + (h * batch + b) * t * t;
            gather(o.grad.data(), b, h, go.data());
            gather(q.data().data(), b, h, qh.data());
            gather(k.data().data(), b, h, kh.data());
            gather(v.data().data(), b, h, vh.data());
            if (v.requires_grad()) {
              kernels::gemm_tn(t, dh, t, a, go.data(), tmp.data());
              scatter_add(tmp.data(), b, h, detail::grad_of(v).data());
            }
            kernels::gemm_nt(t, t, dh, go.data(), vh.data(), ds.data());
            for (std::size_t i = 0; i < t; ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j < t; ++j) dot += ds[i * t + j] * a[i * t + j];
              for (std::size_t j = 0; j < t; ++j) {
                ds[i * t + j] = a[i * t + j] * (ds[i * t + j] - dot) * factor;
              }
            }
            if (q.requires_grad()) {
              kernels::gemm(t, dh, t, ds.data(), kh.data(), tmp.data());
              scatter_add(tmp.data(), b, h, detail::grad_of(q).data());
            }
            if (k.requires_grad()) {
              kernels::gemm_tn(t, dh, t, ds.data(), qh.data(), tmp.data());
              scatter_add(tmp.data(), b, h, detail::grad_of(k).data());
            }
          }
        }
      });
}

// Batched product of a[B, m, k] with b[B, k, n] (or b[B, n, k] when
// `transpose_b`), one independent product per leading index.
inline Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false) {
  if (a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0]) {
    throw DimensionError("bmm: incompatible operands " + a.shape().str() +
                         " and " + b.shape().str());
  }
  const std::size_t batch = a.shape()[0];
  const std::size_t m = a.shape()[1];
  const std::size_t k = a.shape()[2];
  const std::size_t kb = transpose_b ? b.shape()[2] : b.shape()[1];
  const std::size_t n = transpose_b ? b.shape()[1] : b.shape()[2];
  if (kb != k) {
    throw DimensionError("bmm: inner dimensions of " + a.shape().str() +
                         " and " + b.shape().str() + " differ");
  }
  std::vector<double> out(batch * m * n);
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    if (transpose_b) {
      kernels::gemm_nt(m, n, k, ap + s * m * k, bp + s * n * k,
                       out.data() + s * m * n);
    } else {
      kernels::gemm(m, n, k, ap + s * m * k, bp + s * k * n,
                    out.data() + s * m * n);
    }
  }
  return detail::make_result(
      Shape{batch, m, n}, std::move(out), detail::tracking({&a, &b}),
      [a, b, batch, m, n, k, transpose_b](detail::Node& o) {
        const double* g = o.grad.data();
        const double* ap = a.data().data();
        const double* bp = b.data().data();
        for (std::size_t s = 0; s < batch; ++s) {
          const double* gs = g + s * m * n;
          if (a.requires_grad()) {
            double* ga = detail::grad_of(a).data() + s * m * k;
            if (transpose_b) {
              // b_s is n x k: dA = dC * b_s.
              kernels::gemm(m, k, n, gs, bp + s * n * k, ga, true);
            } else {
              kernels::gemm_nt(m, k, n, gs, bp + s * k * n, ga, true);
            }
          }
          if (b.requires_grad()) {
            if (transpose_b) {
              // dB (n x k) = dC^T * a_s.
              kernels::gemm_tn(n, k, m, gs, ap + s * m * k,
                               detail::grad_of(b).data() + s * n * k, true);
            } else {
              kernels::gemm_tn(k, n, m, ap + s * m * k, gs,
                               detail::grad_of(b).data() + s * k * n, true);
            }
          }
        }
      });
}

namespace detail {

inline Tensor contract_impl(const Tensor& e, const Tensor& w, const Tensor* bias) {
  const bool batched = e.rank() == 3;
  const bool shapes_ok =
      (e.rank() == 2 || batched) && w.rank() == 4 &&
      e.shape()[e.rank() - 2] == w.shape()[0] &&
      e.shape()[e.rank() - 1] == w.shape()[1];
  if (!shapes_ok) {
    throw DimensionError("contract: contracted indices of " + e.shape().str() +
                         " and " + w.shape().str() + " do not match");
  }
  const std::size_t batch = batched ? e.shape()[0] : 1;
  const std::size_t k = w.shape()[0] * w.shape()[1];
  const std::size_t n = w.shape()[2] * w.shape()[3];
  if (bias != nullptr && (bias->rank() != 2 || bias->shape()[0] != w.shape()[2] ||
                          bias->shape()[1] != w.shape()[3])) {
    throw DimensionError("contract: bias " + bias->shape().str() + " does not match " +
                         w.shape().str());
  }
  std::vector<double> out = bias_rows(batch, n, bias);
  kernels::gemm(batch, n, k, e.data().data(), w.data().data(), out.data(), bias != nullptr);
  const Shape shape = batched ? Shape{batch, w.shape()[2], w.shape()[3]}
                              : Shape{w.shape()[2], w.shape()[3]};
  const Tensor bias_t = bias != nullptr ? *bias : Tensor();
  const bool track = bias != nullptr ? tracking({&e, &w, bias}) : tracking({&e, &w});
  return make_result(shape, std::move(out), track,
                     [e, w, bias_t, batch, n, k](Node& o) {
    if (e.requires_grad()) {
      kernels::gemm_nt(batch, k, n, o.grad.data(), w.data().data(), grad_of(e).data(), true);
    }
    if (w.requires_grad()) {
      kernels::gemm_tn(k, n, batch, e.data().data(), o.grad.data(), grad_of(w).data(), true);
    }
    if (bias_t.requires_grad()) bias_grad(bias_t, o.grad, batch, n);
  });
}

}  // namespace detail

// Tensor contraction einsum('ij,ijkl->kl'): e[M, d] (or batched e[B, M, d])
// against w[M, d, W, d'] gives out[w, k] = sum_i sum_j e[i, j] w[i, j, w, k].
inline Tensor contract(const Tensor& e, const Tensor& w) {
  return detail::contract_impl(e, w, nullptr);
}

// contract(e, w) + bias[W, d'], as one node.
inline Tensor contract(const Tensor& e, const Tensor& w, const Tensor& bias) {
  return detail::contract_impl(e, w, &bias);
}

// x[..., trailing] + b[trailing], broadcasting b over the leading axes.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
  const std::size_t lead = x.rank() - b.rank();
  bool ok = b.rank() <= x.rank();
  for (std::size_t i = 0; ok && i < b.rank(); ++i) {
    ok = x.shape()[lead + i] == b.shape()[i];
  }
  if (!ok) {
    throw DimensionError("add_bias: bias " + b.shape().str() +
                         " does not match trailing axes of " + x.shape().str());
  }
  const std::size_t inner = b.numel();
  const std::size_t outer = x.numel() / inner;
  std::vector<double> out(x.values());
  const auto bv = b.data();
  for (std::size_t r = 0; r < outer; ++r) {
    for (std::size_t j = 0; j < inner; ++j) out[r * inner + j] += bv[j];
  }
  return detail::make_result(x.shape(), std::move(out),
                             detail::tracking({&x, &b}),
                             [x, b, outer, inner](detail::Node& o) {
    if (x.requires_grad()) {
      auto& gx = detail::grad_of(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i];
    }
    if (b.requires_grad()) {
      auto& gb = detail::grad_of(b);
      for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t j = 0; j < inner; ++j) gb[j] += o.grad[r * inner + j];
      }
    }
  });
}

// Numerically stable softmax along `axis` (max subtracted per slice).
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " out of range for " + x.shape().str());
  }
  const std::size_t outer = x.shape().span_size(0, axis);
  const std::size_t len = x.shape()[axis];
  const std::size_t inner = x.shape().span_size(axis + 1, x.rank());
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xv[base];
      for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, xv[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double e = std::exp(xv[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= total;
    }
  }
  return detail::make_result(x.shape(), std::move(out), detail::tracking({&x}),
                             [x, outer, len, inner](detail::Node& o) {
    auto& gx = detail::grad_of(x);
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = a * len * inner + in;
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          dot += o.grad[base + i * inner] * o.value[base + i * inner];
        }
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t idx = base + i * inner;
          gx[idx] += o.value[idx] * (o.grad[idx] - dot);
        }
      }
    }
  });
}

// Normalizes each row over the last axis to zero mean and unit variance
// (epsilon 1e-5 inside the square root), then applies gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain,
                         const Tensor& bias) {
  const std::size_t width = x.shape().back();
  if (gain.rank() != 1 || bias.rank() != 1 || gain.numel() != width ||
      bias.numel() != width) {
    throw DimensionError("layer_norm: gain/bias must be [" +
                         std::to_string(width) + "], got " +
                         gain.shape().str() + " and " + bias.shape().str());
  }
  const std::size_t rows = x.numel() / width;
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  std::vector<double> normalized(xv.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += row[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(width);
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    inv_std[r] = rstd;
    for (std::size_t j = 0; j < width; ++j) {
      const double h = (row[j] - mu) * rstd;
      normalized[r * width + j] = h;
      out[r * width + j] = h * gv[j] + bv[j];
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), detail::tracking({&x, &gain, &bias}),
      [x, gain, bias, rows, width, normalized = std::move(normalized),
       inv_std = std::move(inv_std)](detail::Node& o) {
        const auto gv = gain.data();
        if (gain.requires_grad()) {
          auto& gg = detail::grad_of(gain);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < width; ++j) {
              gg[j] += o.grad[r * width + j] * normalized[r * width + j];
            }
          }
        }
        if (bias.requires_grad()) {
          auto& gb = detail::grad_of(bias);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < width; ++j) gb[j] += o.grad[r * width + j];
          }
        }
        if (x.requires_grad()) {
          auto& gx = detail::grad_of(x);
          const double inv_w = 1.0 / static_cast<double>(width);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0;
            double mean_dh_h = 0.0;
            for (std::size_t j = 0; j < width; ++j) {
              const double dh = o.grad[r * width + j] * gv[j];
              mean_dh += dh;
              mean_dh_h += dh * normalized[r * width + j];
            }
            mean_dh *= inv_w;
            mean_dh_h *= inv_w;
            for (std::size_t j = 0; j < width; ++j) {
              const double dh = o.grad[r * width + j] * gv[j];
              gx[r * width + j] +=
                  inv_std[r] *
                  (dh - mean_dh - normalized[r * width + j] * mean_dh_h);
            }
          }
        }
      });
}

// Joins tensors along `axis`; all other extents must agree.
inline Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  const Shape& first = parts[0].shape();
  if (axis >= first.rank()) throw DimensionError("concat: axis out of range");
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    bool ok = p.rank() == first.rank();
    for (std::size_t i = 0; ok && i < first.rank(); ++i) {
      ok = i == axis || p.shape()[i] == first[i];
    }
    if (!ok) {
      throw DimensionError("concat: " + p.shape().str() +
                           " does not match " + first.str() + " off axis " +
                           std::to_string(axis));
    }
    total += p.shape()[axis];
  }
  const std::size_t outer = first.span_size(0, axis);
  const std::size_t inner = first.span_size(axis + 1, first.rank());
  const Shape shape = first.with(axis, total);
  std::vector<double> out(shape.numel());
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.shape()[axis] * inner;
    const auto pv = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(pv.begin() + o * chunk, pv.begin() + (o + 1) * chunk,
                out.begin() + o * total * inner + offset * inner);
    }
    offset += p.shape()[axis];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  const bool track = detail::tracking(parts);
  return detail::make_result(
      shape, std::move(out), track,
      [inputs = std::move(inputs), offsets = std::move(offsets), outer, inner,
       total, axis](detail::Node& o) {
        for (std::size_t p = 0; p < inputs.size(); ++p) {
          if (!inputs[p].requires_grad()) continue;
          auto& gp = detail::grad_of(inputs[p]);
          const std::size_t chunk = inputs[p].shape()[axis] * inner;
          for (std::size_t r = 0; r < outer; ++r) {
            const double* src =
                o.grad.data() + r * total * inner + offsets[p] * inner;
            double* dst = gp.data() + r * chunk;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
        }
      });
}

inline Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

// Sub-range [start, start + length) of `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
                    std::size_t length) {
  if (axis >= x.rank() || start + length > x.shape()[axis] || length == 0) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") on axis " +
                         std::to_string(axis) + " of " + x.shape().str());
  }
  const std::size_t outer = x.shape().span_size(0, axis);
  const std::size_t extent = x.shape()[axis];
  const std::size_t inner = x.shape().span_size(axis + 1, x.rank());
  const Shape shape = x.shape().with(axis, length);
  std::vector<double> out(shape.numel());
  const auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xv.begin() + (o * extent + start) * inner, length * inner,
                out.begin() + o * length * inner);
  }
  return detail::make_result(shape, std::move(out), detail::tracking({&x}),
                             [x, outer, extent, inner, start,
                              length](detail::Node& o) {
    auto& gx = detail::grad_of(x);
    for (std::size_t r = 0; r < outer; ++r) {
      const double* src = o.grad.data() + r * length * inner;
      double* dst = gx.data() + (r * extent + start) * inner;
      for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src[i];
    }
  });
}

// out[b, i, :] = x[b, i] * w[i, :] for x[B, M] and w[M, d].
inline Tensor embed_scalars(const Tensor& x, const Tensor& w) {
  if (x.rank() != 2 || w.rank() != 2 || x.shape()[1] != w.shape()[0]) {
    throw DimensionError("embed_scalars: " + x.shape().str() + " and " +
                         w.shape().str());
  }
  const std::size_t batch = x.shape()[0];
  const std::size_t m = w.shape()[0];
  const std::size_t d = w.shape()[1];
  std::vector<double> out(batch * m * d);
  const auto xv = x.data();
  const auto wv = w.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        out[(b * m + i) * d + j] = xv[b * m + i] * wv[i * d + j];
      }
    }
  }
  return detail::make_result(Shape{batch, m, d}, std::move(out),
                             detail::tracking({&x, &w}),
                             [x, w, batch, m, d](detail::Node& o) {
    const auto xv = x.data();
    const auto wv = w.data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* g = o.grad.data() + (b * m + i) * d;
        if (x.requires_grad()) {
          double acc = 0.0;
          for (std::size_t j = 0; j < d; ++j) acc += g[j] * wv[i * d + j];
          detail::grad_of(x)[b * m + i] += acc;
        }
        if (w.requires_grad()) {
          auto& gw = detail::grad_of(w);
          for (std::size_t j = 0; j < d; ++j) gw[i * d + j] += g[j] * xv[b * m + i];
        }
      }
    }
  });
}

// out[b, i] = dot(e[b, i, :], w[i, :]) for e[B, M, d] and w[M, d].
inline Tensor rowwise_dot(const Tensor& e, const Tensor& w) {
  if (e.rank() != 3 || w.rank() != 2 || e.shape()[1] != w.shape()[0] ||
      e.shape()[2] != w.shape()[1]) {
    throw DimensionError("rowwise_dot: " + e.shape().str() + " and " +
                         w.shape().str());
  }
  const std::size_t batch = e.shape()[0];
  const std::size_t m = w.shape()[0];
  const std::size_t d = w.shape()[1];
  std::vector<double> out(batch * m);
  const auto ev = e.data();
  const auto wv = w.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += ev[(b * m + i) * d + j] * wv[i * d + j];
      out[b * m + i] = acc;
    }
  }
  return detail::make_result(Shape{batch, m}, std::move(out),
                             detail::tracking({&e, &w}),
                             [e, w, batch, m, d](detail::Node& o) {
    const auto ev = e.data();
    const auto wv = w.data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < m; ++i) {
        const double g = o.grad[b * m + i];
        if (e.requires_grad()) {
          auto& ge = detail::grad_of(e);
          for (std::size_t j = 0; j < d; ++j) ge[(b * m + i) * d + j] += g * wv[i * d + j];
        }
        if (w.requires_grad()) {
          auto& gw = detail::grad_of(w);
          for (std::size_t j = 0; j < d; ++j) gw[i * d + j] += g * ev[(b * m + i) * d + j];
        }
      }
    }
  });
}

// Per-row cross-entropy of logits[B, C] against class indices; softmax is
// folded in (log-sum-exp with max subtraction).
inline Tensor cross_entropy(const Tensor& logits,
                            std::span<const std::size_t> labels) {
  if (logits.rank() != 2 || logits.shape()[0] != labels.size()) {
    throw DimensionError("cross_entropy: logits " + logits.shape().str() +
                         " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.shape()[0];
  const std::size_t classes = logits.shape()[1];
  const auto lv = logits.data();
  std::vector<double> probs(lv.size());
  std::vector<double> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes) {
      throw DimensionError("cross_entropy: label " + std::to_string(labels[b]) +
                           " out of range for " + std::to_string(classes) +
                           " classes");
    }
    const double* row = lv.data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[b * classes + c] = std::exp(row[c] - mx);
      total += probs[b * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] /= total;
    out[b] = std::log(total) + mx - row[labels[b]];
  }
  std::vector<std::size_t> targets(labels.begin(), labels.end());
  return detail::make_result(
      Shape{batch}, std::move(out), detail::tracking({&logits}),
      [logits, probs = std::move(probs), targets = std::move(targets), batch,
       classes](detail::Node& o) {
        auto& gl = detail::grad_of(logits);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < classes; ++c) {
            const double onehot = c == targets[b] ? 1.0 : 0.0;
            gl[b * classes + c] += o.grad[b] * (probs[b * classes + c] - onehot);
          }
        }
      });
}

}  // namespace tcvae
