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

// Dense row-major matrix kernels.
//
// Every output element c[i][j] is accumulated as
//   madd(a[i][k-1], b[k-1][j], ... madd(a[i][1], b[1][j], madd(a[i][0], b[0][j], 0)))
// and only then added to the destination when accumulating. The order depends
// on k alone, so a row of the product is bit-identical whether it is computed
// alone or as part of a larger batch, and whichever blocking path produced it.
// madd is a single fused rounding on targets with FMA and a separate multiply
// and add elsewhere; the compiler never contracts on its own
// (-ffp-contract=off), so scalar and vector paths round identically.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cmath>
#include <cstring>
#include <vector>

#if defined(__FMA__) && defined(__AVX__)
#include <immintrin.h>
#define TCVAE_VECTOR_FMA 1
#endif

namespace tcvae::kernels {

// acc + a * b.
inline double madd(double a, double b, double acc) {
#if defined(__FMA__) || defined(__ARM_FEATURE_FMA)
  return std::fma(a, b, acc);
#else
  return acc + a * b;
#endif
}

inline void transpose(std::size_t rows, std::size_t cols, const double* in,
                      double* out) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
      }
    }
  }
}

namespace detail {

using v4 = double __attribute__((vector_size(32)));

template <class V>
inline V load(const double* p) {
  V v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <class V>
inline void store(double* p, V v) {
  std::memcpy(p, &v, sizeof v);
}

inline v4 madd(v4 a, v4 b, v4 acc) {
#if defined(TCVAE_VECTOR_FMA)
  return _mm256_fmadd_pd(a, b, acc);
#elif defined(__FMA__) || defined(__ARM_FEATURE_FMA)
  v4 r;
  for (int l = 0; l < 4; ++l) r[l] = std::fma(a[l], b[l], acc[l]);
  return r;
#else
  return acc + a * b;
#endif
}

template <class V>
inline constexpr std::size_t kLanes = sizeof(V) / sizeof(double);

// Left operand with arbitrary strides: element (i, p) is x[i * si + p * sp].
struct Strided {
  const double* x;
  std::size_t si;
  std::size_t sp;
};

// Rows x (lanes * Vecs) block of z (+)= X * Y with Y rows contiguous
// (stride ldy).
template <class V, std::size_t Rows, std::size_t Vecs>
inline void vec_kernel(std::size_t k, Strided a, const double* y, std::size_t ldy,
                       double* z, std::size_t ldz, bool accumulate) {
  constexpr std::size_t kW = kLanes<V>;
  V acc[Rows][Vecs] = {};
  for (std::size_t p = 0; p < k; ++p) {
    V yv[Vecs];
    for (std::size_t v = 0; v < Vecs; ++v) yv[v] = load<V>(y + p * ldy + kW * v);
    for (std::size_t r = 0; r < Rows; ++r) {
      const double s = a.x[r * a.si + p * a.sp];
      const V sv = s - V{};
      for (std::size_t v = 0; v < Vecs; ++v) acc[r][v] = madd(sv, yv[v], acc[r][v]);
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    for (std::size_t v = 0; v < Vecs; ++v) {
      double* dst = z + r * ldz + kW * v;
      store(dst, accumulate ? load<V>(dst) + acc[r][v] : acc[r][v]);
    }
  }
}

// Scalar block for leftover rows or columns (rows <= 8, cols <= 16).
inline void edge_kernel(std::size_t rows, std::size_t cols, std::size_t k, Strided a,
                        const double* y, std::size_t ldy, double* z, std::size_t ldz,
                        bool accumulate) {
  double acc[8][16] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const double* yrow = y + p * ldy;
    for (std::size_t r = 0; r < rows; ++r) {
      const double s = a.x[r * a.si + p * a.sp];
      for (std::size_t j = 0; j < cols; ++j) acc[r][j] = kernels::madd(s, yrow[j], acc[r][j]);
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = z + r * ldz;
    for (std::size_t j = 0; j < cols; ++j) {
      dst[j] = accumulate ? dst[j] + acc[r][j] : acc[r][j];
    }
  }
}

template <class V, std::size_t Rows, std::size_t Vecs>
inline void column_panel(std::size_t m, std::size_t k, Strided a, const double* y,
                         std::size_t ldy, double* z, std::size_t ldz, bool accumulate) {
  std::size_t i = 0;
  for (; i + Rows <= m; i += Rows) {
    vec_kernel<V, Rows, Vecs>(k, {a.x + i * a.si, a.si, a.sp}, y, ldy, z + i * ldz, ldz,
                           accumulate);
  }
  for (; i < m; i += 8) {
    edge_kernel(std::min<std::size_t>(8, m - i), kLanes<V> * Vecs, k, {a.x + i * a.si, a.si, a.sp},
                y, ldy, z + i * ldz, ldz, accumulate);
  }
}

// z (m x n, row stride n) (+)= X (m x k, strided) * Y (k x n, row stride n).
inline void gemm_strided(std::size_t m, std::size_t n, std::size_t k, Strided a,
                         const double* y, double* z, bool accumulate) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) column_panel<v4, 4, 4>(m, k, a, y + j, n, z + j, n, accumulate);
  if (j + 8 <= n) {
    column_panel<v4, 8, 2>(m, k, a, y + j, n, z + j, n, accumulate);
    j += 8;
  }
  if (j + 4 <= n) {
    column_panel<v4, 8, 1>(m, k, a, y + j, n, z + j, n, accumulate);
    j += 4;
  }
  if (j < n) {
    for (std::size_t i = 0; i < m; i += 8) {
      edge_kernel(std::min<std::size_t>(8, m - i), n - j, k, {a.x + i * a.si, a.si, a.sp},
                  y + j, n, z + i * n + j, n, accumulate);
    }
  }
}

inline bool trivial(std::size_t m, std::size_t n, std::size_t k, double* c, bool accumulate) {
  if (m == 0 || n == 0) return true;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    return true;
  }
  return false;
}

}  // namespace detail

// c (+)= a * b with a: m x k, b: k x n, c: m x n.
inline void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
                 const double* b, double* c, bool accumulate = false) {
  if (detail::trivial(m, n, k, c, accumulate)) return;
  detail::gemm_strided(m, n, k, {a, k, 1}, b, c, accumulate);
}

// c (+)= a * b^T with a: m x k, b: n x k.
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c,
                    bool accumulate = false) {
  if (detail::trivial(m, n, k, c, accumulate)) return;
  thread_local std::vector<double> bt;
  bt.resize(k * n);
  transpose(n, k, b, bt.data());
  detail::gemm_strided(m, n, k, {a, k, 1}, bt.data(), c, accumulate);
}

// c (+)= a^T * b with a: k x m, b: k x n.
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c,
                    bool accumulate = false) {
  if (detail::trivial(m, n, k, c, accumulate)) return;
  detail::gemm_strided(m, n, k, {a, 1, m}, b, c, accumulate);
}

}  // namespace tcvae::kernels
