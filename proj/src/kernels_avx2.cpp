// AVX2 + FMA variants of the dense kernels. Built with -mavx2 -mfma; only
// reached through the dispatch table after a runtime CPU check.

#include <immintrin.h>

#include "spursever/kernels.hpp"

namespace spursever::kernels::detail {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline float dot(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return hsum(_mm256_add_ps(acc0, acc1)) + tail;
}

// 4 rows x 2 outputs per tile: 6 loads feed 8 FMAs per step.
void dense_forward(const float* x, const float* w, const float* bias, float* y,
                   DenseShape s) {
  const std::size_t n = s.in;
  const std::size_t vec_end = n - n % 8;
  std::size_t r = 0;
  for (; r + 4 <= s.rows; r += 4) {
    const float* x0 = x + (r + 0) * n;
    const float* x1 = x + (r + 1) * n;
    const float* x2 = x + (r + 2) * n;
    const float* x3 = x + (r + 3) * n;
    std::size_t o = 0;
    for (; o + 2 <= s.out; o += 2) {
      const float* w0 = w + o * n;
      const float* w1 = w + (o + 1) * n;
      __m256 a00 = _mm256_setzero_ps(), a01 = _mm256_setzero_ps();
      __m256 a10 = _mm256_setzero_ps(), a11 = _mm256_setzero_ps();
      __m256 a20 = _mm256_setzero_ps(), a21 = _mm256_setzero_ps();
      __m256 a30 = _mm256_setzero_ps(), a31 = _mm256_setzero_ps();
      for (std::size_t i = 0; i < vec_end; i += 8) {
        const __m256 vw0 = _mm256_loadu_ps(w0 + i);
        const __m256 vw1 = _mm256_loadu_ps(w1 + i);
        __m256 vx = _mm256_loadu_ps(x0 + i);
        a00 = _mm256_fmadd_ps(vx, vw0, a00);
        a01 = _mm256_fmadd_ps(vx, vw1, a01);
        vx = _mm256_loadu_ps(x1 + i);
        a10 = _mm256_fmadd_ps(vx, vw0, a10);
        a11 = _mm256_fmadd_ps(vx, vw1, a11);
        vx = _mm256_loadu_ps(x2 + i);
        a20 = _mm256_fmadd_ps(vx, vw0, a20);
        a21 = _mm256_fmadd_ps(vx, vw1, a21);
        vx = _mm256_loadu_ps(x3 + i);
        a30 = _mm256_fmadd_ps(vx, vw0, a30);
        a31 = _mm256_fmadd_ps(vx, vw1, a31);
      }
      float t00 = hsum(a00), t01 = hsum(a01), t10 = hsum(a10), t11 = hsum(a11);
      float t20 = hsum(a20), t21 = hsum(a21), t30 = hsum(a30), t31 = hsum(a31);
      for (std::size_t i = vec_end; i < n; ++i) {
        t00 += x0[i] * w0[i];
        t01 += x0[i] * w1[i];
        t10 += x1[i] * w0[i];
        t11 += x1[i] * w1[i];
        t20 += x2[i] * w0[i];
        t21 += x2[i] * w1[i];
        t30 += x3[i] * w0[i];
        t31 += x3[i] * w1[i];
      }
      y[(r + 0) * s.out + o] = t00 + bias[o];
      y[(r + 0) * s.out + o + 1] = t01 + bias[o + 1];
      y[(r + 1) * s.out + o] = t10 + bias[o];
      y[(r + 1) * s.out + o + 1] = t11 + bias[o + 1];
      y[(r + 2) * s.out + o] = t20 + bias[o];
      y[(r + 2) * s.out + o + 1] = t21 + bias[o + 1];
      y[(r + 3) * s.out + o] = t30 + bias[o];
      y[(r + 3) * s.out + o + 1] = t31 + bias[o + 1];
    }
    for (; o < s.out; ++o) {
      const float* wo = w + o * n;
      y[(r + 0) * s.out + o] = dot(x0, wo, n) + bias[o];
      y[(r + 1) * s.out + o] = dot(x1, wo, n) + bias[o];
      y[(r + 2) * s.out + o] = dot(x2, wo, n) + bias[o];
      y[(r + 3) * s.out + o] = dot(x3, wo, n) + bias[o];
    }
  }
  for (; r < s.rows; ++r) {
    const float* xr = x + r * n;
    for (std::size_t o = 0; o < s.out; ++o) y[r * s.out + o] = dot(xr, w + o * n, n) + bias[o];
  }
}

// 4 outputs x 16 inputs per tile; the batch dimension is the reduction.
void dense_weight_grad(const float* gy, const float* x, float* gw, DenseShape s) {
  const std::size_t n = s.in;
  const std::size_t vec_end = n - n % 16;
  std::size_t o = 0;
  for (; o + 4 <= s.out; o += 4) {
    for (std::size_t i = 0; i < vec_end; i += 16) {
      __m256 a00 = _mm256_setzero_ps(), a01 = _mm256_setzero_ps();
      __m256 a10 = _mm256_setzero_ps(), a11 = _mm256_setzero_ps();
      __m256 a20 = _mm256_setzero_ps(), a21 = _mm256_setzero_ps();
      __m256 a30 = _mm256_setzero_ps(), a31 = _mm256_setzero_ps();
      for (std::size_t r = 0; r < s.rows; ++r) {
        const float* xr = x + r * n + i;
        const float* gr = gy + r * s.out + o;
        const __m256 v0 = _mm256_loadu_ps(xr);
        const __m256 v1 = _mm256_loadu_ps(xr + 8);
        __m256 g = _mm256_broadcast_ss(gr + 0);
        a00 = _mm256_fmadd_ps(g, v0, a00);
        a01 = _mm256_fmadd_ps(g, v1, a01);
        g = _mm256_broadcast_ss(gr + 1);
        a10 = _mm256_fmadd_ps(g, v0, a10);
        a11 = _mm256_fmadd_ps(g, v1, a11);
        g = _mm256_broadcast_ss(gr + 2);
        a20 = _mm256_fmadd_ps(g, v0, a20);
        a21 = _mm256_fmadd_ps(g, v1, a21);
        g = _mm256_broadcast_ss(gr + 3);
        a30 = _mm256_fmadd_ps(g, v0, a30);
        a31 = _mm256_fmadd_ps(g, v1, a31);
      }
      _mm256_storeu_ps(gw + (o + 0) * n + i, a00);
      _mm256_storeu_ps(gw + (o + 0) * n + i + 8, a01);
      _mm256_storeu_ps(gw + (o + 1) * n + i, a10);
      _mm256_storeu_ps(gw + (o + 1) * n + i + 8, a11);
      _mm256_storeu_ps(gw + (o + 2) * n + i, a20);
      _mm256_storeu_ps(gw + (o + 2) * n + i + 8, a21);
      _mm256_storeu_ps(gw + (o + 3) * n + i, a30);
      _mm256_storeu_ps(gw + (o + 3) * n + i + 8, a31);
    }
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t i = vec_end; i < n; ++i) {
        float acc = 0.0f;
        for (std::size_t r = 0; r < s.rows; ++r) acc += gy[r * s.out + o + k] * x[r * n + i];
        gw[(o + k) * n + i] = acc;
      }
    }
  }
  for (; o < s.out; ++o) {
    for (std::size_t i = 0; i < n; ++i) {
      float acc = 0.0f;
      for (std::size_t r = 0; r < s.rows; ++r) acc += gy[r * s.out + o] * x[r * n + i];
      gw[o * n + i] = acc;
    }
  }
}

void dense_input_grad(const float* gy, const float* w, float* gx, DenseShape s) {
  const std::size_t n = s.in;
  const std::size_t vec_end = n - n % 8;
  for (std::size_t r = 0; r < s.rows; ++r) {
    float* row = gx + r * n;
    const float* gr = gy + r * s.out;
    for (std::size_t i = 0; i < vec_end; i += 8) {
      __m256 acc = _mm256_setzero_ps();
      for (std::size_t o = 0; o < s.out; ++o)
        acc = _mm256_fmadd_ps(_mm256_broadcast_ss(gr + o), _mm256_loadu_ps(w + o * n + i), acc);
      _mm256_storeu_ps(row + i, acc);
    }
    for (std::size_t i = vec_end; i < n; ++i) {
      float acc = 0.0f;
      for (std::size_t o = 0; o < s.out; ++o) acc += gr[o] * w[o * n + i];
      row[i] = acc;
    }
  }
}

void sgd_step(float* p, float* v, const float* g, std::size_t n, float lr, float momentum,
              float decay) {
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 vmu = _mm256_set1_ps(momentum);
  const __m256 vwd = _mm256_set1_ps(decay);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 pv = _mm256_loadu_ps(p + i);
    const __m256 d = _mm256_fmadd_ps(vwd, pv, _mm256_loadu_ps(g + i));
    const __m256 vel = _mm256_fmadd_ps(vmu, _mm256_loadu_ps(v + i), d);
    _mm256_storeu_ps(v + i, vel);
    _mm256_storeu_ps(p + i, _mm256_fnmadd_ps(vlr, vel, pv));
  }
  for (; i < n; ++i) {
    const float d = g[i] + decay * p[i];
    v[i] = momentum * v[i] + d;
    p[i] -= lr * v[i];
  }
}

constexpr Ops kAvx2{dense_forward, dense_weight_grad, dense_input_grad, sgd_step, "avx2"};

}  // namespace

const Ops& avx2_ops() noexcept { return kAvx2; }

}  // namespace spursever::kernels::detail
