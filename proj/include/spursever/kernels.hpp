#pragma once

// Dense-layer arithmetic used by the classifier.
//
// Two implementations share one table layout: a portable scalar reference with
// a fixed accumulation order, and an AVX2/FMA variant selected at runtime. The
// reference path is what "reference mode" runs on and is bit-reproducible on
// any x86-64 host; the SIMD path is deterministic per host but rounds
// differently, and is equivalence-tested against the reference.

#include <cstddef>
#include <string_view>

namespace spursever::kernels {

enum class Mode { reference, simd };

/// Row-major shapes: x is rows x in, w is out x in, y is rows x out.
struct DenseShape {
  std::size_t rows;
  std::size_t in;
  std::size_t out;
};

struct Ops {
  /// y[r][o] = bias[o] + sum_i x[r][i] * w[o][i]
  void (*dense_forward)(const float* x, const float* w, const float* bias, float* y,
                        DenseShape s);
  /// gw[o][i] = sum_r gy[r][o] * x[r][i]   (overwrites gw)
  void (*dense_weight_grad)(const float* gy, const float* x, float* gw, DenseShape s);
  /// gx[r][i] = sum_o gy[r][o] * w[o][i]   (overwrites gx)
  void (*dense_input_grad)(const float* gy, const float* w, float* gx, DenseShape s);
  /// Heavy-ball SGD with L2 decay folded into the gradient:
  /// v = momentum * v + (g + decay * p);  p -= lr * v
  void (*sgd_step)(float* p, float* v, const float* g, std::size_t n, float lr,
                   float momentum, float decay);
  std::string_view name;
};

const Ops& reference_ops() noexcept;

/// True when the AVX2 variant was compiled in and the CPU reports AVX2+FMA.
bool simd_available() noexcept;

/// Ops for the requested mode; simd silently degrades to reference when the
/// host cannot run it.
const Ops& ops(Mode mode) noexcept;

/// simd when available, else reference.
Mode fastest_mode() noexcept;

std::string_view to_string(Mode mode) noexcept;
Mode mode_from_string(std::string_view text);

namespace detail {
#if defined(SPURSEVER_WITH_AVX2)
const Ops& avx2_ops() noexcept;
#endif
}  // namespace detail

}  // namespace spursever::kernels
