#include "spursever/kernels.hpp"

namespace spursever::kernels {
namespace {

void dense_forward(const float* x, const float* w, const float* bias, float* y,
                   DenseShape s) {
  for (std::size_t r = 0; r < s.rows; ++r) {
    const float* xr = x + r * s.in;
    for (std::size_t o = 0; o < s.out; ++o) {
      const float* wo = w + o * s.in;
      float acc = 0.0f;
      for (std::size_t i = 0; i < s.in; ++i) acc += xr[i] * wo[i];
      y[r * s.out + o] = acc + bias[o];
    }
  }
}

void dense_weight_grad(const float* gy, const float* x, float* gw, DenseShape s) {
  for (std::size_t o = 0; o < s.out; ++o) {
    float* row = gw + o * s.in;
    for (std::size_t i = 0; i < s.in; ++i) row[i] = 0.0f;
    for (std::size_t r = 0; r < s.rows; ++r) {
      const float g = gy[r * s.out + o];
      const float* xr = x + r * s.in;
      for (std::size_t i = 0; i < s.in; ++i) row[i] += g * xr[i];
    }
  }
}

void dense_input_grad(const float* gy, const float* w, float* gx, DenseShape s) {
  for (std::size_t r = 0; r < s.rows; ++r) {
    float* row = gx + r * s.in;
    for (std::size_t i = 0; i < s.in; ++i) row[i] = 0.0f;
    for (std::size_t o = 0; o < s.out; ++o) {
      const float g = gy[r * s.out + o];
      const float* wo = w + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) row[i] += g * wo[i];
    }
  }
}

void sgd_step(float* p, float* v, const float* g, std::size_t n, float lr, float momentum,
              float decay) {
  for (std::size_t i = 0; i < n; ++i) {
    const float d = g[i] + decay * p[i];
    v[i] = momentum * v[i] + d;
    p[i] -= lr * v[i];
  }
}

constexpr Ops kReference{dense_forward, dense_weight_grad, dense_input_grad, sgd_step,
                         "reference"};

}  // namespace

const Ops& reference_ops() noexcept { return kReference; }

}  // namespace spursever::kernels
