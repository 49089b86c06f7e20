#include <cmath>

#include "affectline/simd.hpp"

namespace affectline::simd::detail {
namespace {

template <typename T>
T dot_ref(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void rmsprop_ref(float* p, float* s, const float* g, std::size_t n, float lr,
                 float rho, float eps) {
  const float one_minus_rho = 1.0f - rho;
  for (std::size_t i = 0; i < n; ++i) {
    const float gi = g[i];
    const float si = rho * s[i] + one_minus_rho * (gi * gi);
    s[i] = si;
    p[i] -= lr * gi / (std::sqrt(si) + eps);
  }
}

void relu_ref(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{
      &dot_ref<float>, &dot_ref<double>, &axpy_ref<float>,
      &axpy_ref<double>, &rmsprop_ref, &relu_ref,
  };
  return table;
}

}  // namespace affectline::simd::detail
