// Built only on AArch64, where NEON is part of the base ISA.

#include <arm_neon.h>

#include <cmath>

#include "affectline/simd.hpp"

namespace affectline::simd::detail {
namespace {

float dot_f32(const float* a, const float* b, std::size_t n) {
  float32x4_t acc0 = vdupq_n_f32(0.0f);
  float32x4_t acc1 = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
  }
  float acc = vaddvq_f32(vaddq_f32(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), va, vld1q_f32(x + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void rmsprop_f32(float* p, float* s, const float* g, std::size_t n, float lr,
                 float rho, float eps) {
  const float one_minus_rho = 1.0f - rho;
  const float32x4_t vrho = vdupq_n_f32(rho);
  const float32x4_t vomr = vdupq_n_f32(one_minus_rho);
  const float32x4_t vlr = vdupq_n_f32(lr);
  const float32x4_t veps = vdupq_n_f32(eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t gi = vld1q_f32(g + i);
    const float32x4_t si = vaddq_f32(vmulq_f32(vrho, vld1q_f32(s + i)),
                                     vmulq_f32(vomr, vmulq_f32(gi, gi)));
    vst1q_f32(s + i, si);
    const float32x4_t step =
        vdivq_f32(vmulq_f32(vlr, gi), vaddq_f32(vsqrtq_f32(si), veps));
    vst1q_f32(p + i, vsubq_f32(vld1q_f32(p + i), step));
  }
  for (; i < n; ++i) {
    const float gi = g[i];
    const float si = rho * s[i] + one_minus_rho * (gi * gi);
    s[i] = si;
    p[i] -= lr * gi / (std::sqrt(si) + eps);
  }
}

void relu_f32(const float* x, float* y, std::size_t n) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    const uint32x4_t keep = vcgtq_f32(v, zero);
    vst1q_f32(y + i, vreinterpretq_f32_u32(
                         vandq_u32(vreinterpretq_u32_f32(v), keep)));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

}  // namespace

const KernelTable& neon_table() noexcept {
  static const KernelTable table{
      &dot_f32, &dot_f64, &axpy_f32, &axpy_f64, &rmsprop_f32, &relu_f32,
  };
  return table;
}

}  // namespace affectline::simd::detail
