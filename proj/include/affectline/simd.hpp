#pragma once

// Data-parallel inner loops used by the resampler, feature extraction and
// the network. Each kernel has a portable scalar reference and optional
// vectorized variants; the active variant is chosen once at startup from
// the host CPU and can be pinned for testing.

#include <cstddef>
#include <span>
#include <string_view>

namespace affectline::simd {

enum class Backend { scalar, avx2, neon };

std::string_view name_of(Backend b) noexcept;

/// True when the variant was compiled in and the host CPU can run it.
bool available(Backend b) noexcept;

/// Best available variant, or the one named by AFFECTLINE_SIMD
/// ("scalar", "avx2", "neon") when that variable is set and usable.
Backend detect() noexcept;

Backend active() noexcept;

/// Pins the active variant. Throws std::invalid_argument if unavailable.
void set_active(Backend b);

struct KernelTable {
  float (*dot_f32)(const float* a, const float* b, std::size_t n);
  double (*dot_f64)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy_f32)(float alpha, const float* x, float* y, std::size_t n);
  void (*axpy_f64)(double alpha, const double* x, double* y, std::size_t n);
  // s = rho*s + (1-rho)*g*g;  p -= lr*g / (sqrt(s) + eps)
  void (*rmsprop_f32)(float* p, float* s, const float* g, std::size_t n,
                      float lr, float rho, float eps);
  // y = max(x, 0)
  void (*relu_f32)(const float* x, float* y, std::size_t n);
};

/// Kernel table for a specific variant (must be available).
const KernelTable& table(Backend b);

/// Kernel table for the active variant.
const KernelTable& kernels() noexcept;

// Convenience wrappers over the active table.

inline float dot(std::span<const float> a, std::span<const float> b) noexcept {
  return kernels().dot_f32(a.data(), b.data(), a.size());
}
inline double dot(std::span<const double> a,
                  std::span<const double> b) noexcept {
  return kernels().dot_f64(a.data(), b.data(), a.size());
}
inline void axpy(float alpha, std::span<const float> x,
                 std::span<float> y) noexcept {
  kernels().axpy_f32(alpha, x.data(), y.data(), x.size());
}
inline void axpy(double alpha, std::span<const double> x,
                 std::span<double> y) noexcept {
  kernels().axpy_f64(alpha, x.data(), y.data(), x.size());
}

namespace detail {
const KernelTable& scalar_table() noexcept;
#if defined(AFFECTLINE_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif
#if defined(AFFECTLINE_HAVE_NEON)
const KernelTable& neon_table() noexcept;
#endif
}  // namespace detail

}  // namespace affectline::simd
