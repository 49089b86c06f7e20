#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "affectline/simd.hpp"

namespace affectline::simd {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(AFFECTLINE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<Backend>& active_slot() noexcept {
  static std::atomic<Backend> slot{detect()};
  return slot;
}

}  // namespace

std::string_view name_of(Backend b) noexcept {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

bool available(Backend b) noexcept {
  switch (b) {
    case Backend::scalar: return true;
    case Backend::avx2: return cpu_has_avx2();
    case Backend::neon:
#if defined(AFFECTLINE_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend detect() noexcept {
  if (const char* env = std::getenv("AFFECTLINE_SIMD")) {
    for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon}) {
      if (name_of(b) == env && available(b)) return b;
    }
  }
  if (available(Backend::avx2)) return Backend::avx2;
  if (available(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

Backend active() noexcept { return active_slot().load(std::memory_order_relaxed); }

void set_active(Backend b) {
  if (!available(b)) {
    throw std::invalid_argument("SIMD backend not available: " +
                                std::string(name_of(b)));
  }
  active_slot().store(b, std::memory_order_relaxed);
}

const KernelTable& table(Backend b) {
  switch (b) {
    case Backend::scalar: return detail::scalar_table();
#if defined(AFFECTLINE_HAVE_AVX2)
    case Backend::avx2:
      if (available(b)) return detail::avx2_table();
      break;
#endif
#if defined(AFFECTLINE_HAVE_NEON)
    case Backend::neon: return detail::neon_table();
#endif
    default: break;
  }
  throw std::invalid_argument("SIMD backend not available: " +
                              std::string(name_of(b)));
}

const KernelTable& kernels() noexcept {
  switch (active()) {
#if defined(AFFECTLINE_HAVE_AVX2)
    case Backend::avx2: return detail::avx2_table();
#endif
#if defined(AFFECTLINE_HAVE_NEON)
    case Backend::neon: return detail::neon_table();
#endif
    default: return detail::scalar_table();
  }
}

}  // namespace affectline::simd
