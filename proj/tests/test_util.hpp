#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace affectline::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("affectline_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<float> sine(double freq_hz, double rate_hz, std::size_t n,
                               double amplitude = 0.5, double phase = 0.0) {
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<float>(
        amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate_hz + phase));
  }
  return x;
}

template <class T = float>
std::vector<T> uniform(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return v;
}

inline std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// |X[k]| of a real signal by direct summation.
inline std::vector<double> naive_dft_magnitude(const std::vector<double>& x, std::size_t n_fft) {
  std::vector<double> mag(n_fft / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    double re = 0, im = 0;
    for (std::size_t n = 0; n < x.size() && n < n_fft; ++n) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k * n % n_fft) / static_cast<double>(n_fft);
      re += x[n] * std::cos(a);
      im += x[n] * std::sin(a);
    }
    mag[k] = std::hypot(re, im);
  }
  return mag;
}

}  // namespace affectline::testing
