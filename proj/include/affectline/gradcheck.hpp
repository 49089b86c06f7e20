#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace affectline::nn {

/// Outcome of comparing analytic gradients with central finite differences
/// in 64-bit arithmetic.
///
/// The per-entry error is |analytic - numeric| / max(|analytic|, |numeric|,
/// floor) with floor = 1e-6, so exactly-zero gradients (dead ReLUs) are
/// compared absolutely instead of dividing by zero.
struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t n_checked = 0;
};

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckFloor = 1e-6;
inline constexpr double kGradCheckTolerance = 1e-4;

double relative_error(double analytic, double numeric) noexcept;

/// Checks conv1d, relu, maxpool1d, fully connected, softmax cross-entropy
/// and a shrunken full model (41 x 20 input) on shapes drawn from `seed`.
std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed);

}  // namespace affectline::nn
