#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>

#include "affectline/emotion.hpp"
#include "affectline/train.hpp"

namespace affectline {

// Static SVG renderings of training and session results. Output is a pure
// function of the inputs so reruns produce byte-identical files.

/// Train and test accuracy per epoch on a shared 0..1 axis.
std::string accuracy_curve_svg(const Metrics& metrics);

/// True x predicted counts, cell shade proportional to the row-normalized rate.
std::string confusion_heatmap_svg(const ConfusionMatrix& cm);

/// One bar per emotion in canonical order; heights are proportions.
std::string emotion_bar_svg(const std::string& title,
                            const std::array<std::size_t, kNumEmotions>& counts,
                            const std::array<double, kNumEmotions>& proportions);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace affectline
