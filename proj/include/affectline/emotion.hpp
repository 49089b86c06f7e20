#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace affectline {

/// The six emotion classes, in canonical index order.
enum class EmotionLabel : std::size_t {
  neutral = 0,
  calm = 1,
  happy = 2,
  sad = 3,
  angry = 4,
  fearful = 5,
};

inline constexpr std::size_t kNumEmotions = 6;

inline constexpr std::array<EmotionLabel, kNumEmotions> kAllEmotions = {
    EmotionLabel::neutral, EmotionLabel::calm,  EmotionLabel::happy,
    EmotionLabel::sad,     EmotionLabel::angry, EmotionLabel::fearful};

constexpr std::size_t index_of(EmotionLabel e) noexcept {
  return static_cast<std::size_t>(e);
}

std::string_view name_of(EmotionLabel e) noexcept;

/// Case-sensitive lookup of a canonical lowercase name.
std::optional<EmotionLabel> emotion_from_name(std::string_view name) noexcept;

std::optional<EmotionLabel> emotion_from_index(std::size_t i) noexcept;

}  // namespace affectline
