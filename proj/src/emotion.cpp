#include "affectline/emotion.hpp"

#include <array>

#include "affectline/error.hpp"

namespace affectline {
namespace {
constexpr std::array<std::string_view, kNumEmotions> kNames = {
    "neutral", "calm", "happy", "sad", "angry", "fearful"};
}

std::string_view name_of(EmotionLabel e) noexcept { return kNames[index_of(e)]; }

std::optional<EmotionLabel> emotion_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kNumEmotions; ++i) {
    if (kNames[i] == name) return kAllEmotions[i];
  }
  return std::nullopt;
}

std::optional<EmotionLabel> emotion_from_index(std::size_t i) noexcept {
  if (i >= kNumEmotions) return std::nullopt;
  return kAllEmotions[i];
}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::unreadable_file: return "unreadable_file";
    case ErrorKind::unsupported_encoding: return "unsupported_encoding";
    case ErrorKind::empty_audio: return "empty_audio";
    case ErrorKind::malformed_name: return "malformed_name";
    case ErrorKind::out_of_scope_class: return "out_of_scope_class";
    case ErrorKind::empty_result: return "empty_result";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::invalid_split: return "invalid_split";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::config_mismatch: return "config_mismatch";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::bad_magic: return "bad_magic";
    case ErrorKind::version_mismatch: return "version_mismatch";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::manifest_schema: return "manifest_schema";
    case ErrorKind::manifest_row: return "manifest_row";
    case ErrorKind::empty_session: return "empty_session";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace affectline
