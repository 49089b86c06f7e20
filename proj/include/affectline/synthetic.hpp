#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "affectline/emotion.hpp"
#include "affectline/ravdess.hpp"

namespace affectline {

/// Procedural "acted speech" stand-in: a glottal-pulse-like harmonic source
/// with an emotion-dependent pitch contour, syllable rhythm, loudness and
/// breathiness, shaped per speaker. Used for tests and demos where the real
/// corpus is not available.
struct SyntheticVoice {
  std::uint64_t speaker_seed = 1;
  double duration_s = 3.0;
};

std::vector<float> synthesize_emotion_clip(EmotionLabel emotion, const SyntheticVoice& voice,
                                           std::uint64_t utterance_seed);

struct SyntheticCorpusOptions {
  std::size_t actors = 4;           // actor ids 1..actors
  std::size_t takes_per_emotion = 4;  // statement x repetition combinations (max 4)
  bool include_song = false;
  double duration_s = 3.0;
  int file_sample_rate_hz = 16000;
  std::uint64_t seed = 7;
};

/// Writes RAVDESS-named WAV files under root/Actor_NN/ and returns their
/// paths in lexicographic order.
std::vector<std::filesystem::path> write_synthetic_corpus(
    const std::filesystem::path& root, const SyntheticCorpusOptions& options = {});

}  // namespace affectline
