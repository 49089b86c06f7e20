#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "affectline/audio.hpp"
#include "affectline/emotion.hpp"

namespace affectline {

enum class Modality { audio_video, video_only, audio_only };
enum class VocalChannel { speech, song };
enum class Intensity { normal, strong };
enum class Sex { female, male };

/// Decoded RAVDESS file identifier
/// (modality-channel-emotion-intensity-statement-repetition-actor).
struct RavdessMeta {
  Modality modality = Modality::audio_only;
  VocalChannel vocal_channel = VocalChannel::speech;
  EmotionLabel emotion = EmotionLabel::neutral;
  Intensity intensity = Intensity::normal;
  int statement = 1;   // 1..2
  int repetition = 1;  // 1..2
  int actor = 1;       // 1..24
  Sex sex = Sex::male; // even actor ids are female

  friend bool operator==(const RavdessMeta&, const RavdessMeta&) = default;
};

/// Parses a basename such as "03-01-05-01-01-01-02.wav". Throws
/// Error{malformed_name} for anything that is not seven two-digit fields in
/// range, and Error{out_of_scope_class} for emotion codes 07/08.
RavdessMeta parse_ravdess_name(std::string_view filename);

std::string render_ravdess_name(const RavdessMeta& meta);

std::string_view name_of(Sex s) noexcept;
std::string_view name_of(VocalChannel c) noexcept;
std::optional<Sex> sex_from_name(std::string_view s) noexcept;
std::optional<VocalChannel> channel_from_name(std::string_view s) noexcept;

struct CorpusFilter {
  std::optional<Sex> sex;
  std::set<EmotionLabel> emotions{kAllEmotions.begin(), kAllEmotions.end()};
  std::set<VocalChannel> channels{VocalChannel::speech, VocalChannel::song};

  bool accepts(const RavdessMeta& meta) const;
};

struct LabeledClip {
  AudioClip clip;
  EmotionLabel label = EmotionLabel::neutral;
  RavdessMeta meta;
};

struct LoadFailure {
  std::string path;
  std::string message;
};

struct CorpusLoad {
  std::vector<LabeledClip> records;  // lexicographic by path
  std::vector<LoadFailure> failures;
  std::size_t n_scanned = 0;         // files with a parsable 6-class name
};

struct LoadOptions {
  ResampleMethod resample = ResampleMethod::kaiser_sinc;
  std::size_t jobs = 1;
};

/// Paths under `root` (recursive) whose name parses and passes the filter,
/// sorted lexicographically. Throws Error{unreadable_file} if root is not a
/// directory.
std::vector<std::filesystem::path> scan_corpus(const std::filesystem::path& root,
                                               const CorpusFilter& filter,
                                               std::size_t* n_scanned = nullptr);

/// Decodes every file selected by scan_corpus. Decode failures are collected
/// rather than thrown; an empty result throws Error{empty_result}.
CorpusLoad load_corpus(const std::filesystem::path& root,
                       const CorpusFilter& filter,
                       const LoadOptions& options = {});

}  // namespace affectline
