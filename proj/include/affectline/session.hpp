#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "affectline/audio.hpp"
#include "affectline/checkpoint.hpp"
#include "affectline/emotion.hpp"
#include "affectline/ravdess.hpp"

namespace affectline {

/// Source labels assigned by a day-long recorder's segmenter.
enum class SourceLabel { FAN, FAF, MAN, MAF, CHN, OTHER };

std::string_view name_of(SourceLabel s) noexcept;

/// Case-insensitive; anything outside the closed set is nullopt.
std::optional<SourceLabel> source_label_from_name(std::string_view s) noexcept;

/// One labeled segment. audio_path points at the segment's own audio file;
/// start_s/end_s locate it inside the original recording.
struct SegmentRecord {
  std::string session_id;
  std::string segment_id;
  SourceLabel source = SourceLabel::OTHER;
  std::filesystem::path audio_path;
  double start_s = 0.0;
  double end_s = 0.0;

  friend bool operator==(const SegmentRecord&, const SegmentRecord&) = default;
};

struct ManifestRowError {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string message;
};

struct Manifest {
  std::vector<SegmentRecord> records;
  std::size_t unknown_labels = 0;  // mapped to OTHER
  std::vector<ManifestRowError> row_errors;
};

inline constexpr std::string_view kManifestHeader =
    "session_id,segment_id,source_label,audio_path,start_s,end_s";

/// Parses manifest CSV text. Relative audio paths resolve against
/// `base_dir`. Missing header columns throw Error{manifest_schema}; bad rows
/// are collected in row_errors.
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir = {});

/// Reads a manifest file. With strict (default) the first bad row throws
/// Error{manifest_row} naming its line number.
Manifest load_manifest(const std::filesystem::path& path, bool strict = true);

void write_manifest(const std::filesystem::path& path, std::span<const SegmentRecord> records);

/// FAN records only, original order preserved.
std::vector<SegmentRecord> filter_fan(std::span<const SegmentRecord> records);

using SegmentClassifier =
    std::function<EmotionLabel(const SegmentRecord&, const AudioClip&)>;

struct SegmentPrediction {
  std::string segment_id;
  EmotionLabel emotion = EmotionLabel::neutral;

  friend bool operator==(const SegmentPrediction&, const SegmentPrediction&) = default;
};

struct SegmentFailure {
  std::string segment_id;
  std::string message;

  friend bool operator==(const SegmentFailure&, const SegmentFailure&) = default;
};

/// Per-session emotion distribution over successfully classified FAN
/// segments. counts sum to n_segments_fan - failures.size().
struct SessionReport {
  std::string session_id;
  std::array<std::size_t, kNumEmotions> counts{};
  std::array<double, kNumEmotions> proportions{};
  std::size_t n_segments_total = 0;
  std::size_t n_segments_fan = 0;
  std::vector<SegmentPrediction> predictions;  // sorted by segment_id
  std::vector<SegmentFailure> failures;        // sorted by segment_id

  std::size_t n_classified() const noexcept;

  friend bool operator==(const SessionReport&, const SessionReport&) = default;
};

struct ClassifyOptions {
  ResampleMethod resample = ResampleMethod::kaiser_sinc;
  std::size_t jobs = 1;
};

/// Classifies the FAN segments among `records` (all from one session).
/// Unreadable audio is recorded as a failure and excluded from proportions.
/// Throws Error{empty_session} when nothing could be classified.
SessionReport classify_session(std::span<const SegmentRecord> records,
                               const SegmentClassifier& classifier,
                               const ClassifyOptions& options = {});

/// Groups records by session_id and classifies each session, sorted by id.
/// Sessions with no classifiable segments are skipped and listed in
/// `empty_sessions` when provided.
std::vector<SessionReport> classify_manifest(std::span<const SegmentRecord> records,
                                             const SegmentClassifier& classifier,
                                             const ClassifyOptions& options = {},
                                             std::vector<std::string>* empty_sessions = nullptr);

/// Classifier backed by a checkpoint. Segments longer than the feature
/// window are classified on their first window unless chunk_vote is set, in
/// which case non-overlapping windows vote (ties to the lowest class index).
SegmentClassifier make_checkpoint_classifier(const Checkpoint& checkpoint,
                                             bool chunk_vote = false);

/// Writes <session_id>.csv (emotion,count,proportion) and <session_id>.svg.
void render_report(const SessionReport& report, const std::filesystem::path& out_dir);

struct ReportRow {
  EmotionLabel emotion;
  std::size_t count;
  double proportion;
};

/// Reads back a report CSV written by render_report.
std::vector<ReportRow> read_report_csv(const std::filesystem::path& path);

// --- synthetic sessions --------------------------------------------------------

struct LabeledAudio {
  std::vector<float> samples;  // canonical rate
  EmotionLabel label = EmotionLabel::neutral;
};

struct SynthOptions {
  std::string session_id = "S01";
  std::optional<double> snr_db;      // add white noise at this SNR
  std::uint64_t seed = 42;
  std::size_t distractors = 0;       // extra non-FAN segments (FAF/MAN/MAF/CHN)
};

struct SynthesizedSession {
  std::filesystem::path manifest_path;
  std::filesystem::path truth_path;
  std::vector<SegmentRecord> records;
  std::map<std::string, EmotionLabel> truth;  // FAN segment_id -> label
};

/// Writes one 16-bit WAV per clip under out_dir/<session_id>/, a manifest
/// labeling them FAN (segment order shuffled by seed), and a ground-truth
/// sidecar (segment_id,emotion). Same inputs and seed give byte-identical
/// files.
SynthesizedSession synthesize_session(std::span<const LabeledAudio> clips,
                                      const std::filesystem::path& out_dir,
                                      const SynthOptions& options = {});

struct NoisyMix {
  std::vector<float> mixed;
  std::vector<float> noise;
};

/// Gaussian white noise scaled so 20*log10(rms(signal)/rms(noise)) equals
/// snr_db; the mix is clipped to [-1, 1].
NoisyMix add_noise_at_snr(std::span<const float> signal, double snr_db, std::uint64_t seed);

std::map<std::string, EmotionLabel> read_truth_csv(const std::filesystem::path& path);

/// Uniform sample of up to n FAN segments for manual listening, returned in
/// manifest order.
std::vector<SegmentRecord> sample_for_audit(std::span<const SegmentRecord> records,
                                            std::size_t n, std::uint64_t seed);

}  // namespace affectline
