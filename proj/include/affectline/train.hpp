#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "affectline/checkpoint.hpp"
#include "affectline/emotion.hpp"
#include "affectline/features.hpp"
#include "affectline/nn.hpp"
#include "affectline/ravdess.hpp"

namespace affectline {

/// One labeled training/evaluation item holding raw (unnormalized) features.
struct Example {
  FeatureMatrix features;
  EmotionLabel label = EmotionLabel::neutral;
  std::string id;
};

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 25;
  nn::RmsPropConfig optimizer{};
  std::uint64_t seed = 42;
  double split_ratio = 0.8;  // train fraction
  bool stratified = true;
  bool shuffle_each_epoch = true;
  std::size_t patience = 0;             // stop after this many epochs without test gain; 0 = off
  double stop_at_train_accuracy = 0.0;  // stop once reached; 0 = off
  std::size_t jobs = 1;                 // evaluation workers

  /// Throws Error{config}.
  void validate() const;
};

struct Split {
  std::vector<std::size_t> train;  // ascending indices
  std::vector<std::size_t> test;
};

/// Stratified (per-class test count = round((1 - ratio) * class size)) or
/// plain random split. Deterministic for a given seed. Throws
/// Error{invalid_split} when a present class has fewer than 2 records.
Split split_dataset(std::span<const EmotionLabel> labels, double split_ratio,
                    std::uint64_t seed, bool stratified = true);

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  void add(EmotionLabel truth, EmotionLabel predicted) noexcept {
    ++counts_[index_of(truth)][index_of(predicted)];
  }
  std::size_t at(std::size_t truth, std::size_t predicted) const {
    return counts_.at(truth).at(predicted);
  }
  std::size_t total() const noexcept;
  std::size_t trace() const noexcept;
  std::size_t row_sum(std::size_t truth) const noexcept;
  /// trace / total; 0 when empty.
  double accuracy() const noexcept;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::array<std::array<std::size_t, kNumEmotions>, kNumEmotions> counts_{};
};

struct EpochMetrics {
  std::size_t epoch = 0;       // 1-based
  double train_accuracy = 0.0; // running, from in-batch predictions
  double test_accuracy = 0.0;  // NaN when the test set is empty
  double train_loss = 0.0;
  double test_loss = 0.0;
};

struct Metrics {
  std::vector<EpochMetrics> epochs;
  ConfusionMatrix confusion;  // on the evaluated / test records
  double accuracy = 0.0;
};

struct TrainHooks {
  /// Called with the corpus index of every record read while computing the
  /// normalization profile.
  std::function<void(std::size_t)> on_normalization_read;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  Checkpoint checkpoint;
  Metrics metrics;
  Split split;
};

/// Trains on explicit train/test index sets. The normalization profile is
/// computed from train records only. Throws Error{divergence} naming the
/// epoch and batch on a non-finite loss.
TrainResult fit(std::span<const Example> corpus, const Split& split,
                const nn::ModelSpec& spec, const FeatureConfig& features,
                const TrainConfig& config, const TrainHooks& hooks = {});

/// split_dataset followed by fit.
TrainResult train(std::span<const Example> corpus, const nn::ModelSpec& spec,
                  const FeatureConfig& features, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Predicted label for raw features (normalized with the checkpoint profile).
EmotionLabel predict(const nn::Model<float>& model, const NormalizationProfile& profile,
                     FeatureMatrix raw);

/// Argmax per record, confusion matrix and accuracy. Throws
/// Error{config_mismatch} if `extraction` differs from the checkpoint's
/// feature configuration and Error{empty_input} for no records.
Metrics evaluate(const Checkpoint& checkpoint, std::span<const Example> records,
                 const FeatureConfig& extraction, std::size_t jobs = 1);

// --- corpus feature extraction with an on-disk cache ------------------------

/// Cache of raw feature matrices keyed by (file content hash, feature config
/// digest, resampling method).
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path dir);

  /// Directory from AFFECTLINE_CACHE_DIR, else $XDG_CACHE_HOME/affectline,
  /// else ~/.cache/affectline.
  static std::filesystem::path default_dir();

  std::optional<FeatureMatrix> get(std::uint64_t key) const;
  void put(std::uint64_t key, const FeatureMatrix& m) const;

  static std::uint64_t key_for(std::span<const std::uint8_t> file_bytes,
                               const FeatureConfig& cfg, ResampleMethod method);

  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
};

struct ExtractOptions {
  ResampleMethod resample = ResampleMethod::kaiser_sinc;
  std::size_t jobs = 1;
  std::optional<std::filesystem::path> cache_dir;  // no caching when unset
};

struct CorpusFeatures {
  std::vector<Example> examples;  // lexicographic by path
  std::vector<LoadFailure> failures;
  std::size_t cache_hits = 0;
};

/// Scans a RAVDESS-style tree, decodes and extracts features for every file
/// passing the filter. Decode failures are collected; an empty result throws
/// Error{empty_result}.
CorpusFeatures extract_corpus(const std::filesystem::path& root, const CorpusFilter& filter,
                              const FeatureConfig& cfg, const ExtractOptions& options = {});

/// Features for already-decoded clips.
std::vector<Example> extract_examples(std::span<const LabeledClip> clips,
                                      const FeatureConfig& cfg, std::size_t jobs = 1);

// --- exports ----------------------------------------------------------------

/// "epoch,train_acc,test_acc,train_loss" with fixed 6-decimal formatting.
void write_metrics_csv(const std::filesystem::path& path, const Metrics& metrics);

/// Header "true\predicted,neutral,...", one row per true class.
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);

}  // namespace affectline
