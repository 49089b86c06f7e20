#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "affectline/audio.hpp"
#include "affectline/features.hpp"
#include "affectline/nn.hpp"
#include "affectline/ravdess.hpp"
#include "affectline/train.hpp"

namespace affectline {

/// Flat key=value run configuration merging feature, model, training, filter
/// and path settings. Keys are fixed; unknown keys are rejected.
class RunConfig {
 public:
  struct KeyInfo {
    std::string_view key;
    std::string_view default_value;
    std::string_view help;
  };

  static const std::vector<KeyInfo>& keys();

  RunConfig();

  /// Throws Error{config} for an unknown key.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  /// True if the key was set by a file or a flag rather than defaulted.
  bool is_explicit(const std::string& key) const { return explicit_.contains(key); }

  /// Parses "key = value" lines; '#' starts a comment.
  void merge_text(std::string_view text, const std::string& origin = "config");
  void merge_file(const std::filesystem::path& path);

  /// Every key in declaration order, one "key=value" per line.
  std::string to_text() const;
  void write(const std::filesystem::path& path) const;

  // Typed views; each throws Error{config} on a malformed value.
  FeatureConfig feature_config() const;
  nn::ModelSpec model_spec() const;
  TrainConfig train_config() const;
  CorpusFilter corpus_filter() const;
  ResampleMethod resample_method() const;
  std::size_t jobs() const;
  bool flag(const std::string& key) const;
  std::size_t size_value(const std::string& key) const;
  double real_value(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

/// Flag spelling of a key: "frame_len" -> "--frame-len".
std::string flag_name(std::string_view key);

}  // namespace affectline
