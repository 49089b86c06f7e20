#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "affectline/features.hpp"
#include "affectline/nn.hpp"

namespace affectline {

inline constexpr char kCheckpointMagic[4] = {'A', 'F', 'L', '1'};
inline constexpr int kCheckpointVersion = 1;

/// Everything needed to reproduce inference: architecture, feature
/// configuration, normalization profile, class ordering, training metadata
/// and the flat parameter vector.
struct Checkpoint {
  nn::ModelSpec model_spec;
  FeatureConfig features;
  NormalizationProfile normalization;
  std::vector<std::string> classes;
  std::map<std::string, std::string> metadata;
  std::vector<float> params;

  nn::Model<float> model() const;
};

/// Checkpoint from a model plus the settings it was trained under; the class
/// list is filled with the canonical emotion ordering.
Checkpoint make_checkpoint(const nn::Model<float>& model, const FeatureConfig& features,
                           NormalizationProfile normalization,
                           std::map<std::string, std::string> metadata = {});

/// Layout: "AFL1", u64 little-endian header length, key=value header text,
/// then every parameter as a little-endian IEEE-754 binary32.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws Error{bad_magic}, Error{version_mismatch} or Error{truncated}.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace affectline
