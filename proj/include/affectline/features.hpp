#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "affectline/audio.hpp"

namespace affectline {

/// Dense row-major matrix of doubles used throughout the feature chain.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
};

// Hamming is the only window; it is applied inside the spectral stage.
struct FrameConfig {
  std::size_t frame_len = 400;  // 25 ms at 16 kHz
  std::size_t hop = 160;        // 10 ms

  friend bool operator==(const FrameConfig&, const FrameConfig&) = default;
};

struct MfccConfig {
  int sample_rate_hz = kCanonicalSampleRate;
  std::size_t n_fft = 512;
  std::size_t n_mels = 26;
  std::size_t n_coeffs = 13;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;  // 0 selects the Nyquist frequency
  double log_floor = 1e-10;
  std::size_t delta_window = 2;

  double effective_fmax() const noexcept {
    return fmax_hz > 0.0 ? fmax_hz : sample_rate_hz / 2.0;
  }

  friend bool operator==(const MfccConfig&, const MfccConfig&) = default;
};

/// Everything that determines a feature matrix; stored in checkpoints and
/// used as the feature-cache key.
struct FeatureConfig {
  FrameConfig frame;
  MfccConfig mfcc;
  std::size_t t_fixed = 300;

  /// 3 * n_coeffs + 2 (mfcc, delta, delta-delta, zcr, rms).
  std::size_t rows() const noexcept { return 3 * mfcc.n_coeffs + 2; }

  /// Throws Error{config} when any invariant fails.
  void validate() const;

  /// Stable 64-bit digest of every field.
  std::uint64_t digest() const;

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

/// Splits the signal into overlapping frames (one per row). A signal
/// shorter than frame_len is zero-padded to exactly one frame.
Matrix frame_signal(std::span<const float> samples, const FrameConfig& cfg);
inline Matrix frame_signal(const AudioClip& clip, const FrameConfig& cfg) {
  return frame_signal(clip.samples, cfg);
}

/// Triangular HTK-mel filterbank, n_mels x (n_fft/2 + 1).
Matrix mel_filterbank(const MfccConfig& cfg);

/// Orthonormal DCT-II basis, n_coeffs x n_mels.
Matrix dct_basis(std::size_t n_coeffs, std::size_t n_mels);

/// Hamming window, FFT power spectrum, mel energies, natural log with floor,
/// orthonormal DCT-II. Returns n_coeffs x T.
Matrix mfcc(const Matrix& frames, const MfccConfig& cfg);

/// Regression delta over +/-N frames with edge replication.
Matrix delta(const Matrix& m, std::size_t n);

/// Sign-change fraction per frame; zero counts as positive.
std::vector<double> zcr(const Matrix& frames);

std::vector<double> rms(const Matrix& frames);

/// Per-row z-score statistics taken from training clips.
struct NormalizationProfile {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool empty() const noexcept { return mean.empty(); }
  friend bool operator==(const NormalizationProfile&,
                         const NormalizationProfile&) = default;
};

/// rows x t_fixed features as 32-bit floats; columns at or beyond
/// n_valid_frames are exactly zero.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t n_valid_frames = 0;
  std::vector<float> values;

  float operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  float& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

/// Raw (unnormalized) feature matrix for a clip.
FeatureMatrix assemble_features(std::span<const float> samples,
                                const FeatureConfig& cfg);

/// Same, then applies `profile` when it is non-null and non-empty.
FeatureMatrix assemble_features(const AudioClip& clip, const FeatureConfig& cfg,
                                const NormalizationProfile* profile = nullptr);

/// Mean and population standard deviation per row over the valid columns of
/// every input. Rows with deviation below 1e-8 get a deviation of 1.
NormalizationProfile compute_profile(std::span<const FeatureMatrix* const> inputs);

/// Standardizes the valid columns in place; padding stays zero.
void apply_profile(FeatureMatrix& m, const NormalizationProfile& profile);

/// "mfcc_0".."mfcc_12", "delta_0".., "delta2_0".., "zcr", "rms".
std::vector<std::string> feature_row_names(const FeatureConfig& cfg);

/// One line per feature row: name followed by the values of every column.
void write_feature_csv(std::ostream& out, const FeatureMatrix& m,
                       const FeatureConfig& cfg);

}  // namespace affectline
