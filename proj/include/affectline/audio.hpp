#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace affectline {

inline constexpr int kCanonicalSampleRate = 16000;

/// Decoded mono waveform at the pipeline rate.
///
/// Invariants: samples non-empty, every sample in [-1, 1], and
/// sample_rate_hz == kCanonicalSampleRate for clips produced by read_wav.
struct AudioClip {
  std::vector<float> samples;
  int sample_rate_hz = kCanonicalSampleRate;
  std::string source_path;

  std::size_t size() const noexcept { return samples.size(); }
  double duration_s() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

enum class ResampleMethod { kaiser_sinc, linear };

/// Windowed-sinc design: Kaiser window with beta 8.6, 32 zero crossings on
/// each side of the kernel centre.
struct SincDesign {
  double kaiser_beta = 8.6;
  int zero_crossings = 32;
};

/// Rational-ratio resampler. Downsampling lowers the cutoff to the output
/// Nyquist frequency.
std::vector<float> resample(std::span<const float> in, int in_rate,
                            int out_rate,
                            ResampleMethod method = ResampleMethod::kaiser_sinc,
                            const SincDesign& design = {});

/// Decodes a RIFF/WAVE byte buffer (PCM 8/16/24-bit, IEEE float 32-bit,
/// 1 or 2 channels), downmixes by channel average, resamples to the
/// canonical rate and clamps to [-1, 1].
AudioClip decode_wav(std::span<const std::uint8_t> bytes,
                     const std::string& source_path = {},
                     ResampleMethod method = ResampleMethod::kaiser_sinc);

AudioClip read_wav(const std::filesystem::path& path,
                   ResampleMethod method = ResampleMethod::kaiser_sinc);

enum class WavEncoding { pcm8, pcm16, pcm24, float32 };

/// Writes interleaved samples (values outside [-1, 1] are clipped for
/// integer encodings).
void write_wav(const std::filesystem::path& path,
               std::span<const float> interleaved, int channels,
               int sample_rate_hz, WavEncoding encoding = WavEncoding::pcm16);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace affectline
