#include "affectline/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "affectline/error.hpp"
#include "affectline/simd.hpp"

namespace affectline {
namespace {

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

std::vector<float> resample_sinc(std::span<const float> in, int in_rate,
                                 int out_rate, const SincDesign& design) {
  const std::int64_t g = std::gcd(in_rate, out_rate);
  const std::int64_t up = out_rate / g;    // L
  const std::int64_t down = in_rate / g;   // M
  const double cutoff = std::min(1.0, static_cast<double>(out_rate) / in_rate);
  const double half_width = design.zero_crossings / cutoff;
  const auto reach = static_cast<std::int64_t>(std::ceil(half_width));
  const std::size_t taps = static_cast<std::size_t>(2 * reach + 2);
  const double i0_beta = std::cyl_bessel_i(0.0, design.kaiser_beta);

  // One normalized tap row per output phase; tap j covers input offset
  // j - reach relative to the integer part of the output position.
  std::vector<float> table(static_cast<std::size_t>(up) * taps);
  for (std::int64_t p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / static_cast<double>(up);
    std::vector<double> row(taps);
    double sum = 0.0;
    for (std::size_t j = 0; j < taps; ++j) {
      const double d = frac - (static_cast<double>(j) - static_cast<double>(reach));
      const double u = d / half_width;
      if (std::abs(u) >= 1.0) continue;
      const double window =
          std::cyl_bessel_i(0.0, design.kaiser_beta * std::sqrt(1.0 - u * u)) /
          i0_beta;
      row[j] = cutoff * sinc(cutoff * d) * window;
      sum += row[j];
    }
    for (std::size_t j = 0; j < taps; ++j) {
      table[static_cast<std::size_t>(p) * taps + j] = static_cast<float>(row[j] / sum);
    }
  }

  std::vector<float> padded(in.size() + taps + 2, 0.0f);
  std::copy(in.begin(), in.end(), padded.begin() + reach);

  const auto n_in = static_cast<std::int64_t>(in.size());
  const std::int64_t n_out = (n_in * up + down - 1) / down;
  std::vector<float> out(static_cast<std::size_t>(n_out));
  const auto& k = simd::kernels();
  for (std::int64_t n = 0; n < n_out; ++n) {
    const std::int64_t pos = n * down;
    const std::int64_t base = pos / up;
    const std::int64_t phase = pos % up;
    out[static_cast<std::size_t>(n)] =
        k.dot_f32(table.data() + phase * static_cast<std::int64_t>(taps),
                  padded.data() + base, taps);
  }
  return out;
}

std::vector<float> resample_linear(std::span<const float> in, int in_rate,
                                   int out_rate) {
  const auto n_in = static_cast<std::int64_t>(in.size());
  const std::int64_t n_out = (n_in * out_rate + in_rate - 1) / in_rate;
  std::vector<float> out(static_cast<std::size_t>(n_out));
  for (std::int64_t n = 0; n < n_out; ++n) {
    const std::int64_t num = n * in_rate;
    const std::int64_t i = num / out_rate;
    const double frac = static_cast<double>(num % out_rate) / out_rate;
    const float a = in[static_cast<std::size_t>(std::min(i, n_in - 1))];
    const float b = in[static_cast<std::size_t>(std::min(i + 1, n_in - 1))];
    out[static_cast<std::size_t>(n)] = static_cast<float>(a + (b - a) * frac);
  }
  return out;
}

}  // namespace

std::vector<float> resample(std::span<const float> in, int in_rate,
                            int out_rate, ResampleMethod method,
                            const SincDesign& design) {
  if (in_rate <= 0 || out_rate <= 0) {
    throw Error(ErrorKind::unsupported_encoding, "sample rate must be positive");
  }
  if (in.empty()) return {};
  if (in_rate == out_rate) return {in.begin(), in.end()};
  return method == ResampleMethod::linear
             ? resample_linear(in, in_rate, out_rate)
             : resample_sinc(in, in_rate, out_rate, design);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::unreadable_file, "cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

AudioClip decode_wav(std::span<const std::uint8_t> bytes,
                     const std::string& source_path, ResampleMethod method) {
  const auto fail = [&](ErrorKind kind, const std::string& why) {
    return Error(kind, (source_path.empty() ? std::string("wav") : source_path) +
                           ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail(ErrorKind::unreadable_file, "not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t len = le32(hdr + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(len, bytes.size() - body);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (avail < 16) throw fail(ErrorKind::unreadable_file, "short fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      format = le16(f);
      channels = le16(f + 2);
      rate = le32(f + 4);
      block_align = le16(f + 12);
      bits = le16(f + 14);
      if (format == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE: subformat GUID prefix
        if (avail < 40) throw fail(ErrorKind::unreadable_file, "short extensible fmt");
        format = le16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.subspan(body, avail);
      have_data = true;
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt || !have_data) {
    throw fail(ErrorKind::unreadable_file, "missing fmt or data chunk");
  }

  const bool pcm = format == 1 && (bits == 8 || bits == 16 || bits == 24);
  const bool ieee = format == 3 && bits == 32;
  if (!pcm && !ieee) {
    throw fail(ErrorKind::unsupported_encoding,
               "format " + std::to_string(format) + " with " +
                   std::to_string(bits) + " bits");
  }
  if (channels < 1 || channels > 2) {
    throw fail(ErrorKind::unsupported_encoding,
               std::to_string(channels) + " channels");
  }
  if (rate == 0) throw fail(ErrorKind::unsupported_encoding, "zero sample rate");
  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  if (block_align != 0 && block_align != frame_bytes) {
    throw fail(ErrorKind::unsupported_encoding, "unexpected block alignment");
  }
  const std::size_t frames = data.size() / frame_bytes;
  if (frames == 0) throw fail(ErrorKind::empty_audio, "no audio frames");

  const auto sample_at = [&](std::size_t i) -> double {
    const std::uint8_t* p = data.data() + i * bytes_per_sample;
    if (ieee) {
      float v;
      std::uint32_t u = le32(p);
      std::memcpy(&v, &u, sizeof v);
      return std::isfinite(v) ? v : 0.0;
    }
    switch (bits) {
      case 8: return (static_cast<int>(p[0]) - 128) / 128.0;
      case 16: return static_cast<std::int16_t>(le16(p)) / 32768.0;
      default: {
        std::int32_t v = static_cast<std::int32_t>(
            (static_cast<std::uint32_t>(p[0]) << 8) |
            (static_cast<std::uint32_t>(p[1]) << 16) |
            (static_cast<std::uint32_t>(p[2]) << 24));
        return (v >> 8) / 8388608.0;
      }
    }
  };

  std::vector<float> mono(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) acc += sample_at(f * channels + c);
    mono[f] = static_cast<float>(acc / channels);
  }

  AudioClip clip;
  clip.source_path = source_path;
  clip.sample_rate_hz = kCanonicalSampleRate;
  clip.samples = resample(mono, static_cast<int>(rate), kCanonicalSampleRate, method);
  for (float& s : clip.samples) s = std::clamp(s, -1.0f, 1.0f);
  if (clip.samples.empty()) throw fail(ErrorKind::empty_audio, "no audio after resampling");
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path, ResampleMethod method) {
  const auto bytes = read_file_bytes(path);
  return decode_wav(bytes, path.string(), method);
}

void write_wav(const std::filesystem::path& path,
               std::span<const float> interleaved, int channels,
               int sample_rate_hz, WavEncoding encoding) {
  std::uint16_t bits = 16;
  std::uint16_t format = 1;
  switch (encoding) {
    case WavEncoding::pcm8: bits = 8; break;
    case WavEncoding::pcm16: bits = 16; break;
    case WavEncoding::pcm24: bits = 24; break;
    case WavEncoding::float32: bits = 32; format = 3; break;
  }
  const std::uint32_t data_len =
      static_cast<std::uint32_t>(interleaved.size() * (bits / 8));
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len + 1);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_len + (data_len & 1u));
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, format);
  put16(out, static_cast<std::uint16_t>(channels));
  put32(out, static_cast<std::uint32_t>(sample_rate_hz));
  put32(out, static_cast<std::uint32_t>(sample_rate_hz * channels * (bits / 8)));
  put16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
  put16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_len);
  for (float s : interleaved) {
    const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
    switch (encoding) {
      case WavEncoding::pcm8:
        out.push_back(static_cast<std::uint8_t>(
            std::clamp(std::lround(c * 128.0) + 128, 0L, 255L)));
        break;
      case WavEncoding::pcm16:
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(
                       std::clamp(std::lround(c * 32768.0), -32768L, 32767L))));
        break;
      case WavEncoding::pcm24: {
        const auto v = static_cast<std::uint32_t>(static_cast<std::int32_t>(
            std::clamp(std::lround(c * 8388608.0), -8388608L, 8388607L)));
        out.push_back(static_cast<std::uint8_t>(v));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        break;
      }
      case WavEncoding::float32: {
        std::uint32_t u;
        std::memcpy(&u, &s, sizeof u);
        put32(out, u);
        break;
      }
    }
  }
  if (data_len & 1u) out.push_back(0);

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorKind::io, "cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorKind::io, "write failed: " + path.string());
}

}  // namespace affectline
