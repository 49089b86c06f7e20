#include "affectline/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "affectline/audio.hpp"
#include "affectline/error.hpp"

namespace affectline {
namespace {

struct Prosody {
  double f0_hz;          // mean pitch
  double f0_slope;       // relative change over the utterance
  double f0_wobble;      // relative vibrato depth
  double syllables_hz;   // speaking rate
  double loudness;       // peak amplitude
  double brightness;     // harmonic roll-off exponent (smaller = brighter)
  double breath;         // aspiration noise fraction
};

constexpr std::array<Prosody, kNumEmotions> kProsody = {{
    {170.0, 0.00, 0.01, 3.5, 0.35, 1.4, 0.02},   // neutral
    {150.0, -0.10, 0.01, 2.5, 0.25, 1.8, 0.04},  // calm
    {250.0, 0.25, 0.05, 5.0, 0.55, 1.0, 0.03},   // happy
    {135.0, -0.30, 0.02, 2.0, 0.20, 2.2, 0.08},  // sad
    {220.0, -0.05, 0.03, 5.5, 0.85, 0.7, 0.12},  // angry
    {290.0, 0.10, 0.10, 6.0, 0.40, 1.2, 0.20},   // fearful
}};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0));
}

}  // namespace

std::vector<float> synthesize_emotion_clip(EmotionLabel emotion, const SyntheticVoice& voice,
                                           std::uint64_t utterance_seed) {
  std::mt19937_64 speaker(voice.speaker_seed * 0x9e3779b97f4a7c15ull + 1);
  const double speaker_pitch = uniform(speaker, 0.85, 1.15);
  const double speaker_formant = uniform(speaker, 0.9, 1.1);
  std::mt19937_64 rng(utterance_seed ^ (voice.speaker_seed << 32) ^ index_of(emotion));

  const Prosody p = kProsody[index_of(emotion)];
  const double fs = kCanonicalSampleRate;
  const auto n = static_cast<std::size_t>(voice.duration_s * fs);
  const double f0 = p.f0_hz * speaker_pitch * uniform(rng, 0.93, 1.07);
  const double rate = p.syllables_hz * uniform(rng, 0.85, 1.15);
  const double onset = uniform(rng, 0.1, 0.4);
  const double speech_len = voice.duration_s - onset - uniform(rng, 0.2, 0.5);
  const std::array<double, 3> formants = {700.0 * speaker_formant, 1200.0 * speaker_formant,
                                          2600.0 * speaker_formant};

  std::vector<float> out(n, 0.0f);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double u = (t - onset) / speech_len;  // 0..1 across the utterance
    // Background hiss everywhere.
    double s = 0.002 * uniform(rng, -1.0, 1.0);
    if (u >= 0.0 && u <= 1.0) {
      const double pitch = f0 * (1.0 + p.f0_slope * (u - 0.5)) *
                           (1.0 + p.f0_wobble * std::sin(2.0 * std::numbers::pi * 5.5 * t));
      phase += 2.0 * std::numbers::pi * pitch / fs;
      double voiced = 0.0;
      for (int h = 1; h * pitch < fs / 2.0 - 200.0 && h <= 40; ++h) {
        double gain = std::pow(static_cast<double>(h), -p.brightness);
        const double fh = h * pitch;
        for (double f : formants) gain *= 1.0 + 2.0 * std::exp(-std::pow((fh - f) / 150.0, 2.0));
        voiced += gain * std::sin(h * phase);
      }
      // Syllable envelope: raised-cosine bursts with short gaps.
      const double syl = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * rate * (t - onset));
      const double edge = std::min({1.0, u * 20.0, (1.0 - u) * 20.0});
      const double env = p.loudness * edge * (0.25 + 0.75 * syl);
      const double breath = p.breath * uniform(rng, -1.0, 1.0);
      s += env * (0.35 * voiced + breath);
    }
    out[i] = static_cast<float>(std::clamp(s, -1.0, 1.0));
  }
  return out;
}

std::vector<std::filesystem::path> write_synthetic_corpus(
    const std::filesystem::path& root, const SyntheticCorpusOptions& options) {
  if (options.actors == 0 || options.actors > 24) {
    throw Error(ErrorKind::config, "synthetic corpus actors must be in 1..24");
  }
  const std::size_t takes = std::clamp<std::size_t>(options.takes_per_emotion, 1, 4);
  std::vector<std::filesystem::path> paths;
  for (std::size_t actor = 1; actor <= options.actors; ++actor) {
    char dir[16];
    std::snprintf(dir, sizeof dir, "Actor_%02zu", actor);
    const auto actor_dir = root / dir;
    std::filesystem::create_directories(actor_dir);
    const SyntheticVoice voice{options.seed * 131 + actor, options.duration_s};
    for (VocalChannel channel : {VocalChannel::speech, VocalChannel::song}) {
      if (channel == VocalChannel::song && !options.include_song) continue;
      for (EmotionLabel e : kAllEmotions) {
        for (std::size_t take = 0; take < takes; ++take) {
          RavdessMeta meta;
          meta.modality = Modality::audio_only;
          meta.vocal_channel = channel;
          meta.emotion = e;
          meta.intensity = Intensity::normal;
          meta.statement = static_cast<int>(take / 2) + 1;
          meta.repetition = static_cast<int>(take % 2) + 1;
          meta.actor = static_cast<int>(actor);
          const auto samples = synthesize_emotion_clip(
              e, voice, options.seed ^ (take * 7919 + (channel == VocalChannel::song ? 104729 : 0)));
          std::vector<float> file_samples = samples;
          if (options.file_sample_rate_hz != kCanonicalSampleRate) {
            file_samples = resample(samples, kCanonicalSampleRate, options.file_sample_rate_hz);
          }
          const auto path = actor_dir / render_ravdess_name(meta);
          write_wav(path, file_samples, 1, options.file_sample_rate_hz, WavEncoding::pcm16);
          paths.push_back(path);
        }
      }
    }
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

}  // namespace affectline
