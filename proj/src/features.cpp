#include "affectline/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>

#include "affectline/error.hpp"
#include "affectline/simd.hpp"

namespace affectline {
namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// FFTW planning is not thread-safe; executing an existing plan is.
fftw_plan r2c_plan(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard lock(mutex);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  plans.emplace(n, plan);
  return plan;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename T>
std::uint64_t mix(std::uint64_t h, T v) {
  return fnv1a(h, &v, sizeof v);
}

}  // namespace

void FeatureConfig::validate() const {
  const auto bad = [](const std::string& why) {
    return Error(ErrorKind::config, "invalid feature config: " + why);
  };
  if (frame.frame_len == 0 || frame.hop == 0) throw bad("frame_len and hop must be positive");
  if (frame.hop > frame.frame_len) throw bad("hop must not exceed frame_len");
  if (mfcc.sample_rate_hz <= 0) throw bad("sample rate must be positive");
  if (mfcc.n_fft < frame.frame_len || (mfcc.n_fft & (mfcc.n_fft - 1)) != 0) {
    throw bad("n_fft must be a power of two >= frame_len");
  }
  if (mfcc.n_mels == 0 || mfcc.n_coeffs == 0 || mfcc.n_coeffs > mfcc.n_mels) {
    throw bad("need 0 < n_coeffs <= n_mels");
  }
  if (mfcc.fmin_hz < 0.0 || mfcc.fmin_hz >= mfcc.effective_fmax() ||
      mfcc.effective_fmax() > mfcc.sample_rate_hz / 2.0) {
    throw bad("need 0 <= fmin < fmax <= Nyquist");
  }
  if (!(mfcc.log_floor > 0.0)) throw bad("log_floor must be positive");
  if (mfcc.delta_window == 0) throw bad("delta_window must be positive");
  if (t_fixed == 0) throw bad("t_fixed must be positive");
}

std::uint64_t FeatureConfig::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = mix(h, static_cast<std::uint64_t>(frame.frame_len));
  h = mix(h, static_cast<std::uint64_t>(frame.hop));
  h = mix(h, static_cast<std::int64_t>(mfcc.sample_rate_hz));
  h = mix(h, static_cast<std::uint64_t>(mfcc.n_fft));
  h = mix(h, static_cast<std::uint64_t>(mfcc.n_mels));
  h = mix(h, static_cast<std::uint64_t>(mfcc.n_coeffs));
  h = mix(h, mfcc.fmin_hz);
  h = mix(h, mfcc.effective_fmax());
  h = mix(h, mfcc.log_floor);
  h = mix(h, static_cast<std::uint64_t>(mfcc.delta_window));
  h = mix(h, static_cast<std::uint64_t>(t_fixed));
  return h;
}

Matrix frame_signal(std::span<const float> samples, const FrameConfig& cfg) {
  const std::size_t len = samples.size();
  const std::size_t n_frames =
      len >= cfg.frame_len ? (len - cfg.frame_len) / cfg.hop + 1 : 1;
  Matrix frames(n_frames, cfg.frame_len);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t start = t * cfg.hop;
    const std::size_t count = std::min(cfg.frame_len, len - std::min(len, start));
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(start), count,
                frames.row(t).begin());
  }
  return frames;
}

Matrix mel_filterbank(const MfccConfig& cfg) {
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.effective_fmax());
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(cfg.n_mels + 1));
  }
  Matrix fb(cfg.n_mels, n_bins);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m];
    const double centre = edges[m + 1];
    const double right = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate_hz /
                       static_cast<double>(cfg.n_fft);
      const double rise = (f - left) / (centre - left);
      const double fall = (right - f) / (right - centre);
      fb(m, k) = std::max(0.0, std::min(rise, fall));
    }
  }
  return fb;
}

Matrix dct_basis(std::size_t n_coeffs, std::size_t n_mels) {
  Matrix basis(n_coeffs, n_mels);
  const double m = static_cast<double>(n_mels);
  for (std::size_t k = 0; k < n_coeffs; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / m);
    for (std::size_t j = 0; j < n_mels; ++j) {
      basis(k, j) = scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                                     (2.0 * static_cast<double>(j) + 1.0) / (2.0 * m));
    }
  }
  return basis;
}

Matrix mfcc(const Matrix& frames, const MfccConfig& cfg) {
  const std::size_t frame_len = frames.cols;
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  if (frame_len > cfg.n_fft) {
    throw Error(ErrorKind::config, "frame length exceeds n_fft");
  }
  const Matrix fb = mel_filterbank(cfg);
  const Matrix dct = dct_basis(cfg.n_coeffs, cfg.n_mels);
  std::vector<double> window(frame_len, 1.0);
  if (frame_len > 1) {
    for (std::size_t n = 0; n < frame_len; ++n) {
      window[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                         static_cast<double>(frame_len - 1));
    }
  }

  const fftw_plan plan = r2c_plan(cfg.n_fft);
  std::unique_ptr<double, FftwFree> in(fftw_alloc_real(cfg.n_fft));
  std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(n_bins));
  std::vector<double> power(n_bins);
  std::vector<double> log_mel(cfg.n_mels);
  const auto& k = simd::kernels();

  Matrix coeffs(cfg.n_coeffs, frames.rows);
  for (std::size_t t = 0; t < frames.rows; ++t) {
    const auto frame = frames.row(t);
    std::fill_n(in.get(), cfg.n_fft, 0.0);
    for (std::size_t n = 0; n < frame_len; ++n) in.get()[n] = frame[n] * window[n];
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double re = out.get()[b][0];
      const double im = out.get()[b][1];
      power[b] = re * re + im * im;
    }
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      const double energy = k.dot_f64(fb.row(m).data(), power.data(), n_bins);
      log_mel[m] = std::log(std::max(energy, cfg.log_floor));
    }
    for (std::size_t c = 0; c < cfg.n_coeffs; ++c) {
      coeffs(c, t) = k.dot_f64(dct.row(c).data(), log_mel.data(), cfg.n_mels);
    }
  }
  return coeffs;
}

Matrix delta(const Matrix& m, std::size_t n) {
  Matrix out(m.rows, m.cols);
  if (m.cols == 0 || n == 0) return out;
  double denom = 0.0;
  for (std::size_t i = 1; i <= n; ++i) denom += static_cast<double>(i * i);
  denom *= 2.0;
  const auto last = static_cast<std::ptrdiff_t>(m.cols) - 1;
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::ptrdiff_t t = 0; t <= last; ++t) {
      double acc = 0.0;
      for (std::size_t i = 1; i <= n; ++i) {
        const auto di = static_cast<std::ptrdiff_t>(i);
        const auto fwd = static_cast<std::size_t>(std::min(t + di, last));
        const auto back = static_cast<std::size_t>(std::max<std::ptrdiff_t>(t - di, 0));
        acc += static_cast<double>(i) * (m(r, fwd) - m(r, back));
      }
      out(r, static_cast<std::size_t>(t)) = acc / denom;
    }
  }
  return out;
}

std::vector<double> zcr(const Matrix& frames) {
  std::vector<double> out(frames.rows, 0.0);
  if (frames.cols < 2) return out;
  for (std::size_t t = 0; t < frames.rows; ++t) {
    const auto f = frames.row(t);
    std::size_t crossings = 0;
    for (std::size_t i = 1; i < f.size(); ++i) {
      crossings += (f[i] >= 0.0) != (f[i - 1] >= 0.0);
    }
    out[t] = static_cast<double>(crossings) / static_cast<double>(f.size() - 1);
  }
  return out;
}

std::vector<double> rms(const Matrix& frames) {
  std::vector<double> out(frames.rows, 0.0);
  if (frames.cols == 0) return out;
  for (std::size_t t = 0; t < frames.rows; ++t) {
    const auto f = frames.row(t);
    double acc = 0.0;
    for (double v : f) acc += v * v;
    out[t] = std::sqrt(acc / static_cast<double>(f.size()));
  }
  return out;
}

FeatureMatrix assemble_features(std::span<const float> samples,
                                const FeatureConfig& cfg) {
  const Matrix frames = frame_signal(samples, cfg.frame);
  const Matrix c = mfcc(frames, cfg.mfcc);
  const Matrix d1 = delta(c, cfg.mfcc.delta_window);
  const Matrix d2 = delta(d1, cfg.mfcc.delta_window);
  const std::vector<double> z = zcr(frames);
  const std::vector<double> e = rms(frames);

  FeatureMatrix fm;
  fm.rows = cfg.rows();
  fm.cols = cfg.t_fixed;
  fm.n_valid_frames = std::min(frames.rows, cfg.t_fixed);
  fm.values.assign(fm.rows * fm.cols, 0.0f);
  const std::size_t nc = cfg.mfcc.n_coeffs;
  for (std::size_t t = 0; t < fm.n_valid_frames; ++t) {
    for (std::size_t r = 0; r < nc; ++r) {
      fm(r, t) = static_cast<float>(c(r, t));
      fm(nc + r, t) = static_cast<float>(d1(r, t));
      fm(2 * nc + r, t) = static_cast<float>(d2(r, t));
    }
    fm(3 * nc, t) = static_cast<float>(z[t]);
    fm(3 * nc + 1, t) = static_cast<float>(e[t]);
  }
  return fm;
}

FeatureMatrix assemble_features(const AudioClip& clip, const FeatureConfig& cfg,
                                const NormalizationProfile* profile) {
  FeatureMatrix fm = assemble_features(clip.samples, cfg);
  if (profile && !profile->empty()) apply_profile(fm, *profile);
  return fm;
}

NormalizationProfile compute_profile(std::span<const FeatureMatrix* const> inputs) {
  if (inputs.empty()) {
    throw Error(ErrorKind::empty_input, "normalization profile needs at least one input");
  }
  const std::size_t rows = inputs.front()->rows;
  std::vector<double> sum(rows, 0.0), sum_sq(rows, 0.0);
  std::size_t count = 0;
  for (const FeatureMatrix* m : inputs) {
    if (m->rows != rows) {
      throw Error(ErrorKind::shape_mismatch, "feature matrices differ in row count");
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t t = 0; t < m->n_valid_frames; ++t) {
        const double v = (*m)(r, t);
        sum[r] += v;
        sum_sq[r] += v * v;
      }
    }
    count += m->n_valid_frames;
  }
  NormalizationProfile p;
  p.mean.resize(rows);
  p.stddev.resize(rows);
  const double n = std::max<double>(1.0, static_cast<double>(count));
  for (std::size_t r = 0; r < rows; ++r) {
    p.mean[r] = sum[r] / n;
    const double var = std::max(0.0, sum_sq[r] / n - p.mean[r] * p.mean[r]);
    const double sd = std::sqrt(var);
    p.stddev[r] = sd < 1e-8 ? 1.0 : sd;
  }
  return p;
}

void apply_profile(FeatureMatrix& m, const NormalizationProfile& profile) {
  if (profile.mean.size() != m.rows || profile.stddev.size() != m.rows) {
    throw Error(ErrorKind::shape_mismatch, "normalization profile does not match feature rows");
  }
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t t = 0; t < m.n_valid_frames; ++t) {
      m(r, t) = static_cast<float>((m(r, t) - profile.mean[r]) / profile.stddev[r]);
    }
  }
}

std::vector<std::string> feature_row_names(const FeatureConfig& cfg) {
  std::vector<std::string> names;
  for (const char* prefix : {"mfcc_", "delta_", "delta2_"}) {
    for (std::size_t i = 0; i < cfg.mfcc.n_coeffs; ++i) {
      names.push_back(prefix + std::to_string(i));
    }
  }
  names.emplace_back("zcr");
  names.emplace_back("rms");
  return names;
}

void write_feature_csv(std::ostream& out, const FeatureMatrix& m,
                       const FeatureConfig& cfg) {
  const auto names = feature_row_names(cfg);
  out << "feature";
  for (std::size_t t = 0; t < m.cols; ++t) out << ",t" << t;
  out << '\n';
  const auto old_precision = out.precision(9);
  for (std::size_t r = 0; r < m.rows; ++r) {
    out << (r < names.size() ? names[r] : "row_" + std::to_string(r));
    for (std::size_t t = 0; t < m.cols; ++t) out << ',' << m(r, t);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace affectline
