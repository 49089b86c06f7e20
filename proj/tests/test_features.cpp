#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "affectline/error.hpp"
#include "affectline/features.hpp"
#include "oracle_mfcc.hpp"
#include "test_util.hpp"

using namespace affectline;
using affectline::testing::oracle_mfcc;
using affectline::testing::sine;
using affectline::testing::uniform;
using affectline::testing::uniform_size;

namespace {

Matrix mfcc_of(std::span<const float> x, const FeatureConfig& cfg = {}) {
  return mfcc(frame_signal(x, cfg.frame), cfg.mfcc);
}

std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("frame counts follow the padding rule") {
  const FrameConfig cfg;
  CHECK(frame_signal(std::vector<float>(16000, 0.1f), cfg).rows == 98);
  const Matrix short_clip = frame_signal(std::vector<float>(300, 0.5f), cfg);
  REQUIRE(short_clip.rows == 1);
  CHECK(short_clip(0, 299) == 0.5);
  CHECK(short_clip(0, 300) == 0.0);
  CHECK(short_clip(0, 399) == 0.0);
  CHECK(frame_signal(std::vector<float>(400, 0.1f), cfg).rows == 1);
  CHECK(frame_signal(std::vector<float>(559, 0.1f), cfg).rows == 1);
  CHECK(frame_signal(std::vector<float>(560, 0.1f), cfg).rows == 2);
}

TEST_CASE("frames are unwindowed copies of the signal") {
  std::mt19937_64 rng(3);
  const auto x = uniform(rng, 1000);
  const Matrix f = frame_signal(x, FrameConfig{});
  for (std::size_t t = 0; t < f.rows; ++t)
    for (std::size_t n = 0; n < f.cols; ++n) CHECK(f(t, n) == double(x[t * 160 + n]));
}

TEST_CASE("MFCC of a 440 Hz unit sine matches the naive-DFT oracle") {
  const auto x = sine(440.0, 16000.0, 2400, 1.0);
  const auto got = mfcc_of(x);
  const auto want = oracle_mfcc(to_double(x), 400, 160, 512, 26, 13, 16000.0, 1e-10);
  REQUIRE(got.cols == want[0].size());
  for (std::size_t c = 0; c < 13; ++c)
    for (std::size_t t = 0; t < got.cols; ++t) {
      CAPTURE(c); CAPTURE(t);
      CHECK(std::abs(got(c, t) - want[c][t]) <= 1e-6 * std::max(1.0, std::abs(want[c][t])));
    }
}

TEST_CASE("MFCC matches the oracle on 20 random short signals (property)") {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = uniform_size(rng, 100, 1400);
    std::vector<float> x = uniform(rng, n, -0.3, 0.3);
    const double f0 = 80.0 + 3000.0 * std::uniform_real_distribution<>(0, 1)(rng);
    const auto tone = sine(f0, 16000.0, n, 0.5);
    for (std::size_t i = 0; i < n; ++i) x[i] += tone[i];
    const auto got = mfcc_of(x);
    const auto want = oracle_mfcc(to_double(x), 400, 160, 512, 26, 13, 16000.0, 1e-10);
    REQUIRE(got.cols == want[0].size());
    double worst = 0;
    for (std::size_t c = 0; c < 13; ++c)
      for (std::size_t t = 0; t < got.cols; ++t)
        worst = std::max(worst, std::abs(got(c, t) - want[c][t]) / std::max(1.0, std::abs(want[c][t])));
    CAPTURE(trial);
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("silence gives the DCT of a constant log-floor vector") {
  const auto m = mfcc_of(std::vector<float>(4000, 0.0f));
  const double c0 = std::sqrt(26.0) * std::log(1e-10);
  for (std::size_t t = 0; t < m.cols; ++t) {
    CHECK(m(0, t) == doctest::Approx(c0).epsilon(1e-12));
    for (std::size_t c = 1; c < 13; ++c) CHECK(std::abs(m(c, t)) < 1e-9);
  }
}

TEST_CASE("doubling amplitude shifts c0 by sqrt(M) log 4 and leaves the rest") {
  std::mt19937_64 rng(8);
  const auto x = uniform(rng, 3000, -0.4, 0.4);
  std::vector<float> x2(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x2[i] = 2.0f * x[i];
  const auto a = mfcc_of(x), b = mfcc_of(x2);
  for (std::size_t t = 0; t < a.cols; ++t) {
    CHECK(b(0, t) - a(0, t) == doctest::Approx(std::sqrt(26.0) * std::log(4.0)).epsilon(1e-9));
    for (std::size_t c = 1; c < 13; ++c) CHECK(std::abs(b(c, t) - a(c, t)) < 1e-9);
  }
}

TEST_CASE("filterbank and DCT basis shapes and normalization") {
  const MfccConfig cfg;
  const Matrix fb = mel_filterbank(cfg);
  CHECK(fb.rows == 26);
  CHECK(fb.cols == 257);
  for (std::size_t m = 0; m < fb.rows; ++m) {
    double peak = 0;
    for (double w : fb.row(m)) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      peak = std::max(peak, w);
    }
    CHECK(peak > 0.0);
  }
  const Matrix d = dct_basis(26, 26);
  for (std::size_t i = 0; i < 26; ++i)
    for (std::size_t j = 0; j < 26; ++j) {
      double dotp = 0;
      for (std::size_t k = 0; k < 26; ++k) dotp += d(i, k) * d(j, k);
      CHECK(dotp == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    }
}

TEST_CASE("delta of constant, ramp and single-frame inputs") {
  Matrix c(2, 10);
  for (auto& v : c.data) v = 3.5;
  for (double v : delta(c, 2).data) CHECK(v == 0.0);

  Matrix ramp(1, 12);
  for (std::size_t t = 0; t < 12; ++t) ramp(0, t) = 0.7 * double(t) - 2.0;
  const Matrix d = delta(ramp, 2);
  for (std::size_t t = 2; t + 2 < 12; ++t) CHECK(d(0, t) == doctest::Approx(0.7).epsilon(1e-12));
  // At the edges replication flattens the slope: d_0 = (1*0.7 + 2*1.4) / 10.
  CHECK(d(0, 0) == doctest::Approx(0.35));

  Matrix one(3, 1);
  one(0, 0) = 1; one(1, 0) = -4; one(2, 0) = 9;
  for (double v : delta(one, 2).data) CHECK(v == 0.0);
}

TEST_CASE("delta is linear (property)") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t rows = uniform_size(rng, 1, 5), cols = uniform_size(rng, 1, 40);
    const std::size_t n = uniform_size(rng, 1, 4);
    Matrix a(rows, cols), b(rows, cols), mix(rows, cols);
    const auto va = uniform<double>(rng, rows * cols, -5, 5), vb = uniform<double>(rng, rows * cols, -5, 5);
    const double alpha = std::uniform_real_distribution<>(-3, 3)(rng);
    const double beta = std::uniform_real_distribution<>(-3, 3)(rng);
    a.data = va;
    b.data = vb;
    for (std::size_t i = 0; i < va.size(); ++i) mix.data[i] = alpha * va[i] + beta * vb[i];
    const Matrix da = delta(a, n), db = delta(b, n), dm = delta(mix, n);
    for (std::size_t i = 0; i < va.size(); ++i) CHECK(dm.data[i] == doctest::Approx(alpha * da.data[i] + beta * db.data[i]).epsilon(1e-10).scale(10));
  }
}

TEST_CASE("zero-crossing rate") {
  Matrix pos(1, 400);
  for (auto& v : pos.data) v = 0.3;
  CHECK(zcr(pos)[0] == 0.0);

  Matrix alt(1, 400);
  for (std::size_t i = 0; i < 400; ++i) alt(0, i) = i % 2 ? -1.0 : 1.0;
  CHECK(zcr(alt)[0] == 1.0);

  Matrix zeros(1, 400);
  CHECK(zcr(zeros)[0] == 0.0);

  const auto frames = frame_signal(sine(440.0, 16000.0, 16000, 0.8, 0.3), FrameConfig{});
  for (double z : zcr(frames)) CHECK(std::abs(z - 22.0 / 399.0) <= 1.0 / 399.0);
}

TEST_CASE("RMS energy") {
  Matrix zeros(2, 400);
  for (double r : rms(zeros)) CHECK(r == 0.0);
  Matrix half(1, 400);
  for (auto& v : half.data) v = 0.5;
  CHECK(rms(half)[0] == doctest::Approx(0.5));
  // 440 Hz at 16 kHz: exactly 11 cycles per 400-sample frame.
  const auto frames = frame_signal(sine(440.0, 16000.0, 4000, 1.0), FrameConfig{});
  for (double r : rms(frames)) CHECK(std::abs(r - 1.0 / std::sqrt(2.0)) <= 1e-3);
}

TEST_CASE("assembled matrix shapes: pad, truncate and silence") {
  const FeatureConfig cfg;
  REQUIRE(cfg.rows() == 41);
  std::mt19937_64 rng(4);
  const auto three = assemble_features(uniform(rng, 48000, -0.5, 0.5), cfg);
  CHECK(three.rows == 41);
  CHECK(three.cols == 300);
  CHECK(three.n_valid_frames == 298);
  for (std::size_t r = 0; r < 41; ++r) {
    CHECK(three(r, 298) == 0.0f);
    CHECK(three(r, 299) == 0.0f);
  }
  const auto six = assemble_features(uniform(rng, 96000, -0.5, 0.5), cfg);
  CHECK(six.n_valid_frames == 300);
  CHECK(six.values.size() == 41 * 300);

  const auto silent = assemble_features(std::vector<float>(16000, 0.0f), cfg);
  for (std::size_t t = 0; t < 300; ++t) {
    CHECK(silent(39, t) == 0.0f);
    CHECK(silent(40, t) == 0.0f);
  }
}

TEST_CASE("shape and range invariants over random clip lengths (property)") {
  const FeatureConfig cfg;
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t n = uniform_size(rng, 1, 70000);
    const auto m = assemble_features(uniform(rng, n, -1, 1), cfg);
    CAPTURE(n);
    CHECK(m.rows == 41);
    CHECK(m.cols == 300);
    const std::size_t expected = n < 400 ? 1 : std::min<std::size_t>(300, (n - 400) / 160 + 1);
    CHECK(m.n_valid_frames == expected);
    for (std::size_t t = 0; t < 300; ++t) {
      CHECK(m(39, t) >= 0.0f);
      CHECK(m(39, t) <= 1.0f);
      CHECK(m(40, t) >= 0.0f);
      if (t >= m.n_valid_frames)
        for (std::size_t r = 0; r < 41; ++r) CHECK(m(r, t) == 0.0f);
    }
  }
}

TEST_CASE("a one-hop time shift shifts feature columns by one") {
  std::mt19937_64 rng(31);
  const auto x = uniform(rng, 8000, -0.5, 0.5);
  const std::vector<float> y(x.begin() + 160, x.end());
  const FeatureConfig cfg;
  const Matrix fx = frame_signal(x, cfg.frame), fy = frame_signal(y, cfg.frame);
  const Matrix mx = mfcc(fx, cfg.mfcc), my = mfcc(fy, cfg.mfcc);
  const Matrix dx = delta(mx, 2), dy = delta(my, 2);
  const auto zx = zcr(fx), zy = zcr(fy);
  const auto rx = rms(fx), ry = rms(fy);
  REQUIRE(my.cols + 1 == mx.cols);
  for (std::size_t t = 0; t < my.cols; ++t) {
    CHECK(std::abs(zy[t] - zx[t + 1]) <= 1e-9);
    CHECK(std::abs(ry[t] - rx[t + 1]) <= 1e-9);
    for (std::size_t c = 0; c < 13; ++c) CHECK(std::abs(my(c, t) - mx(c, t + 1)) <= 1e-9);
  }
  for (std::size_t t = 2; t + 2 < dy.cols; ++t)
    for (std::size_t c = 0; c < 13; ++c) CHECK(std::abs(dy(c, t) - dx(c, t + 1)) <= 1e-9);
}

TEST_CASE("normalization profile standardizes valid columns only") {
  std::mt19937_64 rng(9);
  const FeatureConfig cfg;
  std::vector<FeatureMatrix> ms;
  for (std::size_t n : {20000u, 36000u, 52000u}) ms.push_back(assemble_features(uniform(rng, n, -0.5, 0.5), cfg));
  std::vector<const FeatureMatrix*> ptrs;
  for (const auto& m : ms) ptrs.push_back(&m);
  const NormalizationProfile p = compute_profile(ptrs);
  REQUIRE(p.mean.size() == 41);
  for (auto& m : ms) apply_profile(m, p);
  for (std::size_t r = 0; r < 41; ++r) {
    double s = 0, s2 = 0, n = 0;
    for (const auto& m : ms)
      for (std::size_t t = 0; t < m.n_valid_frames; ++t) {
        s += m(r, t);
        s2 += double(m(r, t)) * m(r, t);
        ++n;
      }
    CHECK(std::abs(s / n) < 1e-4);
    CHECK(std::sqrt(s2 / n - (s / n) * (s / n)) == doctest::Approx(1.0).epsilon(1e-3));
  }
  for (const auto& m : ms)
    for (std::size_t t = m.n_valid_frames; t < 300; ++t)
      for (std::size_t r = 0; r < 41; ++r) CHECK(m(r, t) == 0.0f);
}

TEST_CASE("constant rows get unit deviation") {
  FeatureMatrix m{2, 3, 3, {1, 1, 1, 0, 1, 2}};
  const FeatureMatrix* one[] = {&m};
  const auto p = compute_profile(one);
  CHECK(p.stddev[0] == 1.0);
  CHECK(p.stddev[1] == doctest::Approx(std::sqrt(2.0 / 3.0)));
}

TEST_CASE("invalid feature configurations are rejected") {
  auto rejects = [](auto mutate) {
    FeatureConfig c;
    mutate(c);
    try {
      c.validate();
    } catch (const Error& e) {
      return e.kind() == ErrorKind::config;
    }
    return false;
  };
  CHECK_NOTHROW(FeatureConfig{}.validate());
  CHECK(rejects([](FeatureConfig& c) { c.frame.hop = 401; }));
  CHECK(rejects([](FeatureConfig& c) { c.frame.hop = 0; }));
  CHECK(rejects([](FeatureConfig& c) { c.mfcc.n_fft = 500; }));
  CHECK(rejects([](FeatureConfig& c) { c.mfcc.n_fft = 256; }));
  CHECK(rejects([](FeatureConfig& c) { c.mfcc.n_coeffs = 27; }));
  CHECK(rejects([](FeatureConfig& c) { c.mfcc.fmax_hz = 9000; }));
  CHECK(rejects([](FeatureConfig& c) { c.mfcc.fmin_hz = 5000; c.mfcc.fmax_hz = 4000; }));
  CHECK(rejects([](FeatureConfig& c) { c.mfcc.log_floor = 0; }));
  CHECK(rejects([](FeatureConfig& c) { c.t_fixed = 0; }));
}

TEST_CASE("config digest separates every field") {
  const FeatureConfig base;
  FeatureConfig a = base, b = base, c = base;
  a.frame.hop = 161;
  b.mfcc.log_floor = 1e-9;
  c.t_fixed = 299;
  CHECK(base.digest() == FeatureConfig{}.digest());
  CHECK(a.digest() != base.digest());
  CHECK(b.digest() != base.digest());
  CHECK(c.digest() != base.digest());
}

TEST_CASE("feature CSV has a header and one named line per row") {
  const FeatureConfig cfg;
  const auto m = assemble_features(sine(440.0, 16000.0, 16000, 0.5), cfg);
  std::ostringstream out;
  write_feature_csv(out, m, cfg);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("feature,t0,t1,", 0) == 0);
  std::vector<std::string> names;
  while (std::getline(in, line)) names.push_back(line.substr(0, line.find(',')));
  REQUIRE(names.size() == 41);
  CHECK(names == feature_row_names(cfg));
  CHECK(names[0] == "mfcc_0");
  CHECK(names[13] == "delta_0");
  CHECK(names[26] == "delta2_0");
  CHECK(names[39] == "zcr");
  CHECK(names[40] == "rms");
}
