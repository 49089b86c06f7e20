// Acceptance gate. Prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero if any criterion fails.
//
//   affectline_acceptance                  all desk-scale criteria
//   affectline_acceptance --full-corpus    RAVDESS reproduction; needs
//                                          AFFECTLINE_RAVDESS_ROOT, exits 77
//                                          (skip) without it

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "affectline/checkpoint.hpp"
#include "affectline/error.hpp"
#include "affectline/features.hpp"
#include "affectline/gradcheck.hpp"
#include "affectline/nn.hpp"
#include "affectline/parallel.hpp"
#include "affectline/session.hpp"
#include "affectline/synthetic.hpp"
#include "affectline/train.hpp"
#include "oracle_mfcc.hpp"
#include "test_util.hpp"

using namespace affectline;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kGradTolerance = 1e-4;
constexpr std::uint64_t kGradSeeds = 10;
constexpr double kGradBudgetS = 60.0;

constexpr std::size_t kOverfitPerClass = 10;
constexpr std::size_t kOverfitMaxEpochs = 500;
constexpr double kOverfitTarget = 0.95;

constexpr double kMfccRelTolerance = 1e-6;
constexpr std::size_t kMfccSignals = 20;
constexpr double kZcrExpected = 22.0 / 399.0;
constexpr double kZcrTolerance = 1.0 / 399.0;
constexpr double kRmsTolerance = 1e-3;

constexpr std::size_t kSessionSegments = 200;
constexpr double kProportionSumTolerance = 1e-9;

constexpr std::size_t kRoundTripInputs = 5;

constexpr std::size_t kFullCorpusEpochs = 300;
constexpr double kFullCorpusMeanTarget = 0.55;
constexpr std::uint64_t kFullCorpusSeeds[] = {42, 43, 44};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// --- criteria ------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_layer;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= kGradSeeds; ++seed) {
    for (const auto& r : nn::run_gradient_checks(seed)) {
      checked += r.n_checked;
      if (!(r.max_rel_error <= worst)) {
        worst = r.max_rel_error;
        worst_layer = r.name;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  const bool pass = std::isfinite(worst) && worst < kGradTolerance && elapsed < kGradBudgetS;
  return {pass, fmt("seeds=%llu entries=%zu max_rel_error=%.3e (%s) tol=%.0e runtime=%.1fs budget=%.0fs",
                    static_cast<unsigned long long>(kGradSeeds), checked, worst, worst_layer.c_str(),
                    kGradTolerance, elapsed, kGradBudgetS)};
}

// 10 clips per class from five synthetic speakers.
std::vector<Example> overfit_subset(const FeatureConfig& features) {
  std::vector<Example> out;
  for (EmotionLabel e : kAllEmotions) {
    for (std::size_t k = 0; k < kOverfitPerClass; ++k) {
      const SyntheticVoice voice{1 + k / 2, 3.0};
      const auto samples = synthesize_emotion_clip(e, voice, 1000 + k);
      out.push_back({assemble_features(samples, features), e,
                     std::string(name_of(e)) + "_" + std::to_string(k)});
    }
  }
  return out;
}

Outcome overfit_sanity() {
  const auto t0 = Clock::now();
  const FeatureConfig features;
  const nn::ModelSpec spec;
  const auto corpus = overfit_subset(features);

  Split all;
  for (std::size_t i = 0; i < corpus.size(); ++i) all.train.push_back(i);
  TrainConfig cfg;
  cfg.epochs = kOverfitMaxEpochs;
  cfg.stop_at_train_accuracy = kOverfitTarget;
  cfg.jobs = default_jobs();

  // The running in-batch accuracy triggers the stop; the verdict uses a
  // fresh pass over all 60 clips with the final weights.
  std::size_t epochs_run = 0;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) { epochs_run = m.epoch; };
  const auto result = fit(corpus, all, spec, features, cfg, hooks);
  const double accuracy = evaluate(result.checkpoint, corpus, features, cfg.jobs).accuracy;
  const double elapsed = seconds_since(t0);
  return {accuracy >= kOverfitTarget && epochs_run <= kOverfitMaxEpochs,
          fmt("clips=%zu epochs=%zu train_accuracy=%.4f target=%.2f max_epochs=%zu runtime=%.0fs",
              corpus.size(), epochs_run, accuracy, kOverfitTarget, kOverfitMaxEpochs, elapsed)};
}

Outcome dsp_fidelity() {
  using testing::oracle_mfcc;
  const FeatureConfig cfg;
  std::mt19937_64 rng(20240611);
  double worst_mfcc = 0.0;
  for (std::size_t trial = 0; trial < kMfccSignals; ++trial) {
    const std::size_t n = testing::uniform_size(rng, 100, 1400);
    std::vector<float> x = testing::uniform(rng, n, -0.3, 0.3);
    const double f0 = 80.0 + 3000.0 * std::uniform_real_distribution<>(0, 1)(rng);
    const auto tone = testing::sine(f0, 16000.0, n, 0.5);
    for (std::size_t i = 0; i < n; ++i) x[i] += tone[i];
    const Matrix got = mfcc(frame_signal(x, cfg.frame), cfg.mfcc);
    const auto want = oracle_mfcc(std::vector<double>(x.begin(), x.end()), 400, 160, 512, 26, 13,
                                  16000.0, 1e-10);
    if (got.cols != want[0].size() || got.rows != want.size()) return {false, "MFCC shape mismatch"};
    for (std::size_t c = 0; c < got.rows; ++c)
      for (std::size_t t = 0; t < got.cols; ++t)
        worst_mfcc = std::max(worst_mfcc, std::abs(got(c, t) - want[c][t]) /
                                              std::max(1.0, std::abs(want[c][t])));
  }

  const auto sine_frames = frame_signal(testing::sine(440.0, 16000.0, 16000, 0.8, 0.3), cfg.frame);
  double worst_zcr = 0.0;
  for (double z : zcr(sine_frames)) worst_zcr = std::max(worst_zcr, std::abs(z - kZcrExpected));

  const auto unit_frames = frame_signal(testing::sine(440.0, 16000.0, 4000, 1.0), cfg.frame);
  double worst_rms = 0.0;
  for (double r : rms(unit_frames)) worst_rms = std::max(worst_rms, std::abs(r - 1.0 / std::sqrt(2.0)));

  // Dyadic slopes and offsets keep every ramp value exact in binary.
  bool ramp_exact = true;
  for (std::size_t n = 1; n <= 4; ++n) {
    for (int k = -8; k <= 8; ++k) {
      const double slope = k / 8.0;
      Matrix ramp(1, 40);
      for (std::size_t t = 0; t < 40; ++t) ramp(0, t) = slope * double(t) - 3.25;
      const Matrix d = delta(ramp, n);
      for (std::size_t t = n; t + n < 40; ++t) ramp_exact = ramp_exact && d(0, t) == slope;
    }
  }

  const bool pass = worst_mfcc <= kMfccRelTolerance && worst_zcr <= kZcrTolerance &&
                    worst_rms <= kRmsTolerance && ramp_exact;
  return {pass, fmt("mfcc_max_rel=%.2e (tol %.0e, %zu signals) zcr_max_dev=%.2e (tol %.2e) "
                    "rms_max_dev=%.2e (tol %.0e) ramp_delta_exact=%s",
                    worst_mfcc, kMfccRelTolerance, kMfccSignals, worst_zcr, kZcrTolerance, worst_rms,
                    kRmsTolerance, ramp_exact ? "yes" : "no")};
}

Outcome aggregation_correctness() {
  std::mt19937_64 rng(2024);
  std::vector<LabeledAudio> clips;
  std::array<std::size_t, kNumEmotions> expected{};
  for (std::size_t i = 0; i < kSessionSegments; ++i) {
    const EmotionLabel e = kAllEmotions[rng() % kNumEmotions];
    ++expected[index_of(e)];
    clips.push_back({testing::sine(120.0 + double(i), 16000.0, 1600, 0.3), e});
  }
  SynthOptions opts;
  opts.session_id = "A01";
  opts.seed = 77;
  opts.distractors = 25;
  const auto dir = testing::scratch_dir("acceptance_session");
  const auto s = synthesize_session(clips, dir, opts);
  const auto truth = read_truth_csv(s.truth_path);
  const SegmentClassifier oracle = [&truth](const SegmentRecord& r, const AudioClip&) {
    return truth.at(r.segment_id);
  };

  const Manifest manifest = load_manifest(s.manifest_path);
  const SessionReport report = classify_session(manifest.records, oracle);
  bool exact = report.counts == expected && report.n_segments_fan == kSessionSegments;
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    exact = exact && report.proportions[c] == double(expected[c]) / double(kSessionSegments);
    sum += report.proportions[c];
  }

  bool invariant = true;
  for (int i = 0; i < 10; ++i) {
    auto shuffled = manifest.records;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    ClassifyOptions co;
    co.jobs = 1 + i % 4;
    invariant = invariant && classify_session(shuffled, oracle, co) == report;
  }
  fs::remove_all(dir);

  const bool pass = exact && std::abs(sum - 1.0) <= kProportionSumTolerance && invariant;
  return {pass, fmt("segments=%zu distractors=%zu distribution_exact=%s proportion_sum_dev=%.1e "
                    "(tol %.0e) permutation_invariant=%s",
                    kSessionSegments, opts.distractors, exact ? "yes" : "no", std::abs(sum - 1.0),
                    kProportionSumTolerance, invariant ? "yes" : "no")};
}

Outcome checkpoint_round_trip() {
  const nn::ModelSpec spec;
  nn::Model<float> model(spec);
  model.init_he_uniform(11);
  std::mt19937_64 rng(12);
  NormalizationProfile profile;
  profile.mean = testing::uniform<double>(rng, spec.input_channels, -50, 50);
  profile.stddev = testing::uniform<double>(rng, spec.input_channels, 0.5, 20);
  const Checkpoint ckpt = make_checkpoint(model, FeatureConfig{}, profile, {{"note", "acceptance"}});

  const auto dir = testing::scratch_dir("acceptance_ckpt");
  save_checkpoint(dir / "model.afl", ckpt);
  const Checkpoint back = load_checkpoint(dir / "model.afl");
  fs::remove_all(dir);

  const bool params_equal = back.params.size() == ckpt.params.size() &&
                            std::memcmp(back.params.data(), ckpt.params.data(),
                                        ckpt.params.size() * sizeof(float)) == 0;
  const bool rest_equal = back.model_spec == ckpt.model_spec && back.features == ckpt.features &&
                          back.normalization == ckpt.normalization && back.metadata == ckpt.metadata;
  const auto a = ckpt.model(), b = back.model();
  std::size_t identical = 0;
  for (std::size_t i = 0; i < kRoundTripInputs; ++i) {
    const nn::Tensor<float> x({spec.input_channels, spec.input_len},
                              testing::uniform(rng, spec.input_channels * spec.input_len, -3, 3));
    const auto la = a.forward(x), lb = b.forward(x);
    if (la.size() == lb.size() && std::memcmp(la.data(), lb.data(), la.size() * sizeof(float)) == 0)
      ++identical;
  }
  return {params_equal && rest_equal && identical == kRoundTripInputs,
          fmt("params=%zu bit_identical=%s header_equal=%s logits_bit_identical=%zu/%zu",
              ckpt.params.size(), params_equal ? "yes" : "no", rest_equal ? "yes" : "no", identical,
              kRoundTripInputs)};
}

Outcome determinism() {
  const FeatureConfig features;
  const nn::ModelSpec spec;
  const auto corpus = overfit_subset(features);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.jobs = default_jobs();
  const auto dir = testing::scratch_dir("acceptance_determinism");
  std::string csv[2];
  std::vector<std::uint8_t> model[2];
  for (int run = 0; run < 2; ++run) {
    const auto r = train(corpus, spec, features, cfg);
    const fs::path p = dir / ("metrics_" + std::to_string(run) + ".csv");
    write_metrics_csv(p, r.metrics);
    csv[run] = slurp(p);
    model[run] = serialize_checkpoint(r.checkpoint);
  }
  fs::remove_all(dir);
  const bool same_csv = csv[0] == csv[1] && !csv[0].empty();
  const bool same_model = model[0] == model[1];
  return {same_csv && same_model,
          fmt("epochs=%zu seed=%llu metrics_csv_bytes=%zu identical=%s checkpoint_identical=%s",
              cfg.epochs, static_cast<unsigned long long>(cfg.seed), csv[0].size(),
              same_csv ? "yes" : "no", same_model ? "yes" : "no")};
}

Outcome full_corpus_reproduction(const fs::path& root) {
  const auto t0 = Clock::now();
  CorpusFilter filter;
  filter.sex = Sex::female;
  const FeatureConfig features;
  ExtractOptions options;
  options.jobs = default_jobs();
  options.cache_dir = FeatureCache::default_dir();
  const auto corpus = extract_corpus(root, filter, features, options);

  double sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : kFullCorpusSeeds) {
    TrainConfig cfg;
    cfg.epochs = kFullCorpusEpochs;
    cfg.seed = seed;
    cfg.jobs = default_jobs();
    const auto r = train(corpus.examples, nn::ModelSpec{}, features, cfg);
    sum += r.metrics.accuracy;
    per_seed += fmt(" seed%llu=%.4f", static_cast<unsigned long long>(seed), r.metrics.accuracy);
  }
  const double mean = sum / double(std::size(kFullCorpusSeeds));
  return {mean >= kFullCorpusMeanTarget,
          fmt("female_6class_clips=%zu load_failures=%zu mean_test_accuracy=%.4f target=%.2f%s "
              "runtime=%.0fs",
              corpus.examples.size(), corpus.failures.size(), mean, kFullCorpusMeanTarget,
              per_seed.c_str(), seconds_since(t0))};
}

bool report(const char* name, const std::function<Outcome()>& criterion) {
  Outcome o;
  try {
    o = criterion();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1 && std::strcmp(argv[1], "--full-corpus") == 0) {
    const char* root = std::getenv("AFFECTLINE_RAVDESS_ROOT");
    if (root == nullptr || *root == '\0') {
      std::printf("SKIP full_corpus_reproduction: AFFECTLINE_RAVDESS_ROOT is not set\n");
      return 77;
    }
    return report("full_corpus_reproduction", [&] { return full_corpus_reproduction(root); }) ? 0 : 1;
  }

  bool ok = true;
  ok &= report("gradient_correctness", gradient_correctness);
  ok &= report("dsp_fidelity", dsp_fidelity);
  ok &= report("aggregation_correctness", aggregation_correctness);
  ok &= report("checkpoint_round_trip", checkpoint_round_trip);
  ok &= report("determinism", determinism);
  ok &= report("overfit_sanity", overfit_sanity);
  return ok ? 0 : 1;
}
