// affectline command-line tool.
//
// Exit codes: 0 success, 1 internal error, 2 configuration error, 3 data
// error, 4 training divergence, 5 gradient check failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "affectline/audio.hpp"
#include "affectline/charts.hpp"
#include "affectline/checkpoint.hpp"
#include "affectline/error.hpp"
#include "affectline/features.hpp"
#include "affectline/gradcheck.hpp"
#include "affectline/ravdess.hpp"
#include "affectline/run_config.hpp"
#include "affectline/session.hpp"
#include "affectline/simd.hpp"
#include "affectline/synthetic.hpp"
#include "affectline/train.hpp"

namespace fs = std::filesystem;
using namespace affectline;

namespace {

enum Exit : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_config = 2,
  exit_data = 3,
  exit_divergence = 4,
  exit_check_failed = 5,
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::config_mismatch:
    case ErrorKind::shape_mismatch:
      return exit_config;
    case ErrorKind::divergence:
      return exit_divergence;
    default:
      return exit_data;
  }
}

// Flag values for RunConfig keys, applied over the --config file.
struct ConfigFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void add(CLI::App* app, std::initializer_list<std::string_view> only = {}) {
    app->add_option("--config", config_file, "key=value config file (flags override it)");
    for (const auto& k : RunConfig::keys()) {
      if (only.size() != 0 && std::find(only.begin(), only.end(), k.key) == only.end()) continue;
      const std::string key(k.key);
      std::string help(k.help);
      if (!k.default_value.empty()) help += " [" + std::string(k.default_value) + "]";
      options[key] = app->add_option(flag_name(key), values[key], help);
    }
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) cfg.merge_file(config_file);
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) cfg.set(key, values.at(key));
    }
    return cfg;
  }
};

const std::initializer_list<std::string_view> kFeatureKeys = {
    "frame_len", "hop", "n_fft", "n_mels", "n_coeffs", "fmin_hz",
    "fmax_hz", "log_floor", "delta_window", "t_fixed", "resample"};

bool any_feature_key_explicit(const RunConfig& cfg) {
  for (auto k : kFeatureKeys) {
    if (k != "resample" && cfg.is_explicit(std::string(k))) return true;
  }
  return false;
}

std::string require(const RunConfig& cfg, const std::string& key) {
  const std::string& v = cfg.get(key);
  if (v.empty()) throw Error(ErrorKind::config, "missing required setting " + flag_name(key));
  return v;
}

fs::path prepare_out_dir(const RunConfig& cfg) {
  const fs::path out = require(cfg, "out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create output directory " + out.string());
  cfg.write(out / "effective_config.txt");
  return out;
}

ExtractOptions extract_options(const RunConfig& cfg) {
  ExtractOptions opts;
  opts.resample = cfg.resample_method();
  opts.jobs = cfg.jobs();
  if (cfg.flag("cache")) opts.cache_dir = FeatureCache::default_dir();
  return opts;
}

void report_failures(const std::vector<LoadFailure>& failures) {
  for (const auto& f : failures) std::cerr << "skipped " << f.path << ": " << f.message << "\n";
}

void write_failures_csv(const fs::path& path, const std::vector<LoadFailure>& failures) {
  std::string text = "path,message\n";
  for (const auto& f : failures) text += f.path + ",\"" + f.message + "\"\n";
  write_text_file(path, text);
}

int cmd_train(const ConfigFlags& flags) {
  const RunConfig cfg = flags.resolve();
  const FeatureConfig features = cfg.feature_config();
  const nn::ModelSpec spec = cfg.model_spec();
  const TrainConfig train_cfg = cfg.train_config();
  const fs::path corpus = require(cfg, "corpus");
  const fs::path out = prepare_out_dir(cfg);

  const CorpusFeatures data =
      extract_corpus(corpus, cfg.corpus_filter(), features, extract_options(cfg));
  report_failures(data.failures);
  write_failures_csv(out / "load_failures.csv", data.failures);
  std::cerr << "loaded " << data.examples.size() << " clips (" << data.cache_hits
            << " from cache, " << data.failures.size() << " failed)\n";

  TrainHooks hooks;
  hooks.on_epoch = [](const EpochMetrics& m) {
    std::fprintf(stderr, "epoch %zu  loss %.4f  train %.3f  test %.3f\n", m.epoch,
                 m.train_loss, m.train_accuracy, m.test_accuracy);
  };
  TrainResult result = train(data.examples, spec, features, train_cfg, hooks);

  save_checkpoint(out / "model.afl", result.checkpoint);
  write_metrics_csv(out / "metrics.csv", result.metrics);
  write_confusion_csv(out / "confusion.csv", result.metrics.confusion);
  write_text_file(out / "accuracy.svg", accuracy_curve_svg(result.metrics));
  write_text_file(out / "confusion.svg", confusion_heatmap_svg(result.metrics.confusion));
  std::printf("test accuracy %.4f over %zu clips; artifacts in %s\n", result.metrics.accuracy,
              result.split.test.size(), out.string().c_str());
  return exit_ok;
}

int cmd_eval(const ConfigFlags& flags) {
  const RunConfig cfg = flags.resolve();
  const Checkpoint ckpt = load_checkpoint(require(cfg, "checkpoint"));
  const FeatureConfig features =
      any_feature_key_explicit(cfg) ? cfg.feature_config() : ckpt.features;
  const fs::path corpus = require(cfg, "corpus");
  const fs::path out = prepare_out_dir(cfg);

  const CorpusFeatures data =
      extract_corpus(corpus, cfg.corpus_filter(), features, extract_options(cfg));
  report_failures(data.failures);
  const Metrics m = evaluate(ckpt, data.examples, features, cfg.jobs());

  char line[64];
  std::snprintf(line, sizeof line, "%zu,%.6f\n", m.confusion.total(), m.accuracy);
  write_text_file(out / "eval_metrics.csv", std::string("n_records,accuracy\n") + line);
  write_confusion_csv(out / "confusion.csv", m.confusion);
  write_text_file(out / "confusion.svg", confusion_heatmap_svg(m.confusion));
  write_failures_csv(out / "load_failures.csv", data.failures);
  std::printf("accuracy %.4f over %zu clips\n", m.accuracy, m.confusion.total());
  return exit_ok;
}

int cmd_classify(const ConfigFlags& flags) {
  const RunConfig cfg = flags.resolve();
  const Checkpoint ckpt = load_checkpoint(require(cfg, "checkpoint"));
  const Manifest manifest = load_manifest(require(cfg, "manifest"));
  const fs::path out = prepare_out_dir(cfg);
  if (manifest.unknown_labels > 0) {
    std::cerr << manifest.unknown_labels << " rows had unknown source labels (treated as OTHER)\n";
  }

  ClassifyOptions opts;
  opts.resample = cfg.resample_method();
  opts.jobs = cfg.jobs();
  std::vector<std::string> empty;
  const auto reports = classify_manifest(
      manifest.records, make_checkpoint_classifier(ckpt, cfg.flag("chunk_vote")), opts, &empty);
  for (const auto& id : empty) std::cerr << "session " << id << ": no classifiable FAN segments\n";
  if (reports.empty()) throw Error(ErrorKind::empty_session, "no session had classifiable segments");

  std::string summary = "session_id,n_segments_total,n_segments_fan,n_classified,n_failed\n";
  for (const auto& r : reports) {
    render_report(r, out);
    for (const auto& f : r.failures) {
      std::cerr << "session " << r.session_id << " segment " << f.segment_id << ": " << f.message
                << "\n";
    }
    summary += r.session_id + "," + std::to_string(r.n_segments_total) + "," +
               std::to_string(r.n_segments_fan) + "," + std::to_string(r.n_classified()) + "," +
               std::to_string(r.failures.size()) + "\n";
  }
  write_text_file(out / "sessions.csv", summary);
  std::printf("%zu session report(s) written to %s\n", reports.size(), out.string().c_str());
  return exit_ok;
}

int cmd_features(const ConfigFlags& flags, const std::string& wav, const std::string& out) {
  const RunConfig cfg = flags.resolve();
  const FeatureConfig features = cfg.feature_config();
  const AudioClip clip = read_wav(wav, cfg.resample_method());
  const FeatureMatrix m = assemble_features(clip, features, nullptr);
  if (out.empty()) {
    write_feature_csv(std::cout, m, features);
  } else {
    std::ofstream f(out);
    if (!f) throw Error(ErrorKind::io, "cannot write " + out);
    write_feature_csv(f, m, features);
    if (!f) throw Error(ErrorKind::io, "cannot write " + out);
  }
  return exit_ok;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t n_seeds) {
  std::map<std::string, nn::GradCheckResult> worst;
  std::vector<std::string> order;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    for (const auto& r : nn::run_gradient_checks(seed + s)) {
      auto [it, inserted] = worst.try_emplace(r.name, r);
      if (inserted) {
        order.push_back(r.name);
        continue;
      }
      it->second.max_rel_error = std::max(it->second.max_rel_error, r.max_rel_error);
      it->second.n_checked += r.n_checked;
    }
  }
  bool ok = true;
  std::printf("%-16s %14s %10s  %s\n", "layer", "max_rel_error", "checked", "status");
  for (const auto& name : order) {
    const auto& r = worst.at(name);
    const bool pass = r.max_rel_error < nn::kGradCheckTolerance;
    ok = ok && pass;
    std::printf("%-16s %14.3e %10zu  %s\n", name.c_str(), r.max_rel_error, r.n_checked,
                pass ? "PASS" : "FAIL");
  }
  std::printf("tolerance %.0e, seeds %llu..%llu\n", nn::kGradCheckTolerance,
              static_cast<unsigned long long>(seed),
              static_cast<unsigned long long>(seed + n_seeds - 1));
  return ok ? exit_ok : exit_check_failed;
}

struct SynthArgs {
  std::size_t sessions = 1;
  std::size_t segments = 20;
  std::size_t distractors = 0;
  double snr_db = 0.0;
  bool with_noise = false;
  fs::path corpus_out;
  std::size_t actors = 4;
  std::size_t takes = 4;
  bool include_song = false;
};

int cmd_synth(const ConfigFlags& flags, const SynthArgs& a) {
  const RunConfig cfg = flags.resolve();
  const std::uint64_t seed = cfg.size_value("seed");

  if (!a.corpus_out.empty()) {
    SyntheticCorpusOptions opts;
    opts.actors = a.actors;
    opts.takes_per_emotion = a.takes;
    opts.include_song = a.include_song;
    opts.seed = seed;
    const auto files = write_synthetic_corpus(a.corpus_out, opts);
    std::printf("wrote %zu clips under %s\n", files.size(), a.corpus_out.string().c_str());
    return exit_ok;
  }

  const fs::path out = prepare_out_dir(cfg);
  std::vector<LabeledAudio> pool;
  const std::string corpus = cfg.get("corpus");
  if (!corpus.empty()) {
    LoadOptions lo;
    lo.resample = cfg.resample_method();
    lo.jobs = cfg.jobs();
    const CorpusLoad load = load_corpus(corpus, cfg.corpus_filter(), lo);
    report_failures(load.failures);
    for (const auto& rec : load.records) pool.push_back({rec.clip.samples, rec.label});
  } else {
    std::mt19937_64 rng(seed);
    const std::size_t n = a.sessions * a.segments;
    for (std::size_t i = 0; i < n; ++i) {
      const EmotionLabel e = kAllEmotions[i % kNumEmotions];
      SyntheticVoice voice{1 + rng() % 8, 2.0 + static_cast<double>(rng() % 1000) / 1000.0};
      pool.push_back({synthesize_emotion_clip(e, voice, rng()), e});
    }
  }
  if (pool.empty()) throw Error(ErrorKind::empty_result, "no clips available for synthesis");

  std::mt19937_64 pick(seed ^ 0x5bd1e995u);
  std::vector<SegmentRecord> all;
  for (std::size_t s = 0; s < a.sessions; ++s) {
    std::vector<LabeledAudio> chosen;
    for (std::size_t i = 0; i < a.segments; ++i) chosen.push_back(pool[pick() % pool.size()]);
    SynthOptions so;
    char id[16];
    std::snprintf(id, sizeof id, "S%02zu", s + 1);
    so.session_id = id;
    so.seed = seed + s;
    so.distractors = a.distractors;
    if (a.with_noise) so.snr_db = a.snr_db;
    const auto session = synthesize_session(chosen, out, so);
    all.insert(all.end(), session.records.begin(), session.records.end());
  }
  write_manifest(out / "manifest.csv", all);
  std::printf("wrote %zu session(s), %zu segments, manifest %s\n", a.sessions, all.size(),
              (out / "manifest.csv").string().c_str());
  return exit_ok;
}

int cmd_audit(const std::string& manifest_path, std::size_t n, std::uint64_t seed,
              const std::string& out) {
  const Manifest manifest = load_manifest(manifest_path);
  const auto sample = sample_for_audit(manifest.records, n, seed);
  if (out.empty()) {
    std::cout << kManifestHeader << "\n";
    for (const auto& r : sample) {
      std::printf("%s,%s,%s,%s,%.3f,%.3f\n", r.session_id.c_str(), r.segment_id.c_str(),
                  std::string(name_of(r.source)).c_str(), r.audio_path.string().c_str(),
                  r.start_s, r.end_s);
    }
  } else {
    write_manifest(out, sample);
  }
  std::cerr << sample.size() << " segment(s) sampled for listening\n";
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"affectline: speech emotion recognition for day-long family recordings"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a classifier on a RAVDESS-style corpus");
  train_flags.add(train_cmd);

  ConfigFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  eval_flags.add(eval_cmd);

  ConfigFlags classify_flags;
  auto* classify_cmd = app.add_subcommand("classify", "per-session emotion reports for a manifest");
  classify_flags.add(classify_cmd, {"checkpoint", "manifest", "out", "resample", "jobs",
                                    "chunk_vote"});

  ConfigFlags feature_flags;
  std::string wav, features_out;
  auto* features_cmd = app.add_subcommand("features", "dump the feature matrix of a WAV as CSV");
  feature_flags.add(features_cmd, kFeatureKeys);
  features_cmd->add_option("--wav", wav, "input WAV file")->required();
  features_cmd->add_option("-o,--output", features_out, "CSV path (default stdout)");

  std::uint64_t gc_seed = 7;
  std::size_t gc_seeds = 1;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad_cmd->add_option("--seed", gc_seed, "first seed")->capture_default_str();
  grad_cmd->add_option("--seeds", gc_seeds, "number of consecutive seeds")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  ConfigFlags synth_flags;
  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "synthesize test sessions or a synthetic corpus");
  synth_flags.add(synth_cmd, {"out", "corpus", "seed", "resample", "jobs", "filter_sex",
                              "filter_emotions", "filter_channels"});
  synth_cmd->add_option("--sessions", synth.sessions, "sessions to build")->capture_default_str();
  synth_cmd->add_option("--segments", synth.segments, "FAN segments per session")
      ->capture_default_str();
  synth_cmd->add_option("--distractors", synth.distractors, "non-FAN segments per session")
      ->capture_default_str();
  auto* snr_opt = synth_cmd->add_option("--snr-db", synth.snr_db, "add white noise at this SNR");
  synth_cmd->add_option("--corpus-out", synth.corpus_out,
                        "write a procedural RAVDESS-named corpus here instead");
  synth_cmd->add_option("--actors", synth.actors, "actors in the procedural corpus")
      ->capture_default_str();
  synth_cmd->add_option("--takes", synth.takes, "takes per emotion (max 4)")
      ->capture_default_str();
  synth_cmd->add_flag("--include-song", synth.include_song, "also write song-channel clips");

  std::string audit_manifest, audit_out;
  std::size_t audit_n = 100;
  std::uint64_t audit_seed = 42;
  auto* audit_cmd =
      app.add_subcommand("audit-manifest", "sample FAN segments for manual listening");
  audit_cmd->add_option("--manifest", audit_manifest, "manifest CSV")->required();
  audit_cmd->add_option("-n,--count", audit_n, "segments to sample")->capture_default_str();
  audit_cmd->add_option("--seed", audit_seed, "sampling seed")->capture_default_str();
  audit_cmd->add_option("-o,--output", audit_out, "manifest CSV path (default stdout)");

  std::string simd_backend;
  app.add_option("--simd", simd_backend, "kernel backend: scalar, avx2 or neon");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_config;
  }

  try {
    if (!simd_backend.empty()) {
      bool found = false;
      for (auto b : {simd::Backend::scalar, simd::Backend::avx2, simd::Backend::neon}) {
        if (simd::name_of(b) == simd_backend) {
          simd::set_active(b);
          found = true;
        }
      }
      if (!found) throw Error(ErrorKind::config, "unknown SIMD backend " + simd_backend);
    }
    synth.with_noise = snr_opt->count() > 0;

    if (*train_cmd) return cmd_train(train_flags);
    if (*eval_cmd) return cmd_eval(eval_flags);
    if (*classify_cmd) return cmd_classify(classify_flags);
    if (*features_cmd) return cmd_features(feature_flags, wav, features_out);
    if (*grad_cmd) return cmd_gradcheck(gc_seed, gc_seeds);
    if (*synth_cmd) return cmd_synth(synth_flags, synth);
    if (*audit_cmd) return cmd_audit(audit_manifest, audit_n, audit_seed, audit_out);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return exit_internal;
  }
  return exit_internal;
}
