#include "affectline/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include "affectline/error.hpp"
#include "affectline/parallel.hpp"

namespace affectline {
namespace {

// Fisher-Yates with a plain modulo draw so the permutation depends only on
// the mt19937_64 stream, not on the standard library's distributions.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

constexpr std::uint64_t kShuffleStream = 0x9e3779b97f4a7c15ull;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  return out;
}

std::string fixed6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

void TrainConfig::validate() const {
  const auto bad = [](const std::string& why) {
    return Error(ErrorKind::config, "invalid training config: " + why);
  };
  if (batch_size == 0) throw bad("batch_size must be >= 1");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw bad("split_ratio must be in (0, 1)");
  if (!(optimizer.lr > 0.0f)) throw bad("lr must be positive");
  if (!(optimizer.rho >= 0.0f && optimizer.rho < 1.0f)) throw bad("rho must be in [0, 1)");
  if (!(optimizer.eps > 0.0f)) throw bad("eps must be positive");
  if (stop_at_train_accuracy < 0.0 || stop_at_train_accuracy > 1.0) {
    throw bad("stop_at_train_accuracy must be in [0, 1]");
  }
}

Split split_dataset(std::span<const EmotionLabel> labels, double split_ratio,
                    std::uint64_t seed, bool stratified) {
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw Error(ErrorKind::invalid_split, "split ratio must be in (0, 1)");
  }
  std::array<std::vector<std::size_t>, kNumEmotions> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[index_of(labels[i])].push_back(i);
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    if (by_class[c].size() == 1) {
      throw Error(ErrorKind::invalid_split,
                  "class '" + std::string(name_of(kAllEmotions[c])) +
                      "' has fewer than 2 records");
    }
  }
  const double test_fraction = 1.0 - split_ratio;
  std::mt19937_64 rng(seed);
  Split split;
  const auto take = [&](std::vector<std::size_t> pool) {
    shuffle(pool, rng);
    const auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(pool.size())));
    split.test.insert(split.test.end(), pool.begin(),
                      pool.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train.insert(split.train.end(),
                       pool.begin() + static_cast<std::ptrdiff_t>(n_test), pool.end());
  };
  if (stratified) {
    for (const auto& pool : by_class) take(pool);
  } else {
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    take(std::move(all));
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::size_t ConfusionMatrix::total() const noexcept {
  std::size_t n = 0;
  for (const auto& row : counts_) for (std::size_t v : row) n += v;
  return n;
}

std::size_t ConfusionMatrix::trace() const noexcept {
  std::size_t n = 0;
  for (std::size_t i = 0; i < kNumEmotions; ++i) n += counts_[i][i];
  return n;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const noexcept {
  std::size_t n = 0;
  for (std::size_t v : counts_[truth]) n += v;
  return n;
}

double ConfusionMatrix::accuracy() const noexcept {
  const std::size_t n = total();
  return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
}

EmotionLabel predict(const nn::Model<float>& model, const NormalizationProfile& profile,
                     FeatureMatrix raw) {
  if (!profile.empty()) apply_profile(raw, profile);
  const auto logits = model.forward(nn::to_tensor<float>(raw));
  return kAllEmotions[nn::argmax<float>(logits)];
}

TrainResult fit(std::span<const Example> corpus, const Split& split,
                const nn::ModelSpec& spec, const FeatureConfig& features,
                const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  features.validate();
  if (split.train.empty()) throw Error(ErrorKind::empty_input, "training split is empty");
  for (std::size_t i : split.train) {
    if (i >= corpus.size()) throw Error(ErrorKind::invalid_split, "split index out of range");
  }
  for (std::size_t i : split.test) {
    if (i >= corpus.size()) throw Error(ErrorKind::invalid_split, "split index out of range");
  }
  for (const Example& e : corpus) {
    if (e.features.rows != spec.input_channels || e.features.cols != spec.input_len) {
      throw Error(ErrorKind::shape_mismatch,
                  "example '" + e.id + "' is " + std::to_string(e.features.rows) + "x" +
                      std::to_string(e.features.cols) + ", model expects " +
                      std::to_string(spec.input_channels) + "x" +
                      std::to_string(spec.input_len));
    }
  }

  // Normalization statistics come from the train split only.
  std::vector<const FeatureMatrix*> train_features;
  for (std::size_t i : split.train) {
    if (hooks.on_normalization_read) hooks.on_normalization_read(i);
    train_features.push_back(&corpus[i].features);
  }
  NormalizationProfile profile = compute_profile(train_features);

  const auto normalized = [&](std::size_t i) {
    FeatureMatrix m = corpus[i].features;
    apply_profile(m, profile);
    return nn::to_tensor<float>(m);
  };
  std::vector<nn::Tensor<float>> train_x;
  std::vector<std::size_t> train_y;
  for (std::size_t i : split.train) {
    train_x.push_back(normalized(i));
    train_y.push_back(index_of(corpus[i].label));
  }
  std::vector<nn::Tensor<float>> test_x;
  std::vector<std::size_t> test_y;
  for (std::size_t i : split.test) {
    test_x.push_back(normalized(i));
    test_y.push_back(index_of(corpus[i].label));
  }

  nn::Model<float> model(spec);
  model.init_he_uniform(config.seed);
  nn::RmsProp optimizer(config.optimizer, model.params().size());
  std::mt19937_64 order_rng(config.seed ^ kShuffleStream);

  Metrics metrics;
  std::vector<std::size_t> order(train_x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<float> grads(model.params().size());
  std::vector<nn::Tensor<float>> batch_x;
  std::vector<std::size_t> batch_y;
  std::vector<std::size_t> predictions;
  double best_test = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle_each_epoch) shuffle(order, order_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch_x.push_back(train_x[order[k]]);
        batch_y.push_back(train_y[order[k]]);
      }
      const float loss = nn::model_loss_and_gradients<float>(model, batch_x, batch_y, grads,
                                                             &predictions);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::divergence, "non-finite training loss at epoch " +
                                               std::to_string(epoch) + ", batch " +
                                               std::to_string(batch_index + 1));
      }
      for (std::size_t k = 0; k < predictions.size(); ++k) correct += predictions[k] == batch_y[k];
      loss_sum += static_cast<double>(loss) * static_cast<double>(end - start);
      optimizer.step(model.params(), grads);
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(order.size());
    em.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (test_x.empty()) {
      em.test_accuracy = std::numeric_limits<double>::quiet_NaN();
      em.test_loss = std::numeric_limits<double>::quiet_NaN();
    } else {
      std::vector<std::vector<float>> logits(test_x.size());
      parallel_for(test_x.size(), config.jobs,
                   [&](std::size_t i) { logits[i] = model.forward(test_x[i]); });
      double test_loss = 0.0;
      std::size_t test_correct = 0;
      for (std::size_t i = 0; i < test_x.size(); ++i) {
        test_loss += nn::softmax_xent<float>(logits[i], test_y[i]).loss;
        test_correct += nn::argmax<float>(logits[i]) == test_y[i];
      }
      em.test_loss = test_loss / static_cast<double>(test_x.size());
      em.test_accuracy = static_cast<double>(test_correct) / static_cast<double>(test_x.size());
    }
    metrics.epochs.push_back(em);
    if (hooks.on_epoch) hooks.on_epoch(em);

    if (config.stop_at_train_accuracy > 0.0 &&
        em.train_accuracy >= config.stop_at_train_accuracy) {
      break;
    }
    if (config.patience > 0 && !test_x.empty()) {
      if (em.test_accuracy > best_test) {
        best_test = em.test_accuracy;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        break;
      }
    }
  }

  for (std::size_t i = 0; i < test_x.size(); ++i) {
    const auto logits = model.forward(test_x[i]);
    metrics.confusion.add(kAllEmotions[test_y[i]], kAllEmotions[nn::argmax<float>(logits)]);
  }
  metrics.accuracy = metrics.confusion.accuracy();

  const auto real = [](auto v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
  };
  std::map<std::string, std::string> meta{
      {"epochs_run", std::to_string(metrics.epochs.size())},
      {"epochs", std::to_string(config.epochs)},
      {"batch_size", std::to_string(config.batch_size)},
      {"lr", real(config.optimizer.lr)},
      {"rho", real(config.optimizer.rho)},
      {"eps", real(config.optimizer.eps)},
      {"seed", std::to_string(config.seed)},
      {"split_ratio", real(config.split_ratio)},
      {"n_train", std::to_string(split.train.size())},
      {"n_test", std::to_string(split.test.size())},
  };
  TrainResult result;
  result.checkpoint = make_checkpoint(model, features, std::move(profile), std::move(meta));
  result.metrics = std::move(metrics);
  result.split = split;
  return result;
}

TrainResult train(std::span<const Example> corpus, const nn::ModelSpec& spec,
                  const FeatureConfig& features, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  std::vector<EmotionLabel> labels;
  labels.reserve(corpus.size());
  for (const Example& e : corpus) labels.push_back(e.label);
  const Split split = split_dataset(labels, config.split_ratio, config.seed, config.stratified);
  return fit(corpus, split, spec, features, config, hooks);
}

Metrics evaluate(const Checkpoint& checkpoint, std::span<const Example> records,
                 const FeatureConfig& extraction, std::size_t jobs) {
  if (!(extraction == checkpoint.features)) {
    throw Error(ErrorKind::config_mismatch,
                "feature configuration differs from the one stored in the checkpoint");
  }
  if (records.empty()) throw Error(ErrorKind::empty_input, "no records to evaluate");
  const nn::Model<float> model = checkpoint.model();
  std::vector<EmotionLabel> predicted(records.size());
  parallel_for(records.size(), jobs, [&](std::size_t i) {
    predicted[i] = predict(model, checkpoint.normalization, records[i].features);
  });
  Metrics m;
  for (std::size_t i = 0; i < records.size(); ++i) m.confusion.add(records[i].label, predicted[i]);
  m.accuracy = m.confusion.accuracy();
  return m;
}

// --- cache / extraction -------------------------------------------------------

FeatureCache::FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create cache dir " + dir_.string());
}

std::filesystem::path FeatureCache::default_dir() {
  if (const char* env = std::getenv("AFFECTLINE_CACHE_DIR"); env && *env) return env;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) {
    return std::filesystem::path(xdg) / "affectline";
  }
  if (const char* home = std::getenv("HOME"); home && *home) {
    return std::filesystem::path(home) / ".cache" / "affectline";
  }
  return std::filesystem::temp_directory_path() / "affectline-cache";
}

std::uint64_t FeatureCache::key_for(std::span<const std::uint8_t> file_bytes,
                                    const FeatureConfig& cfg, ResampleMethod method) {
  std::uint64_t h = fnv1a(file_bytes, 0xcbf29ce484222325ull);
  const std::uint64_t d = cfg.digest();
  const std::uint8_t extra[9] = {
      static_cast<std::uint8_t>(d),       static_cast<std::uint8_t>(d >> 8),
      static_cast<std::uint8_t>(d >> 16), static_cast<std::uint8_t>(d >> 24),
      static_cast<std::uint8_t>(d >> 32), static_cast<std::uint8_t>(d >> 40),
      static_cast<std::uint8_t>(d >> 48), static_cast<std::uint8_t>(d >> 56),
      static_cast<std::uint8_t>(method == ResampleMethod::linear)};
  return fnv1a(extra, h);
}

std::optional<FeatureMatrix> FeatureCache::get(std::uint64_t key) const {
  char name[32];
  std::snprintf(name, sizeof name, "%016llx.feat", static_cast<unsigned long long>(key));
  std::ifstream in(dir_ / name, std::ios::binary);
  if (!in) return std::nullopt;
  std::uint64_t dims[3];
  if (!in.read(reinterpret_cast<char*>(dims), sizeof dims)) return std::nullopt;
  FeatureMatrix m;
  m.rows = dims[0];
  m.cols = dims[1];
  m.n_valid_frames = dims[2];
  if (m.rows * m.cols > (1u << 28) || m.n_valid_frames > m.cols) return std::nullopt;
  m.values.resize(m.rows * m.cols);
  if (!in.read(reinterpret_cast<char*>(m.values.data()),
               static_cast<std::streamsize>(m.values.size() * sizeof(float)))) {
    return std::nullopt;
  }
  return m;
}

void FeatureCache::put(std::uint64_t key, const FeatureMatrix& m) const {
  char name[32];
  std::snprintf(name, sizeof name, "%016llx.feat", static_cast<unsigned long long>(key));
  // Write-then-rename so concurrent readers never see a partial entry.
  const auto final_path = dir_ / name;
  auto tmp = final_path;
  tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return;
    const std::uint64_t dims[3] = {m.rows, m.cols, m.n_valid_frames};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(m.values.data()),
              static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, final_path, ec);
}

CorpusFeatures extract_corpus(const std::filesystem::path& root, const CorpusFilter& filter,
                              const FeatureConfig& cfg, const ExtractOptions& options) {
  cfg.validate();
  const auto paths = scan_corpus(root, filter);
  if (paths.empty()) {
    throw Error(ErrorKind::empty_result,
                "no corpus files under " + root.string() + " match the filter");
  }
  std::optional<FeatureCache> cache;
  if (options.cache_dir) cache.emplace(*options.cache_dir);

  std::vector<std::optional<Example>> slots(paths.size());
  std::vector<std::string> errors(paths.size());
  std::vector<char> hit(paths.size(), 0);
  parallel_for(paths.size(), options.jobs, [&](std::size_t i) {
    try {
      const RavdessMeta meta = parse_ravdess_name(paths[i].filename().string());
      const auto bytes = read_file_bytes(paths[i]);
      Example ex;
      ex.id = paths[i].string();
      ex.label = meta.emotion;
      std::uint64_t key = 0;
      if (cache) {
        key = FeatureCache::key_for(bytes, cfg, options.resample);
        if (auto m = cache->get(key); m && m->rows == cfg.rows() && m->cols == cfg.t_fixed) {
          ex.features = std::move(*m);
          hit[i] = 1;
        }
      }
      if (!hit[i]) {
        const AudioClip clip = decode_wav(bytes, paths[i].string(), options.resample);
        ex.features = assemble_features(clip.samples, cfg);
        if (cache) cache->put(key, ex.features);
      }
      slots[i] = std::move(ex);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  CorpusFeatures out;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (slots[i]) {
      out.examples.push_back(std::move(*slots[i]));
      out.cache_hits += static_cast<std::size_t>(hit[i]);
    } else {
      out.failures.push_back({paths[i].string(), errors[i]});
    }
  }
  if (out.examples.empty()) {
    throw Error(ErrorKind::empty_result, "all matching corpus files failed to decode");
  }
  return out;
}

std::vector<Example> extract_examples(std::span<const LabeledClip> clips,
                                      const FeatureConfig& cfg, std::size_t jobs) {
  cfg.validate();
  std::vector<Example> out(clips.size());
  parallel_for(clips.size(), jobs, [&](std::size_t i) {
    out[i].features = assemble_features(clips[i].clip.samples, cfg);
    out[i].label = clips[i].label;
    out[i].id = clips[i].clip.source_path;
  });
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const Metrics& metrics) {
  auto out = open_out(path);
  out << "epoch,train_acc,test_acc,train_loss\n";
  for (const auto& e : metrics.epochs) {
    out << e.epoch << ',' << fixed6(e.train_accuracy) << ',' << fixed6(e.test_accuracy) << ','
        << fixed6(e.train_loss) << '\n';
  }
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  auto out = open_out(path);
  out << "true\\predicted";
  for (EmotionLabel e : kAllEmotions) out << ',' << name_of(e);
  out << '\n';
  for (std::size_t t = 0; t < kNumEmotions; ++t) {
    out << name_of(kAllEmotions[t]);
    for (std::size_t p = 0; p < kNumEmotions; ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
}

}  // namespace affectline
