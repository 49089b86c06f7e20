#include "affectline/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "affectline/charts.hpp"
#include "affectline/error.hpp"
#include "affectline/parallel.hpp"

namespace affectline {
namespace {

Error config_error(const std::string& what) { return Error(ErrorKind::config, what); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

const std::vector<RunConfig::KeyInfo>& RunConfig::keys() {
  static const std::vector<KeyInfo> k = {
      {"frame_len", "400", "analysis frame length in samples"},
      {"hop", "160", "frame hop in samples"},
      {"n_fft", "512", "FFT size (power of two >= frame_len)"},
      {"n_mels", "26", "mel filterbank bands"},
      {"n_coeffs", "13", "cepstral coefficients kept"},
      {"fmin_hz", "0", "lowest filterbank frequency"},
      {"fmax_hz", "0", "highest filterbank frequency (0 = Nyquist)"},
      {"log_floor", "1e-10", "floor applied before the log"},
      {"delta_window", "2", "delta regression half-width"},
      {"t_fixed", "300", "frames per feature matrix (pad/truncate)"},
      {"conv_channels", "64,64,128,128,256,256", "output channels of each convolution"},
      {"kernel", "3", "convolution kernel width"},
      {"stride", "1", "convolution stride"},
      {"pad", "1", "convolution zero padding"},
      {"pool_width", "0", "max-pool width (0 = global over time)"},
      {"pool_stride", "0", "max-pool stride (0 = width)"},
      {"epochs", "300", "training epochs"},
      {"batch_size", "25", "minibatch size"},
      {"lr", "0.0001", "RMSProp learning rate"},
      {"rho", "0.9", "RMSProp decay"},
      {"eps", "1e-08", "RMSProp epsilon"},
      {"seed", "42", "seed for split, init and shuffling"},
      {"split_ratio", "0.8", "train fraction"},
      {"stratified", "true", "stratify the split by emotion"},
      {"shuffle_each_epoch", "true", "reshuffle training order every epoch"},
      {"patience", "0", "early-stop patience in epochs (0 = off)"},
      {"stop_at_train_accuracy", "0", "stop once train accuracy reaches this (0 = off)"},
      {"corpus", "", "RAVDESS-style corpus root"},
      {"out", "", "output directory"},
      {"checkpoint", "", "checkpoint path"},
      {"manifest", "", "segment manifest CSV"},
      {"filter_sex", "any", "female, male or any"},
      {"filter_emotions", "neutral,calm,happy,sad,angry,fearful", "emotions to load"},
      {"filter_channels", "speech,song", "vocal channels to load"},
      {"resample", "sinc", "sinc or linear"},
      {"jobs", "0", "worker threads (0 = all cores)"},
      {"cache", "true", "cache extracted features on disk"},
      {"chunk_vote", "false", "majority-vote over windows for long segments"},
  };
  return k;
}

std::string flag_name(std::string_view key) {
  std::string f = "--";
  for (char c : key) f += c == '_' ? '-' : c;
  return f;
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[std::string(k.key)] = std::string(k.default_value);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw config_error("unknown config key '" + key + "'");
  it->second = trim(value);
  explicit_.insert(key);
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw config_error("unknown config key '" + key + "'");
  return it->second;
}

void RunConfig::merge_text(std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string clean = trim(line);
    if (clean.empty()) continue;
    const auto eq = clean.find('=');
    if (eq == std::string::npos) {
      throw config_error(origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(std::string_view(clean).substr(0, eq));
    if (!values_.contains(key)) {
      throw config_error(origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    set(key, clean.substr(eq + 1));
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  merge_text(buf.str(), path.string());
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& k : keys()) {
    s += std::string(k.key) + "=" + values_.at(std::string(k.key)) + "\n";
  }
  return s;
}

void RunConfig::write(const std::filesystem::path& path) const { write_text_file(path, to_text()); }

std::size_t RunConfig::size_value(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw config_error("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double RunConfig::real_value(const std::string& key) const {
  const std::string& v = get(key);
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw config_error("config key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw config_error("config key '" + key + "' expects true/false, got '" + v + "'");
}

FeatureConfig RunConfig::feature_config() const {
  FeatureConfig f;
  f.frame.frame_len = size_value("frame_len");
  f.frame.hop = size_value("hop");
  f.mfcc.n_fft = size_value("n_fft");
  f.mfcc.n_mels = size_value("n_mels");
  f.mfcc.n_coeffs = size_value("n_coeffs");
  f.mfcc.fmin_hz = real_value("fmin_hz");
  f.mfcc.fmax_hz = real_value("fmax_hz");
  f.mfcc.log_floor = real_value("log_floor");
  f.mfcc.delta_window = size_value("delta_window");
  f.t_fixed = size_value("t_fixed");
  f.validate();
  return f;
}

nn::ModelSpec RunConfig::model_spec() const {
  const FeatureConfig f = feature_config();
  nn::ModelSpec s;
  s.input_channels = f.rows();
  s.input_len = f.t_fixed;
  s.conv_channels.clear();
  for (const auto& c : split_list(get("conv_channels"))) {
    std::size_t v = 0;
    const auto r = std::from_chars(c.data(), c.data() + c.size(), v);
    if (r.ec != std::errc() || r.ptr != c.data() + c.size() || v == 0) {
      throw config_error("conv_channels expects positive integers, got '" + c + "'");
    }
    s.conv_channels.push_back(v);
  }
  s.kernel = size_value("kernel");
  s.stride = size_value("stride");
  s.pad = size_value("pad");
  s.pool.width = size_value("pool_width");
  s.pool.stride = size_value("pool_stride");
  try {
    s.validate();
  } catch (const Error& e) {
    throw config_error(std::string("invalid architecture: ") + e.what());
  }
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = size_value("epochs");
  t.batch_size = size_value("batch_size");
  t.optimizer.lr = static_cast<float>(real_value("lr"));
  t.optimizer.rho = static_cast<float>(real_value("rho"));
  t.optimizer.eps = static_cast<float>(real_value("eps"));
  t.seed = size_value("seed");
  t.split_ratio = real_value("split_ratio");
  t.stratified = flag("stratified");
  t.shuffle_each_epoch = flag("shuffle_each_epoch");
  t.patience = size_value("patience");
  t.stop_at_train_accuracy = real_value("stop_at_train_accuracy");
  t.jobs = jobs();
  t.validate();
  return t;
}

CorpusFilter RunConfig::corpus_filter() const {
  CorpusFilter f;
  const std::string& sex = get("filter_sex");
  if (sex != "any") {
    f.sex = sex_from_name(sex);
    if (!f.sex) throw config_error("filter_sex must be female, male or any, got '" + sex + "'");
  }
  f.emotions.clear();
  for (const auto& e : split_list(get("filter_emotions"))) {
    const auto label = emotion_from_name(e);
    if (!label) throw config_error("unknown emotion in filter_emotions: '" + e + "'");
    f.emotions.insert(*label);
  }
  f.channels.clear();
  for (const auto& c : split_list(get("filter_channels"))) {
    const auto ch = channel_from_name(c);
    if (!ch) throw config_error("unknown vocal channel in filter_channels: '" + c + "'");
    f.channels.insert(*ch);
  }
  return f;
}

ResampleMethod RunConfig::resample_method() const {
  const std::string& v = get("resample");
  if (v == "sinc") return ResampleMethod::kaiser_sinc;
  if (v == "linear") return ResampleMethod::linear;
  throw config_error("resample must be sinc or linear, got '" + v + "'");
}

std::size_t RunConfig::jobs() const {
  const std::size_t j = size_value("jobs");
  return j == 0 ? default_jobs() : j;
}

}  // namespace affectline
