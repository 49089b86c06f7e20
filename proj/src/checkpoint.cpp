#include "affectline/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "affectline/emotion.hpp"
#include "affectline/error.hpp"

namespace affectline {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += fmt(v[i]);
  }
  return s;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

Error corrupt(const std::string& what) {
  return Error(ErrorKind::truncated, "corrupt checkpoint header: " + what);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw corrupt("bad value for " + key + ": '" + text + "'");
  }
  return v;
}

class Header {
 public:
  explicit Header(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw corrupt("line without '=': " + line);
      kv_[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }

  const std::string& str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw corrupt("missing key " + key);
    return it->second;
  }
  std::size_t size(const std::string& key) const {
    return parse_number<std::size_t>(key, str(key));
  }
  double real(const std::string& key) const { return parse_number<double>(key, str(key)); }
  std::vector<double> reals(const std::string& key) const {
    std::vector<double> v;
    for (const auto& s : split(str(key), ',')) v.push_back(parse_number<double>(key, s));
    return v;
  }
  std::vector<std::size_t> sizes(const std::string& key) const {
    std::vector<std::size_t> v;
    for (const auto& s : split(str(key), ',')) v.push_back(parse_number<std::size_t>(key, s));
    return v;
  }
  const std::map<std::string, std::string>& all() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace

nn::Model<float> Checkpoint::model() const {
  nn::Model<float> m(model_spec);
  if (params.size() != m.params().size()) {
    throw Error(ErrorKind::shape_mismatch,
                "checkpoint holds " + std::to_string(params.size()) +
                    " parameters, architecture needs " + std::to_string(m.params().size()));
  }
  std::copy(params.begin(), params.end(), m.params().begin());
  return m;
}

Checkpoint make_checkpoint(const nn::Model<float>& model, const FeatureConfig& features,
                           NormalizationProfile normalization,
                           std::map<std::string, std::string> metadata) {
  Checkpoint c;
  c.model_spec = model.spec();
  c.features = features;
  c.normalization = std::move(normalization);
  for (EmotionLabel e : kAllEmotions) c.classes.emplace_back(name_of(e));
  c.metadata = std::move(metadata);
  c.params.assign(model.params().begin(), model.params().end());
  return c;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  std::ostringstream h;
  const auto& s = c.model_spec;
  const auto& f = c.features;
  h << "format_version=" << kCheckpointVersion << '\n'
    << "arch.input_channels=" << s.input_channels << '\n'
    << "arch.input_len=" << s.input_len << '\n'
    << "arch.conv_channels=" << join(s.conv_channels) << '\n'
    << "arch.kernel=" << s.kernel << '\n'
    << "arch.stride=" << s.stride << '\n'
    << "arch.pad=" << s.pad << '\n'
    << "arch.pool_width=" << s.pool.width << '\n'
    << "arch.pool_stride=" << s.pool.stride << '\n'
    << "arch.n_classes=" << s.n_classes << '\n'
    << "features.frame_len=" << f.frame.frame_len << '\n'
    << "features.hop=" << f.frame.hop << '\n'
    << "features.sample_rate_hz=" << f.mfcc.sample_rate_hz << '\n'
    << "features.n_fft=" << f.mfcc.n_fft << '\n'
    << "features.n_mels=" << f.mfcc.n_mels << '\n'
    << "features.n_coeffs=" << f.mfcc.n_coeffs << '\n'
    << "features.fmin_hz=" << fmt(f.mfcc.fmin_hz) << '\n'
    << "features.fmax_hz=" << fmt(f.mfcc.fmax_hz) << '\n'
    << "features.log_floor=" << fmt(f.mfcc.log_floor) << '\n'
    << "features.delta_window=" << f.mfcc.delta_window << '\n'
    << "features.t_fixed=" << f.t_fixed << '\n'
    << "norm.mean=" << join(c.normalization.mean) << '\n'
    << "norm.stddev=" << join(c.normalization.stddev) << '\n';
  h << "classes=";
  for (std::size_t i = 0; i < c.classes.size(); ++i) h << (i ? "," : "") << c.classes[i];
  h << '\n';
  for (const auto& [k, v] : c.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw Error(ErrorKind::config, "metadata key/value not representable: " + k);
    }
    h << "meta." << k << '=' << v << '\n';
  }
  h << "param_count=" << c.params.size() << '\n';
  const std::string header = h.str();

  std::vector<std::uint8_t> out;
  out.reserve(12 + header.size() + 4 * c.params.size());
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 4);
  const std::uint64_t len = header.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), header.begin(), header.end());
  const std::size_t at = out.size();
  out.resize(at + 4 * c.params.size());
  std::memcpy(out.data() + at, c.params.data(), 4 * c.params.size());
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw Error(ErrorKind::bad_magic, "not an AFL1 checkpoint (bad magic)");
  }
  if (bytes.size() < 12) {
    throw Error(ErrorKind::truncated, "checkpoint truncated: expected at least 12 bytes, got " +
                                          std::to_string(bytes.size()));
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[4 + i]) << (8 * i);
  if (len > bytes.size() - 12) {
    throw Error(ErrorKind::truncated, "checkpoint header truncated: expected " +
                                          std::to_string(len) + " bytes, got " +
                                          std::to_string(bytes.size() - 12));
  }
  const Header h(std::string(reinterpret_cast<const char*>(bytes.data() + 12), len));

  const std::size_t version = h.size("format_version");
  if (version != static_cast<std::size_t>(kCheckpointVersion)) {
    throw Error(ErrorKind::version_mismatch,
                "checkpoint format version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }

  Checkpoint c;
  auto& s = c.model_spec;
  s.input_channels = h.size("arch.input_channels");
  s.input_len = h.size("arch.input_len");
  s.conv_channels = h.sizes("arch.conv_channels");
  s.kernel = h.size("arch.kernel");
  s.stride = h.size("arch.stride");
  s.pad = h.size("arch.pad");
  s.pool.width = h.size("arch.pool_width");
  s.pool.stride = h.size("arch.pool_stride");
  s.n_classes = h.size("arch.n_classes");
  auto& f = c.features;
  f.frame.frame_len = h.size("features.frame_len");
  f.frame.hop = h.size("features.hop");
  f.mfcc.sample_rate_hz = static_cast<int>(h.size("features.sample_rate_hz"));
  f.mfcc.n_fft = h.size("features.n_fft");
  f.mfcc.n_mels = h.size("features.n_mels");
  f.mfcc.n_coeffs = h.size("features.n_coeffs");
  f.mfcc.fmin_hz = h.real("features.fmin_hz");
  f.mfcc.fmax_hz = h.real("features.fmax_hz");
  f.mfcc.log_floor = h.real("features.log_floor");
  f.mfcc.delta_window = h.size("features.delta_window");
  f.t_fixed = h.size("features.t_fixed");
  c.normalization.mean = h.reals("norm.mean");
  c.normalization.stddev = h.reals("norm.stddev");
  c.classes = split(h.str("classes"), ',');
  for (const auto& [k, v] : h.all()) {
    if (k.rfind("meta.", 0) == 0) c.metadata[k.substr(5)] = v;
  }

  const std::size_t count = h.size("param_count");
  const std::size_t expected = 4 * count;
  const std::size_t actual = bytes.size() - 12 - len;
  if (actual < expected) {
    throw Error(ErrorKind::truncated, "checkpoint parameter section truncated: expected " +
                                          std::to_string(expected) + " bytes, got " +
                                          std::to_string(actual));
  }
  c.params.resize(count);
  std::memcpy(c.params.data(), bytes.data() + 12 + len, expected);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::unreadable_file, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes);
}

}  // namespace affectline
