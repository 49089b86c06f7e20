#include "affectline/session.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "affectline/charts.hpp"
#include "affectline/error.hpp"
#include "affectline/features.hpp"
#include "affectline/parallel.hpp"
#include "affectline/train.hpp"

namespace affectline {
namespace {

constexpr std::array<std::string_view, 6> kSourceNames = {"FAN", "FAF", "MAN",
                                                          "MAF", "CHN", "OTHER"};

std::vector<std::string> parse_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<double> parse_real(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::string real_text(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

}  // namespace

std::string_view name_of(SourceLabel s) noexcept {
  return kSourceNames[static_cast<std::size_t>(s)];
}

std::optional<SourceLabel> source_label_from_name(std::string_view s) noexcept {
  std::string upper(s);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (std::size_t i = 0; i < kSourceNames.size(); ++i) {
    if (kSourceNames[i] == upper) return static_cast<SourceLabel>(i);
  }
  return std::nullopt;
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::manifest_schema, "manifest is empty (header required)");
  }
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
    line.erase(0, 3);  // UTF-8 BOM
  }
  const auto header = parse_csv_line(trim(line));
  const std::array<std::string_view, 6> required = {"session_id", "segment_id", "source_label",
                                                    "audio_path", "start_s",    "end_s"};
  std::array<std::size_t, 6> col{};
  for (std::size_t r = 0; r < required.size(); ++r) {
    const auto it = std::find_if(header.begin(), header.end(),
                                 [&](const std::string& h) { return trim(h) == required[r]; });
    if (it == header.end()) {
      throw Error(ErrorKind::manifest_schema,
                  "manifest header is missing column '" + std::string(required[r]) + "'");
    }
    col[r] = static_cast<std::size_t>(it - header.begin());
  }

  Manifest m;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string clean = trim(line);
    if (clean.empty()) continue;
    const auto fields = parse_csv_line(clean);
    const auto row_error = [&](const std::string& why) {
      m.row_errors.push_back({line_no, "line " + std::to_string(line_no) + ": " + why});
    };
    if (fields.size() < header.size()) {
      row_error("expected " + std::to_string(header.size()) + " fields, got " +
                std::to_string(fields.size()));
      continue;
    }
    SegmentRecord rec;
    rec.session_id = trim(fields[col[0]]);
    rec.segment_id = trim(fields[col[1]]);
    if (rec.session_id.empty() || rec.segment_id.empty()) {
      row_error("empty session_id or segment_id");
      continue;
    }
    if (auto label = source_label_from_name(trim(fields[col[2]]))) {
      rec.source = *label;
    } else {
      rec.source = SourceLabel::OTHER;
      ++m.unknown_labels;
    }
    const std::string audio = trim(fields[col[3]]);
    if (audio.empty()) {
      row_error("empty audio_path");
      continue;
    }
    rec.audio_path = std::filesystem::path(audio);
    if (rec.audio_path.is_relative() && !base_dir.empty()) rec.audio_path = base_dir / rec.audio_path;
    const auto start = parse_real(trim(fields[col[4]]));
    const auto end = parse_real(trim(fields[col[5]]));
    if (!start || !end) {
      row_error("unparsable start_s/end_s");
      continue;
    }
    if (*start < 0.0) {
      row_error("start_s must be >= 0");
      continue;
    }
    if (!(*end > *start)) {
      row_error("end_s must be greater than start_s");
      continue;
    }
    rec.start_s = *start;
    rec.end_s = *end;
    m.records.push_back(std::move(rec));
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::unreadable_file, "cannot open manifest " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Manifest m = parse_manifest(buf.str(), path.parent_path());
  if (strict && !m.row_errors.empty()) {
    throw Error(ErrorKind::manifest_row,
                path.string() + ": " + m.row_errors.front().message);
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, std::span<const SegmentRecord> records) {
  std::ostringstream s;
  s << kManifestHeader << '\n';
  for (const auto& r : records) {
    s << csv_field(r.session_id) << ',' << csv_field(r.segment_id) << ',' << name_of(r.source)
      << ',' << csv_field(r.audio_path.generic_string()) << ',' << real_text(r.start_s) << ','
      << real_text(r.end_s) << '\n';
  }
  write_text_file(path, s.str());
}

std::vector<SegmentRecord> filter_fan(std::span<const SegmentRecord> records) {
  std::vector<SegmentRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [](const SegmentRecord& r) { return r.source == SourceLabel::FAN; });
  return out;
}

std::size_t SessionReport::n_classified() const noexcept {
  std::size_t n = 0;
  for (std::size_t c : counts) n += c;
  return n;
}

SessionReport classify_session(std::span<const SegmentRecord> records,
                               const SegmentClassifier& classifier,
                               const ClassifyOptions& options) {
  SessionReport report;
  report.session_id = records.empty() ? std::string() : records.front().session_id;
  report.n_segments_total = records.size();
  const auto fan = filter_fan(records);
  report.n_segments_fan = fan.size();

  std::vector<std::optional<EmotionLabel>> labels(fan.size());
  std::vector<std::string> errors(fan.size());
  parallel_for(fan.size(), options.jobs, [&](std::size_t i) {
    try {
      const AudioClip clip = read_wav(fan[i].audio_path, options.resample);
      labels[i] = classifier(fan[i], clip);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  for (std::size_t i = 0; i < fan.size(); ++i) {
    if (labels[i]) {
      ++report.counts[index_of(*labels[i])];
      report.predictions.push_back({fan[i].segment_id, *labels[i]});
    } else {
      report.failures.push_back({fan[i].segment_id, errors[i]});
    }
  }
  const std::size_t classified = report.n_classified();
  if (classified == 0) {
    throw Error(ErrorKind::empty_session,
                "session '" + report.session_id + "' has no classifiable FAN segments (" +
                    std::to_string(fan.size()) + " FAN of " + std::to_string(records.size()) +
                    " total)");
  }
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    report.proportions[c] =
        static_cast<double>(report.counts[c]) / static_cast<double>(classified);
  }
  const auto by_id = [](const auto& a, const auto& b) { return a.segment_id < b.segment_id; };
  std::sort(report.predictions.begin(), report.predictions.end(), by_id);
  std::sort(report.failures.begin(), report.failures.end(), by_id);
  return report;
}

std::vector<SessionReport> classify_manifest(std::span<const SegmentRecord> records,
                                             const SegmentClassifier& classifier,
                                             const ClassifyOptions& options,
                                             std::vector<std::string>* empty_sessions) {
  std::map<std::string, std::vector<SegmentRecord>> sessions;
  for (const auto& r : records) sessions[r.session_id].push_back(r);
  std::vector<SessionReport> reports;
  for (const auto& [id, recs] : sessions) {
    try {
      reports.push_back(classify_session(recs, classifier, options));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::empty_session) throw;
      if (empty_sessions) empty_sessions->push_back(id);
    }
  }
  return reports;
}

SegmentClassifier make_checkpoint_classifier(const Checkpoint& checkpoint, bool chunk_vote) {
  auto model = std::make_shared<const nn::Model<float>>(checkpoint.model());
  auto ckpt = std::make_shared<const Checkpoint>(checkpoint);
  return [model, ckpt, chunk_vote](const SegmentRecord&, const AudioClip& clip) {
    const FeatureConfig& cfg = ckpt->features;
    const std::size_t window =
        (cfg.t_fixed - 1) * cfg.frame.hop + cfg.frame.frame_len;
    if (!chunk_vote || clip.samples.size() <= window) {
      return predict(*model, ckpt->normalization, assemble_features(clip.samples, cfg));
    }
    std::array<std::size_t, kNumEmotions> votes{};
    const std::span<const float> all(clip.samples);
    for (std::size_t start = 0; start < all.size(); start += window) {
      const auto chunk = all.subspan(start, std::min(window, all.size() - start));
      ++votes[index_of(predict(*model, ckpt->normalization, assemble_features(chunk, cfg)))];
    }
    return kAllEmotions[static_cast<std::size_t>(
        std::max_element(votes.begin(), votes.end()) - votes.begin())];
  };
}

void render_report(const SessionReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw Error(ErrorKind::io, "cannot create report directory " + out_dir.string());
  }
  std::ostringstream csv;
  csv << "emotion,count,proportion\n";
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10f", report.proportions[c]);
    csv << name_of(kAllEmotions[c]) << ',' << report.counts[c] << ',' << buf << '\n';
  }
  write_text_file(out_dir / (report.session_id + ".csv"), csv.str());
  const std::string title = "Session " + report.session_id + " (" +
                            std::to_string(report.n_classified()) + " segments)";
  write_text_file(out_dir / (report.session_id + ".svg"),
                  emotion_bar_svg(title, report.counts, report.proportions));
}

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::unreadable_file, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = parse_csv_line(trim(line));
    const auto e = f.size() == 3 ? emotion_from_name(f[0]) : std::nullopt;
    const auto p = f.size() == 3 ? parse_real(f[2]) : std::nullopt;
    if (!e || !p) throw Error(ErrorKind::manifest_row, "bad report row: " + line);
    rows.push_back({*e, static_cast<std::size_t>(std::stoull(f[1])), *p});
  }
  return rows;
}

// --- synthesis -------------------------------------------------------------------

NoisyMix add_noise_at_snr(std::span<const float> signal, double snr_db, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto uniform = [&] {
    return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  };
  NoisyMix mix;
  mix.noise.resize(signal.size());
  double noise_sq = 0.0;
  double signal_sq = 0.0;
  std::vector<double> raw(signal.size());
  for (std::size_t i = 0; i < raw.size(); i += 2) {
    // Box-Muller from the raw 64-bit stream.
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    raw[i] = r * std::cos(theta);
    if (i + 1 < raw.size()) raw[i + 1] = r * std::sin(theta);
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    noise_sq += raw[i] * raw[i];
    signal_sq += static_cast<double>(signal[i]) * signal[i];
  }
  const double n = std::max<double>(1.0, static_cast<double>(signal.size()));
  const double signal_rms = std::sqrt(signal_sq / n);
  const double noise_rms = std::sqrt(noise_sq / n);
  const double target = signal_rms / std::pow(10.0, snr_db / 20.0);
  const double scale = noise_rms > 0.0 ? target / noise_rms : 0.0;
  mix.mixed.resize(signal.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    mix.noise[i] = static_cast<float>(raw[i] * scale);
    mix.mixed[i] = std::clamp(signal[i] + mix.noise[i], -1.0f, 1.0f);
  }
  return mix;
}

SynthesizedSession synthesize_session(std::span<const LabeledAudio> clips,
                                      const std::filesystem::path& out_dir,
                                      const SynthOptions& options) {
  if (clips.empty()) throw Error(ErrorKind::empty_input, "synthesis needs at least one clip");
  const auto audio_dir = out_dir / options.session_id;
  std::error_code ec;
  std::filesystem::create_directories(audio_dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + audio_dir.string());

  std::mt19937_64 rng(options.seed);
  // Segment order in the recording is a seeded permutation of the inputs.
  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

  SynthesizedSession out;
  double clock = 0.0;
  char name[64];
  const auto emit = [&](const std::string& segment_id, SourceLabel source,
                        std::span<const float> samples) {
    std::vector<float> audio(samples.begin(), samples.end());
    if (options.snr_db) audio = add_noise_at_snr(samples, *options.snr_db, rng()).mixed;
    const auto file = audio_dir / (segment_id + ".wav");
    write_wav(file, audio, 1, kCanonicalSampleRate, WavEncoding::pcm16);
    SegmentRecord rec;
    rec.session_id = options.session_id;
    rec.segment_id = segment_id;
    rec.source = source;
    rec.audio_path = std::filesystem::path(options.session_id) / (segment_id + ".wav");
    rec.start_s = clock;
    rec.end_s = clock + static_cast<double>(audio.size()) / kCanonicalSampleRate;
    clock = rec.end_s + 0.5;
    out.records.push_back(std::move(rec));
  };

  const std::array<SourceLabel, 4> others = {SourceLabel::FAF, SourceLabel::MAN,
                                             SourceLabel::MAF, SourceLabel::CHN};
  for (std::size_t k = 0; k < order.size(); ++k) {
    std::snprintf(name, sizeof name, "%s_seg%05zu", options.session_id.c_str(), k);
    emit(name, SourceLabel::FAN, clips[order[k]].samples);
    out.truth[name] = clips[order[k]].label;
  }
  for (std::size_t k = 0; k < options.distractors; ++k) {
    std::snprintf(name, sizeof name, "%s_other%05zu", options.session_id.c_str(), k);
    emit(name, others[k % others.size()], clips[rng() % clips.size()].samples);
  }

  out.manifest_path = out_dir / (options.session_id + "_manifest.csv");
  write_manifest(out.manifest_path, out.records);
  out.truth_path = out_dir / (options.session_id + "_truth.csv");
  std::ostringstream truth;
  truth << "segment_id,emotion\n";
  for (const auto& [id, label] : out.truth) truth << id << ',' << name_of(label) << '\n';
  write_text_file(out.truth_path, truth.str());
  for (auto& r : out.records) r.audio_path = out_dir / r.audio_path;
  return out;
}

std::map<std::string, EmotionLabel> read_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::unreadable_file, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::map<std::string, EmotionLabel> truth;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = parse_csv_line(trim(line));
    const auto e = f.size() == 2 ? emotion_from_name(f[1]) : std::nullopt;
    if (!e) throw Error(ErrorKind::manifest_row, "bad truth row: " + line);
    truth[f[0]] = *e;
  }
  return truth;
}

std::vector<SegmentRecord> sample_for_audit(std::span<const SegmentRecord> records,
                                            std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> fan;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].source == SourceLabel::FAN) fan.push_back(i);
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = fan.size(); i > 1; --i) std::swap(fan[i - 1], fan[rng() % i]);
  fan.resize(std::min(n, fan.size()));
  std::sort(fan.begin(), fan.end());
  std::vector<SegmentRecord> out;
  for (std::size_t i : fan) out.push_back(records[i]);
  return out;
}

}  // namespace affectline
