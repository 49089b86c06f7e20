#include "affectline/ravdess.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <system_error>

#include "affectline/error.hpp"
#include "affectline/parallel.hpp"

namespace affectline {
namespace {

Error malformed(std::string_view name, std::string_view why) {
  return Error(ErrorKind::malformed_name,
               "malformed RAVDESS name '" + std::string(name) + "': " +
                   std::string(why));
}

}  // namespace

RavdessMeta parse_ravdess_name(std::string_view filename) {
  const auto slash = filename.find_last_of("/\\");
  const std::string_view base =
      slash == std::string_view::npos ? filename : filename.substr(slash + 1);
  // NN-NN-NN-NN-NN-NN-NN.wav
  if (base.size() != 24 || base.substr(20) != ".wav") {
    throw malformed(base, "expected 7 two-digit fields and a .wav suffix");
  }
  std::array<int, 7> code{};
  for (std::size_t f = 0; f < 7; ++f) {
    const std::size_t at = f * 3;
    const char hi = base[at];
    const char lo = base[at + 1];
    if (hi < '0' || hi > '9' || lo < '0' || lo > '9') {
      throw malformed(base, "non-numeric field");
    }
    if (f < 6 && base[at + 2] != '-') throw malformed(base, "missing separator");
    code[f] = (hi - '0') * 10 + (lo - '0');
  }
  const auto in_range = [](int v, int lo, int hi) { return v >= lo && v <= hi; };

  RavdessMeta meta;
  if (!in_range(code[0], 1, 3)) throw malformed(base, "modality out of range");
  meta.modality = code[0] == 1   ? Modality::audio_video
                  : code[0] == 2 ? Modality::video_only
                                 : Modality::audio_only;
  if (!in_range(code[1], 1, 2)) throw malformed(base, "vocal channel out of range");
  meta.vocal_channel = code[1] == 1 ? VocalChannel::speech : VocalChannel::song;
  if (!in_range(code[2], 1, 8)) throw malformed(base, "emotion out of range");
  if (code[2] > 6) {
    throw Error(ErrorKind::out_of_scope_class,
                "emotion code " + std::to_string(code[2]) + " in '" +
                    std::string(base) + "' is outside the six-class set");
  }
  meta.emotion = kAllEmotions[static_cast<std::size_t>(code[2] - 1)];
  if (!in_range(code[3], 1, 2)) throw malformed(base, "intensity out of range");
  meta.intensity = code[3] == 1 ? Intensity::normal : Intensity::strong;
  if (!in_range(code[4], 1, 2)) throw malformed(base, "statement out of range");
  meta.statement = code[4];
  if (!in_range(code[5], 1, 2)) throw malformed(base, "repetition out of range");
  meta.repetition = code[5];
  if (!in_range(code[6], 1, 24)) throw malformed(base, "actor out of range");
  meta.actor = code[6];
  meta.sex = meta.actor % 2 == 0 ? Sex::female : Sex::male;
  return meta;
}

std::string render_ravdess_name(const RavdessMeta& meta) {
  const int modality = meta.modality == Modality::audio_video  ? 1
                       : meta.modality == Modality::video_only ? 2
                                                               : 3;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%02d-%02d-%02d-%02d-%02d-%02d-%02d.wav",
                modality, meta.vocal_channel == VocalChannel::speech ? 1 : 2,
                static_cast<int>(index_of(meta.emotion)) + 1,
                meta.intensity == Intensity::normal ? 1 : 2, meta.statement,
                meta.repetition, meta.actor);
  return buf;
}

std::string_view name_of(Sex s) noexcept {
  return s == Sex::female ? "female" : "male";
}

std::string_view name_of(VocalChannel c) noexcept {
  return c == VocalChannel::speech ? "speech" : "song";
}

std::optional<Sex> sex_from_name(std::string_view s) noexcept {
  if (s == "female") return Sex::female;
  if (s == "male") return Sex::male;
  return std::nullopt;
}

std::optional<VocalChannel> channel_from_name(std::string_view s) noexcept {
  if (s == "speech") return VocalChannel::speech;
  if (s == "song") return VocalChannel::song;
  return std::nullopt;
}

bool CorpusFilter::accepts(const RavdessMeta& meta) const {
  if (sex && meta.sex != *sex) return false;
  return emotions.contains(meta.emotion) && channels.contains(meta.vocal_channel);
}

std::vector<std::filesystem::path> scan_corpus(const std::filesystem::path& root,
                                               const CorpusFilter& filter,
                                               std::size_t* n_scanned) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) {
    throw Error(ErrorKind::unreadable_file,
                "corpus directory not found: " + root.string());
  }
  std::vector<std::filesystem::path> selected;
  std::size_t scanned = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    RavdessMeta meta;
    try {
      meta = parse_ravdess_name(entry.path().filename().string());
    } catch (const Error&) {
      continue;
    }
    ++scanned;
    if (filter.accepts(meta)) selected.push_back(entry.path());
  }
  std::sort(selected.begin(), selected.end());
  if (n_scanned) *n_scanned = scanned;
  return selected;
}

CorpusLoad load_corpus(const std::filesystem::path& root,
                       const CorpusFilter& filter, const LoadOptions& options) {
  CorpusLoad load;
  const auto paths = scan_corpus(root, filter, &load.n_scanned);
  if (paths.empty()) {
    throw Error(ErrorKind::empty_result,
                "no corpus files under " + root.string() + " match the filter");
  }

  std::vector<std::optional<LabeledClip>> slots(paths.size());
  std::vector<std::string> errors(paths.size());
  parallel_for(paths.size(), options.jobs, [&](std::size_t i) {
    try {
      LabeledClip rec;
      rec.meta = parse_ravdess_name(paths[i].filename().string());
      rec.label = rec.meta.emotion;
      rec.clip = read_wav(paths[i], options.resample);
      slots[i] = std::move(rec);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (slots[i]) {
      load.records.push_back(std::move(*slots[i]));
    } else {
      load.failures.push_back({paths[i].string(), errors[i]});
    }
  }
  if (load.records.empty()) {
    throw Error(ErrorKind::empty_result,
                "all " + std::to_string(paths.size()) +
                    " matching corpus files failed to decode");
  }
  return load;
}

}  // namespace affectline
