#include "affectline/charts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "affectline/error.hpp"

namespace affectline {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void open_svg(std::ostringstream& s, int width, int height) {
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
    << height << "\" viewBox=\"0 0 " << width << ' ' << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
    << "\" fill=\"white\"/>\n";
}

}  // namespace

std::string accuracy_curve_svg(const Metrics& metrics) {
  constexpr int W = 640, H = 400, L = 60, R = 20, T = 40, B = 50;
  const double pw = W - L - R;
  const double ph = H - T - B;
  const std::size_t n = metrics.epochs.size();
  std::ostringstream s;
  open_svg(s, W, H);
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << "Training and testing accuracy</text>\n";
  // Axes and gridlines.
  for (int i = 0; i <= 5; ++i) {
    const double y = T + ph - ph * i / 5.0;
    s << "<line x1=\"" << L << "\" y1=\"" << num(y) << "\" x2=\"" << W - R << "\" y2=\""
      << num(y) << "\" stroke=\"#dddddd\"/>\n"
      << "<text x=\"" << L - 8 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">"
      << num(i / 5.0) << "</text>\n";
  }
  s << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << W - R << "\" y2=\""
    << T + ph << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph
    << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">epoch</text>\n"
    << "<text x=\"16\" y=\"" << T + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << T + ph / 2 << ")\">accuracy</text>\n";
  if (n > 0) {
    s << "<text x=\"" << L << "\" y=\"" << T + ph + 16 << "\" text-anchor=\"middle\">1</text>\n"
      << "<text x=\"" << W - R << "\" y=\"" << T + ph + 16 << "\" text-anchor=\"middle\">" << n
      << "</text>\n";
  }
  const auto x_of = [&](std::size_t i) {
    return n <= 1 ? L + pw / 2 : L + pw * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  const auto series = [&](auto value, const char* color, const char* label, int legend_y) {
    std::string points;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = value(metrics.epochs[i]);
      if (std::isnan(v)) continue;
      points += num(x_of(i)) + "," + num(T + ph - ph * std::clamp(v, 0.0, 1.0)) + " ";
    }
    if (!points.empty()) {
      s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
        << points << "\"/>\n";
    }
    s << "<line x1=\"" << W - R - 110 << "\" y1=\"" << legend_y << "\" x2=\"" << W - R - 90
      << "\" y2=\"" << legend_y << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << W - R - 84 << "\" y=\"" << legend_y + 4 << "\">" << label << "</text>\n";
  };
  series([](const EpochMetrics& e) { return e.train_accuracy; }, "#1f77b4", "train", T + 12);
  series([](const EpochMetrics& e) { return e.test_accuracy; }, "#ff7f0e", "test", T + 30);
  s << "</svg>\n";
  return s.str();
}

std::string confusion_heatmap_svg(const ConfusionMatrix& cm) {
  constexpr int cell = 60, L = 90, T = 60;
  constexpr int W = L + cell * static_cast<int>(kNumEmotions) + 20;
  constexpr int H = T + cell * static_cast<int>(kNumEmotions) + 50;
  std::ostringstream s;
  open_svg(s, W, H);
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << "Confusion matrix (rows: true, columns: predicted)</text>\n";
  for (std::size_t i = 0; i < kNumEmotions; ++i) {
    const std::string label(name_of(kAllEmotions[i]));
    s << "<text x=\"" << L - 6 << "\" y=\"" << T + cell * static_cast<int>(i) + cell / 2 + 4
      << "\" text-anchor=\"end\">" << label << "</text>\n"
      << "<text x=\"" << L + cell * static_cast<int>(i) + cell / 2 << "\" y=\"" << T - 8
      << "\" text-anchor=\"middle\">" << label << "</text>\n";
  }
  for (std::size_t t = 0; t < kNumEmotions; ++t) {
    const std::size_t row = cm.row_sum(t);
    for (std::size_t p = 0; p < kNumEmotions; ++p) {
      const std::size_t v = cm.at(t, p);
      const double rate = row == 0 ? 0.0 : static_cast<double>(v) / static_cast<double>(row);
      const int shade = 255 - static_cast<int>(std::lround(rate * 200.0));
      const int x = L + cell * static_cast<int>(p);
      const int y = T + cell * static_cast<int>(t);
      s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
        << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\" stroke=\"#888888\"/>\n"
        << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
        << "\" text-anchor=\"middle\">" << v << "</text>\n";
    }
  }
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 16 << "\" text-anchor=\"middle\">accuracy "
    << num(cm.accuracy()) << " over " << cm.total() << " records</text>\n</svg>\n";
  return s.str();
}

std::string emotion_bar_svg(const std::string& title,
                            const std::array<std::size_t, kNumEmotions>& counts,
                            const std::array<double, kNumEmotions>& proportions) {
  constexpr int W = 560, H = 360, L = 60, R = 20, T = 50, B = 50;
  const double pw = W - L - R;
  const double ph = H - T - B;
  const double slot = pw / static_cast<double>(kNumEmotions);
  std::ostringstream s;
  open_svg(s, W, H);
  s << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
    << escape(title) << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = T + ph - ph * i / 4.0;
    s << "<line x1=\"" << L << "\" y1=\"" << num(y) << "\" x2=\"" << W - R << "\" y2=\""
      << num(y) << "\" stroke=\"#dddddd\"/>\n"
      << "<text x=\"" << L - 8 << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">"
      << num(i / 4.0) << "</text>\n";
  }
  for (std::size_t i = 0; i < kNumEmotions; ++i) {
    const double h = ph * std::clamp(proportions[i], 0.0, 1.0);
    const double x = L + slot * static_cast<double>(i) + slot * 0.15;
    s << "<rect class=\"bar\" data-emotion=\"" << name_of(kAllEmotions[i]) << "\" x=\"" << num(x)
      << "\" y=\"" << num(T + ph - h) << "\" width=\"" << num(slot * 0.7) << "\" height=\""
      << num(h) << "\" fill=\"#4c72b0\"/>\n"
      << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << num(T + ph - h - 4)
      << "\" text-anchor=\"middle\">" << counts[i] << "</text>\n"
      << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << num(T + ph + 16)
      << "\" text-anchor=\"middle\">" << name_of(kAllEmotions[i]) << "</text>\n";
  }
  s << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << W - R << "\" y2=\"" << T + ph
    << "\" stroke=\"black\"/>\n</svg>\n";
  return s.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

}  // namespace affectline
