#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace mdam::cli {

namespace {

constexpr const char* kPalette[] = {"#1b6ca8", "#d1495b", "#edae49", "#66a182", "#8d6a9f", "#2e4057"};
constexpr double kWidth = 900, kHeight = 460, kLeft = 70, kRight = 150, kTop = 40, kBottom = 110;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  std::ostringstream os;
  double plot_w = kWidth - kLeft - kRight;
  double plot_h = kHeight - kTop - kBottom;
  double ymax = 1.0;

  double y(double v) const { return kTop + plot_h * (1.0 - v / ymax); }
  double group_x(std::size_t k, std::size_t n) const { return kLeft + plot_w * (static_cast<double>(k) + 0.5) / static_cast<double>(n); }
};

void open(Frame& f, const std::string& title, const std::string& y_label) {
  f.os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  f.os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f.os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n";
  f.os << "<text transform=\"translate(18," << kTop + f.plot_h / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
       << esc(y_label) << "</text>\n";
}

void axes(Frame& f, const std::vector<std::string>& categories, int ticks) {
  for (int t = 0; t <= ticks; ++t) {
    const double v = f.ymax * t / ticks;
    f.os << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + f.plot_w << "\" y1=\"" << fmt(f.y(v)) << "\" y2=\""
         << fmt(f.y(v)) << "\" stroke=\"#e5e5e5\"/>\n";
    f.os << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(f.y(v) + 4) << "\" text-anchor=\"end\">" << fmt(v)
         << "</text>\n";
  }
  f.os << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft << "\" y1=\"" << kTop << "\" y2=\"" << kTop + f.plot_h
       << "\" stroke=\"black\"/>\n";
  f.os << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + f.plot_w << "\" y1=\"" << kTop + f.plot_h << "\" y2=\""
       << kTop + f.plot_h << "\" stroke=\"black\"/>\n";
  for (std::size_t k = 0; k < categories.size(); ++k) {
    const double x = f.group_x(k, categories.size());
    f.os << "<text transform=\"translate(" << fmt(x) << ',' << kTop + f.plot_h + 12
         << ") rotate(40)\" text-anchor=\"start\">" << esc(categories[k]) << "</text>\n";
  }
}

void legend(Frame& f, const std::vector<Series>& series) {
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double y = kTop + 10 + 20.0 * static_cast<double>(s);
    const double x = kWidth - kRight + 20;
    f.os << "<g class=\"legend\"><rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\""
         << kPalette[s % 6] << "\"/><text x=\"" << x + 18 << "\" y=\"" << y + 1 << "\">" << esc(series[s].name)
         << "</text></g>\n";
  }
}

double max_value(const std::vector<Series>& series) {
  double m = 0.0;
  for (const auto& s : series) {
    for (const auto& v : s.values) {
      if (v && std::isfinite(*v)) m = std::max(m, *v);
    }
  }
  return m;
}

}  // namespace

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& categories,
                          const std::vector<Series>& series, const std::string& y_label) {
  Frame f;
  const double m = max_value(series);
  f.ymax = m > 0.0 ? m * 1.1 : 1.0;
  open(f, title, y_label);
  axes(f, categories, 5);
  const double group_w = f.plot_w / std::max<std::size_t>(categories.size(), 1) * 0.8;
  const double bar_w = group_w / std::max<std::size_t>(series.size(), 1);
  for (std::size_t s = 0; s < series.size(); ++s) {
    f.os << "<g class=\"series\" data-name=\"" << esc(series[s].name) << "\" fill=\"" << kPalette[s % 6] << "\">\n";
    for (std::size_t k = 0; k < categories.size() && k < series[s].values.size(); ++k) {
      const auto& v = series[s].values[k];
      if (!v || !std::isfinite(*v)) continue;
      const double x = f.group_x(k, categories.size()) - group_w / 2 + bar_w * static_cast<double>(s);
      f.os << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(f.y(*v)) << "\" width=\"" << fmt(bar_w * 0.92)
           << "\" height=\"" << fmt(f.y(0) - f.y(*v)) << "\"><title>" << esc(categories[k]) << ": " << fmt(*v)
           << "</title></rect>\n";
    }
    f.os << "</g>\n";
  }
  legend(f, series);
  f.os << "</svg>\n";
  return f.os.str();
}

std::string dot_chart_svg(const std::string& title, const std::vector<std::string>& categories,
                          const std::vector<Series>& series, const std::string& y_label, double reference) {
  Frame f;
  f.ymax = 1.0;
  open(f, title, y_label);
  axes(f, categories, 10);
  f.os << "<line class=\"reference\" data-value=\"" << fmt(reference) << "\" x1=\"" << kLeft << "\" x2=\""
       << kLeft + f.plot_w << "\" y1=\"" << fmt(f.y(reference)) << "\" y2=\"" << fmt(f.y(reference))
       << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
  f.os << "<text x=\"" << kLeft + f.plot_w + 4 << "\" y=\"" << fmt(f.y(reference) + 4) << "\">" << fmt(reference)
       << "</text>\n";
  const double spread = f.plot_w / std::max<std::size_t>(categories.size(), 1) * 0.5;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double off = series.size() > 1 ? spread * (static_cast<double>(s) / (series.size() - 1) - 0.5) : 0.0;
    f.os << "<g class=\"series\" data-name=\"" << esc(series[s].name) << "\" fill=\"" << kPalette[s % 6] << "\">\n";
    for (std::size_t k = 0; k < categories.size() && k < series[s].values.size(); ++k) {
      const auto& v = series[s].values[k];
      if (!v || !std::isfinite(*v)) continue;
      f.os << "<circle cx=\"" << fmt(f.group_x(k, categories.size()) + off) << "\" cy=\"" << fmt(f.y(*v))
           << "\" r=\"5\"><title>" << esc(categories[k]) << ": " << fmt(*v) << "</title></circle>\n";
    }
    f.os << "</g>\n";
  }
  legend(f, series);
  f.os << "</svg>\n";
  return f.os.str();
}

}  // namespace mdam::cli
