#pragma once

// Minimal static SVG charts for the study report.

#include <optional>
#include <string>
#include <vector>

namespace mdam::cli {

struct Series {
  std::string name;
  std::vector<std::optional<double>> values;  // one per category; empty = not drawn
};

/// Grouped vertical bars, one group per category and one colour per series.
std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& categories,
                          const std::vector<Series>& series, const std::string& y_label);

/// Dots on a [0, 1] axis with a dashed horizontal reference line.
std::string dot_chart_svg(const std::string& title, const std::vector<std::string>& categories,
                          const std::vector<Series>& series, const std::string& y_label, double reference);

}  // namespace mdam::cli
