#pragma once

// Plot-ready output: CSV tables and a minimal SVG line chart.

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <optional>
#include <tuple>
#include <sstream>
#include <string>
#include <vector>

namespace stagelab {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
  bool step = false;     // draw as a right-continuous step function
  bool markers = false;  // draw points only
};

struct ChartOptions {
  std::string title, x_label, y_label;
  int width = 480, height = 360;
  std::optional<std::pair<double, double>> x_range, y_range;
};

namespace detail {
inline std::string escape_xml(const std::string& s) {
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
}  // namespace detail

inline std::string svg_line_chart(const std::vector<Series>& series, const ChartOptions& opt) {
  constexpr const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  constexpr double left = 56, right = 16, top = 32, bottom = 44;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (opt.x_range) std::tie(x0, x1) = *opt.x_range;
  if (opt.y_range) std::tie(y0, y1) = *opt.y_range;
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream out;
  out.precision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << opt.width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
      << detail::escape_xml(opt.title) << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    out << "<text x=\"" << px(fx) << "\" y=\"" << top + ph + 14 << "\" text-anchor=\"middle\">" << fx << "</text>\n";
    out << "<text x=\"" << left - 4 << "\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">" << fy << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << opt.height - 8 << "\" text-anchor=\"middle\">"
      << detail::escape_xml(opt.x_label) << "</text>\n";
  out << "<text transform=\"translate(14," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << detail::escape_xml(opt.y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* colour = kColours[i % std::size(kColours)];
    if (s.markers) {
      for (const auto& [x, y] : s.points)
        if (std::isfinite(x) && std::isfinite(y))
          out << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"2\" fill=\"" << colour << "\"/>\n";
    } else {
      out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
      bool first = true;
      double prev_y = 0;
      for (const auto& [x, y] : s.points) {
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        if (s.step && !first) out << px(x) << ',' << py(prev_y) << ' ';
        out << px(x) << ',' << py(y) << ' ';
        prev_y = y;
        first = false;
      }
      out << "\"/>\n";
    }
    out << "<text x=\"" << left + 8 << "\" y=\"" << top + 14 + 14 * static_cast<double>(i) << "\" fill=\"" << colour
        << "\">" << detail::escape_xml(s.name) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

// Comma-separated table with a header row; numbers at full precision.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  template <class... Cells>
  void row(const Cells&... cells) {
    std::ostringstream line;
    line.precision(17);
    bool first = true;
    ((line << (first ? "" : ",") << cells, first = false), ...);
    rows_.push_back(line.str());
  }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < columns_.size(); ++i) out += (i ? "," : "") + columns_[i];
    out += "\n";
    for (const auto& r : rows_) out += r + "\n";
    return out;
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::string> rows_;
};

}  // namespace stagelab
