#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace echelon {

// Minimal SVG chart output; charts are pure functions of the series passed
// in, so re-rendering never changes numbers.
struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

namespace svg_detail {

constexpr int kWidth = 720;
constexpr int kHeight = 440;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 50;

inline const char* color(std::size_t i) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return kColors[i % 8];
}

struct Scale {
  double lo, hi;
  double to_px(double v, double px_lo, double px_hi) const {
    const double f = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    return px_lo + f * (px_hi - px_lo);
  }
};

inline Scale fit(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace svg_detail

inline void write_line_chart(const std::string& path, const std::string& title,
                             const std::string& x_label,
                             const std::string& y_label,
                             const std::vector<Series>& series) {
  using namespace svg_detail;
  double x_lo = std::numeric_limits<double>::max(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
    }
  const Scale sx = fit(x_lo, x_hi);
  const Scale sy = fit(y_lo, y_hi);
  const double px0 = kMarginLeft, px1 = kWidth - kMarginRight;
  const double py0 = kHeight - kMarginBottom, py1 = kMarginTop;

  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth
      << "' height='" << kHeight << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << kWidth / 2 << "' y='24' text-anchor='middle' "
      << "font-size='16'>" << title << "</text>\n";
  out << "<line x1='" << px0 << "' y1='" << py0 << "' x2='" << px1
      << "' y2='" << py0 << "' stroke='black'/>\n";
  out << "<line x1='" << px0 << "' y1='" << py0 << "' x2='" << px0
      << "' y2='" << py1 << "' stroke='black'/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = sx.lo + (sx.hi - sx.lo) * k / 4.0;
    const double fy = sy.lo + (sy.hi - sy.lo) * k / 4.0;
    out << "<text x='" << sx.to_px(fx, px0, px1) << "' y='" << py0 + 18
        << "' text-anchor='middle' font-size='11'>" << fx << "</text>\n";
    out << "<text x='" << px0 - 8 << "' y='" << sy.to_px(fy, py0, py1) + 4
        << "' text-anchor='end' font-size='11'>" << fy << "</text>\n";
  }
  out << "<text x='" << (px0 + px1) / 2 << "' y='" << kHeight - 12
      << "' text-anchor='middle' font-size='13'>" << x_label << "</text>\n";
  out << "<text x='16' y='" << (py0 + py1) / 2
      << "' text-anchor='middle' font-size='13' transform='rotate(-90 16 "
      << (py0 + py1) / 2 << ")'>" << y_label << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    out << "<polyline fill='none' stroke='" << color(si)
        << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      out << sx.to_px(s.x[i], px0, px1) << ',' << sy.to_px(s.y[i], py0, py1)
          << ' ';
    out << "'/>\n";
    out << "<text x='" << px1 - 150 << "' y='" << py1 + 16 * (si + 1)
        << "' font-size='12' fill='" << color(si) << "'>" << s.label
        << "</text>\n";
  }
  out << "</svg>\n";
}

inline void write_bar_chart(const std::string& path, const std::string& title,
                            const std::string& y_label,
                            const std::vector<std::string>& labels,
                            const std::vector<double>& values) {
  using namespace svg_detail;
  double y_hi = 0.0, y_lo = 0.0;
  for (double v : values) {
    y_hi = std::max(y_hi, v);
    y_lo = std::min(y_lo, v);
  }
  const Scale sy = fit(y_lo, y_hi);
  const double px0 = kMarginLeft, px1 = kWidth - kMarginRight;
  const double py0 = kHeight - kMarginBottom, py1 = kMarginTop;
  const double band = (px1 - px0) / std::max<std::size_t>(1, values.size());

  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth
      << "' height='" << kHeight << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << kWidth / 2 << "' y='24' text-anchor='middle' "
      << "font-size='16'>" << title << "</text>\n";
  const double zero_y = sy.to_px(std::max(0.0, sy.lo), py0, py1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = px0 + band * static_cast<double>(i) + band * 0.15;
    const double y = sy.to_px(values[i], py0, py1);
    const double top = std::min(y, zero_y);
    const double h = std::fabs(zero_y - y);
    out << "<rect x='" << x << "' y='" << top << "' width='" << band * 0.7
        << "' height='" << h << "' fill='" << color(i) << "'/>\n";
    out << "<text x='" << x + band * 0.35 << "' y='" << py0 + 18
        << "' text-anchor='middle' font-size='11'>" << labels[i]
        << "</text>\n";
    out << "<text x='" << x + band * 0.35 << "' y='" << top - 4
        << "' text-anchor='middle' font-size='10'>" << values[i]
        << "</text>\n";
  }
  out << "<line x1='" << px0 << "' y1='" << py0 << "' x2='" << px1
      << "' y2='" << py0 << "' stroke='black'/>\n";
  out << "<text x='16' y='" << (py0 + py1) / 2
      << "' text-anchor='middle' font-size='13' transform='rotate(-90 16 "
      << (py0 + py1) / 2 << ")'>" << y_label << "</text>\n";
  out << "</svg>\n";
}

}  // namespace echelon
