#pragma once

// CSV and SVG writers for dataset histograms and training curves.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "homwarp/data.hpp"
#include "homwarp/train.hpp"

namespace homwarp {

inline void write_stats_csv(std::ostream& out, const DatasetStats& st) {
  out.precision(17);
  out << "element,bin_lo,bin_hi,count\n";
  for (std::size_t e = 0; e < st.elements.size(); ++e) {
    const ElementStats& s = st.elements[e];
    for (std::size_t b = 0; b < s.counts.size(); ++b)
      out << kElementNames[e] << ',' << s.bin_lo(static_cast<int>(b)) << ',' << s.bin_hi(static_cast<int>(b)) << ',' << s.counts[b] << '\n';
  }
}

inline void write_stats_summary(std::ostream& out, const DatasetStats& st) {
  out << "element     mean         stddev       min          max\n";
  char line[160];
  for (std::size_t e = 0; e < st.elements.size(); ++e) {
    const ElementStats& s = st.elements[e];
    std::snprintf(line, sizeof line, "%-6s % .6e % .6e % .6e % .6e\n", kElementNames[e], s.mean, s.stddev, s.min,
                  s.max);
    out << line;
  }
}

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

}  // namespace detail

/// 2 x 4 panel, one histogram per element.
inline void write_stats_svg(std::ostream& out, const DatasetStats& st) {
  constexpr int cell_w = 240, cell_h = 160, pad = 24;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 4 * cell_w << "\" height=\"" << 2 * cell_h
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t e = 0; e < st.elements.size(); ++e) {
    const ElementStats& s = st.elements[e];
    const int x0 = static_cast<int>(e % 4) * cell_w, y0 = static_cast<int>(e / 4) * cell_h;
    const std::size_t peak = std::max<std::size_t>(1, *std::max_element(s.counts.begin(), s.counts.end()));
    const double plot_w = cell_w - 2.0 * pad, plot_h = cell_h - 2.0 * pad;
    const double bar_w = plot_w / static_cast<double>(s.counts.size());
    out << "<g>\n<text x=\"" << x0 + pad << "\" y=\"" << y0 + 14 << "\">" << kElementNames[e]
        << "  mean " << detail::fmt(s.mean) << "  sd " << detail::fmt(s.stddev) << "</text>\n";
    for (std::size_t b = 0; b < s.counts.size(); ++b) {
      const double h = plot_h * static_cast<double>(s.counts[b]) / static_cast<double>(peak);
      out << "<rect x=\"" << x0 + pad + bar_w * static_cast<double>(b) << "\" y=\"" << y0 + pad + plot_h - h
          << "\" width=\"" << bar_w << "\" height=\"" << h << "\" fill=\"steelblue\"/>\n";
    }
    out << "<text x=\"" << x0 + pad << "\" y=\"" << y0 + cell_h - 6 << "\">" << detail::fmt(s.min) << "</text>\n";
    out << "<text x=\"" << x0 + cell_w - pad << "\" y=\"" << y0 + cell_h - 6 << "\" text-anchor=\"end\">"
        << detail::fmt(s.max) << "</text>\n</g>\n";
  }
  out << "</svg>\n";
}

inline void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve, int stage = 0) {
  out.precision(9);
  out << "stage,step,lr,loss,l2,l1,batch_corner_error_px\n";
  for (const auto& p : curve)
    out << stage << ',' << p.step << ',' << p.lr << ',' << p.loss << ',' << p.l2 << ',' << p.l1 << ','
        << p.corner_error << '\n';
}

/// Loss against step, linear axes.
inline void write_curve_svg(std::ostream& out, std::span<const CurvePoint> curve) {
  constexpr double w = 640, h = 320, pad = 40;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  if (!curve.empty()) {
    double hi = 0.0;
    for (const auto& p : curve)
      if (std::isfinite(p.loss)) hi = std::max(hi, p.loss);
    if (hi <= 0.0) hi = 1.0;
    const double last = static_cast<double>(std::max<long>(1, curve.back().step));
    out << "<polyline fill=\"none\" stroke=\"steelblue\" points=\"";
    for (const auto& p : curve) {
      const double x = pad + (w - 2 * pad) * static_cast<double>(p.step) / last;
      const double y = h - pad - (h - 2 * pad) * std::clamp(p.loss / hi, 0.0, 1.0);
      out << x << ',' << y << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << pad << "\" y=\"" << pad - 8 << "\">loss (max " << detail::fmt(hi) << ")</text>\n";
    out << "<text x=\"" << w - pad << "\" y=\"" << h - 12 << "\" text-anchor=\"end\">step "
        << curve.back().step << "</text>\n";
  }
  out << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad << "\" y2=\"" << h - pad
      << "\" stroke=\"black\"/>\n<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
      << h - pad << "\" stroke=\"black\"/>\n</svg>\n";
}

}  // namespace homwarp
