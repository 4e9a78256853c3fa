// Copyright 2026 The divcap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal static SVG charts for ablation curves and encoding scatters.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace divcap::plot {

struct Series {
  std::string label;
  std::vector<double> x, y;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

struct Frame {
  double x0, x1, y0, y1;
  double w = 480, h = 320, pad = 50;
  double sx(double x) const { return pad + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (w - 2 * pad); }
  double sy(double y) const { return h - pad - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (h - 2 * pad); }
};

inline Frame frame_for(const std::vector<double>& xs, const std::vector<double>& ys) {
  Frame f{0, 1, 0, 1};
  if (!xs.empty()) {
    auto [xa, xb] = std::minmax_element(xs.begin(), xs.end());
    auto [ya, yb] = std::minmax_element(ys.begin(), ys.end());
    f.x0 = *xa, f.x1 = *xb, f.y0 = *ya, f.y1 = *yb;
    const double my = (f.y1 - f.y0) * 0.05 + 1e-12;
    f.y0 -= my, f.y1 += my;
  }
  return f;
}

inline void axes(std::ostringstream& s, const Frame& f, const std::string& title, const std::string& xl,
                 const std::string& yl) {
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << f.w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  s << "<line x1=\"" << f.pad << "\" y1=\"" << f.h - f.pad << "\" x2=\"" << f.w - f.pad << "\" y2=\""
    << f.h - f.pad << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << f.pad << "\" y1=\"" << f.pad << "\" x2=\"" << f.pad << "\" y2=\"" << f.h - f.pad
    << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << f.w / 2 << "\" y=\"" << f.h - 10 << "\" text-anchor=\"middle\" font-size=\"12\">" << xl
    << "</text>\n";
  s << "<text x=\"14\" y=\"" << f.h / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
    << f.h / 2 << ")\">" << yl << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s << "<text x=\"" << f.sx(xv) << "\" y=\"" << f.h - f.pad + 14 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << num(xv) << "</text>\n";
    s << "<text x=\"" << f.pad - 4 << "\" y=\"" << f.sy(yv) + 3 << "\" text-anchor=\"end\" font-size=\"10\">"
      << num(yv) << "</text>\n";
  }
}

}  // namespace detail

inline std::string line_chart(const std::vector<Series>& series, const std::string& title, const std::string& xl,
                              const std::string& yl) {
  std::vector<double> xs, ys;
  for (const auto& s : series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  const auto f = detail::frame_for(xs, ys);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.w << "\" height=\"" << f.h << "\">\n";
  detail::axes(s, f, title, xl, yl);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& se = series[i];
    s << "<polyline fill=\"none\" stroke=\"" << detail::color(i) << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < se.x.size(); ++k) s << f.sx(se.x[k]) << ',' << f.sy(se.y[k]) << ' ';
    s << "\"/>\n";
    for (std::size_t k = 0; k < se.x.size(); ++k)
      s << "<circle cx=\"" << f.sx(se.x[k]) << "\" cy=\"" << f.sy(se.y[k]) << "\" r=\"3\" fill=\""
        << detail::color(i) << "\"/>\n";
    s << "<text x=\"" << f.w - f.pad + 4 << "\" y=\"" << f.pad + 14 * static_cast<double>(i)
      << "\" font-size=\"10\" fill=\"" << detail::color(i) << "\">" << se.label << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

/// Points colored by group index.
inline std::string scatter(const std::vector<double>& x, const std::vector<double>& y, const std::vector<int>& group,
                           const std::string& title) {
  const auto f = detail::frame_for(x, y);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.w << "\" height=\"" << f.h << "\">\n";
  detail::axes(s, f, title, "component 1", "component 2");
  for (std::size_t i = 0; i < x.size(); ++i)
    s << "<circle cx=\"" << f.sx(x[i]) << "\" cy=\"" << f.sy(y[i]) << "\" r=\"3\" fill=\""
      << detail::color(static_cast<std::size_t>(group[i])) << "\" fill-opacity=\"0.8\"/>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace divcap::plot
