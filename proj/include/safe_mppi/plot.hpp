// Copyright 2026 The safe_mppi Authors.
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

// Minimal SVG rendering of closed-loop runs: obstacles, goal disks with
// their windows, and one polyline per trajectory.

#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "safe_mppi/simkit.hpp"

namespace safe_mppi {

struct PlotSeries {
  std::string label;
  const SimTrace* trace = nullptr;
};

namespace detail {

class SvgCanvas {
 public:
  SvgCanvas(double xmin, double xmax, double ymin, double ymax, double width_px)
      : xmin_(xmin), ymax_(ymax) {
    scale_ = width_px / (xmax - xmin);
    width_ = width_px;
    height_ = (ymax - ymin) * scale_;
  }

  double px(double x) const { return (x - xmin_) * scale_; }
  double py(double y) const { return (ymax_ - y) * scale_; }
  double len(double d) const { return d * scale_; }
  double width() const { return width_; }
  double height() const { return height_; }

 private:
  double xmin_;
  double ymax_;
  double scale_;
  double width_;
  double height_;
};

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string fmt_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
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

inline std::string render_svg(const Scenario& sc, const std::vector<PlotSeries>& series, double width_px = 640.0) {
  static constexpr std::array<const char*, 6> kColors = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const PositionIndices pos = sc.model.position();
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  auto grow = [&](double x, double y, double r) {
    xmin = std::min(xmin, x - r);
    xmax = std::max(xmax, x + r);
    ymin = std::min(ymin, y - r);
    ymax = std::max(ymax, y + r);
  };
  for (const auto& g : sc.tasks.goals) grow(g.position.x, g.position.y, g.radius);
  for (const auto& o : sc.tasks.avoids) grow(o.position.x, o.position.y, o.physical_radius);
  grow(sc.initial_state(pos.x), sc.initial_state(pos.y), 0.0);
  for (const auto& s : series) {
    for (const auto& x : s.trace->state) {
      if (std::isfinite(x(pos.x)) && std::isfinite(x(pos.y))) grow(x(pos.x), x(pos.y), 0.0);
    }
  }
  const double pad = 0.08 * std::max({xmax - xmin, ymax - ymin, 1.0});
  detail::SvgCanvas cv(xmin - pad, xmax + pad, ymin - pad, ymax + pad, width_px);
  using detail::fmt;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(cv.width()) << "\" height=\""
     << fmt(cv.height()) << "\" viewBox=\"0 0 " << fmt(cv.width()) << ' ' << fmt(cv.height()) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& o : sc.tasks.avoids) {
    os << "<circle cx=\"" << fmt(cv.px(o.position.x)) << "\" cy=\"" << fmt(cv.py(o.position.y)) << "\" r=\""
       << fmt(cv.len(o.physical_radius)) << "\" fill=\"#555555\" fill-opacity=\"0.6\"/>\n";
  }
  for (std::size_t i = 0; i < sc.tasks.goals.size(); ++i) {
    const auto& g = sc.tasks.goals[i];
    os << "<circle cx=\"" << fmt(cv.px(g.position.x)) << "\" cy=\"" << fmt(cv.py(g.position.y)) << "\" r=\""
       << fmt(cv.len(g.radius)) << "\" fill=\"#2ca02c\" fill-opacity=\"0.25\" stroke=\"#2ca02c\"/>\n";
    std::string label = "g" + std::to_string(i + 1);
    if (g.window) label += " [" + detail::fmt_label(g.window->t1) + ", " + detail::fmt_label(g.window->t2) + "] s";
    os << "<text x=\"" << fmt(cv.px(g.position.x + g.radius)) << "\" y=\"" << fmt(cv.py(g.position.y + g.radius))
       << "\" font-size=\"12\" font-family=\"sans-serif\">" << detail::xml_escape(label) << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % kColors.size()];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& x : series[s].trace->state) {
      if (!std::isfinite(x(pos.x)) || !std::isfinite(x(pos.y))) break;
      os << fmt(cv.px(x(pos.x))) << ',' << fmt(cv.py(x(pos.y))) << ' ';
    }
    os << "\"/>\n";
    if (!series[s].label.empty()) {
      os << "<text x=\"10\" y=\"" << fmt(18.0 + 16.0 * static_cast<double>(s)) << "\" fill=\"" << color
         << "\" font-size=\"13\" font-family=\"sans-serif\">" << detail::xml_escape(series[s].label) << "</text>\n";
    }
  }
  os << "<rect x=\"" << fmt(cv.px(sc.initial_state(pos.x)) - 4) << "\" y=\"" << fmt(cv.py(sc.initial_state(pos.y)) - 4)
     << "\" width=\"8\" height=\"8\" fill=\"black\"/>\n";
  os << "</svg>\n";
  return os.str();
}

inline std::string render_svg(const Scenario& sc, const SimTrace& trace) {
  return render_svg(sc, {PlotSeries{"", &trace}});
}

}  // namespace safe_mppi
