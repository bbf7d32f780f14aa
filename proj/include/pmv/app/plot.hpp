#pragma once

// Minimal static SVG line charts. Output depends only on the input numbers, so
// re-rendering the same table gives identical bytes.

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pmv/core/csv.hpp"

namespace pmv::app {

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // sorted by x
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
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

inline std::string px(double v) { return fmt_num(v, 2); }

/// Rounds the span [lo, hi] out to a 1-2-5 tick step.
inline std::vector<double> ticks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double t = std::floor(lo / step) * step; t <= hi + step * 1e-9; t += step) out.push_back(t);
  if (out.back() < hi) out.push_back(out.back() + step);
  return out;
}

inline std::string tick_label(double v) {
  std::ostringstream s;
  s << (std::abs(v) < 1e-12 ? 0.0 : v);
  return s.str();
}

}  // namespace detail

inline std::string render_svg(const PlotSpec& spec) {
  using detail::px;
  constexpr double W = 640, H = 420, L = 70, R = 170, T = 40, B = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : spec.series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmin > xmax) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  const auto xt = detail::ticks(xmin, xmax);
  const auto yt = detail::ticks(std::min(ymin, 0.0), ymax);
  const double x0 = xt.front(), x1 = xt.back(), y0 = yt.front(), y1 = yt.back();
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << px(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << detail::xml_escape(spec.title) << "</text>\n";
  for (double t : xt) {
    o << "<line x1=\"" << px(sx(t)) << "\" y1=\"" << px(T) << "\" x2=\"" << px(sx(t)) << "\" y2=\""
      << px(H - B) << "\" stroke=\"#e0e0e0\"/>\n";
    o << "<text x=\"" << px(sx(t)) << "\" y=\"" << px(H - B + 18) << "\" text-anchor=\"middle\">"
      << detail::tick_label(t) << "</text>\n";
  }
  for (double t : yt) {
    o << "<line x1=\"" << px(L) << "\" y1=\"" << px(sy(t)) << "\" x2=\"" << px(W - R) << "\" y2=\""
      << px(sy(t)) << "\" stroke=\"#e0e0e0\"/>\n";
    o << "<text x=\"" << px(L - 8) << "\" y=\"" << px(sy(t) + 4) << "\" text-anchor=\"end\">"
      << detail::tick_label(t) << "</text>\n";
  }
  o << "<rect x=\"" << px(L) << "\" y=\"" << px(T) << "\" width=\"" << px(W - L - R) << "\" height=\""
    << px(H - T - B) << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << px(L + (W - L - R) / 2) << "\" y=\"" << px(H - 15)
    << "\" text-anchor=\"middle\">" << detail::xml_escape(spec.x_label) << "</text>\n";
  o << "<text transform=\"translate(18," << px(T + (H - T - B) / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << detail::xml_escape(spec.y_label) << "</text>\n";

  for (std::size_t i = 0; i < spec.series.size(); ++i) {
    const auto& s = spec.series[i];
    const char* color = colors[i % std::size(colors)];
    std::string path;
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      path += (path.empty() ? "" : " ") + px(sx(x)) + "," + px(sy(y));
      o << "<circle cx=\"" << px(sx(x)) << "\" cy=\"" << px(sy(y)) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    }
    if (!path.empty())
      o << "<polyline points=\"" << path << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n";
    const double ly = T + 10 + 18.0 * static_cast<double>(i);
    o << "<line x1=\"" << px(W - R + 12) << "\" y1=\"" << px(ly) << "\" x2=\"" << px(W - R + 32)
      << "\" y2=\"" << px(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << px(W - R + 38) << "\" y=\"" << px(ly + 4) << "\">" << detail::xml_escape(s.label)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// One chart per metric from a sweep aggregate table, one series per (mode, vital).
inline std::map<std::string, std::string> sweep_plots(const CsvTable& aggregate) {
  const std::string axis = aggregate.row_count() ? aggregate.cell(0, "axis") : "axis";
  std::map<std::string, std::string> files;
  for (const auto& [metric, title] : std::vector<std::pair<std::string, std::string>>{
           {"accuracy", "Accuracy (<3 bpm)"}, {"rmse_bpm", "RMSE (bpm)"}}) {
    std::map<std::string, PlotSeries> by_label;
    for (std::size_t r = 0; r < aggregate.row_count(); ++r) {
      const std::string label = aggregate.cell(r, "mode") + " " + aggregate.cell(r, "vital");
      auto& s = by_label[label];
      s.label = label;
      s.points.emplace_back(aggregate.number(r, "axis_value"), aggregate.number(r, metric));
    }
    PlotSpec spec;
    spec.title = title + " vs " + axis;
    spec.x_label = axis;
    spec.y_label = title;
    for (auto& [label, s] : by_label) {
      std::sort(s.points.begin(), s.points.end());
      spec.series.push_back(std::move(s));
    }
    files[(metric == "accuracy" ? "accuracy" : "rmse") + std::string(".svg")] = render_svg(spec);
  }
  return files;
}

}  // namespace pmv::app
