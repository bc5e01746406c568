// Copyright 2026 The trainscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "trainscope/dashboard.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "trainscope/errors.hpp"

namespace trainscope {
namespace {

constexpr double kWidth = 1200.0;
constexpr double kPanelW = 380.0;
constexpr double kPanelH = 250.0;
constexpr double kGap = 20.0;
constexpr double kTop = 50.0;
constexpr double kStripH = 170.0;

struct Box {
  double x, y, w, h;
};

struct Series {
  std::string name;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string px(double v) { return fmt("%.2f", v); }
std::string label(double v) { return fmt("%.3g", v); }

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

class Svg {
 public:
  void rect(double x, double y, double w, double h, const std::string& style) {
    s_ << "<rect x=\"" << px(x) << "\" y=\"" << px(y) << "\" width=\"" << px(w) << "\" height=\"" << px(h)
       << "\" " << style << "/>\n";
  }
  void text(double x, double y, const std::string& t, const std::string& style = "") {
    s_ << "<text x=\"" << px(x) << "\" y=\"" << px(y) << "\"" << (style.empty() ? "" : " " + style) << ">"
       << escape(t) << "</text>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& style) {
    s_ << "<line x1=\"" << px(x1) << "\" y1=\"" << px(y1) << "\" x2=\"" << px(x2) << "\" y2=\"" << px(y2)
       << "\" " << style << "/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
    s_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) s_ << (i ? " " : "") << px(pts[i].first) << ',' << px(pts[i].second);
    s_ << "\"/>\n";
  }
  void raw(const std::string& s) { s_ << s; }
  std::string str() const { return s_.str(); }

 private:
  std::ostringstream s_;
};

void panel_frame(Svg& svg, const Box& b, const std::string& title) {
  svg.rect(b.x, b.y, b.w, b.h, "fill=\"#ffffff\" stroke=\"#999999\"");
  svg.text(b.x + 8, b.y + 18, title, "font-weight=\"bold\"");
}

void placeholder(Svg& svg, const Box& b, const std::string& title) {
  svg.rect(b.x, b.y, b.w, b.h, "fill=\"#eeeeee\" stroke=\"#999999\" stroke-dasharray=\"4 3\"");
  svg.text(b.x + 8, b.y + 18, title, "font-weight=\"bold\" fill=\"#777777\"");
  svg.text(b.x + b.w / 2, b.y + b.h / 2, "not tracked", "text-anchor=\"middle\" fill=\"#777777\"");
}

// Plot area inside a panel, leaving room for the title and tick labels.
Box plot_area(const Box& b) { return {b.x + 55, b.y + 28, b.w - 65, b.h - 50}; }

std::pair<double, double> padded_range(double lo, double hi) {
  if (lo == hi) return {lo - 0.5, hi + 0.5};
  return {lo, hi};
}

void line_panel(Svg& svg, const Box& b, const std::string& title, std::vector<Series> series) {
  for (auto& s : series) {
    std::erase_if(s.points, [](const auto& p) { return !std::isfinite(p.second); });
  }
  std::erase_if(series, [](const Series& s) { return s.points.empty(); });
  if (series.empty()) {
    placeholder(svg, b, title);
    return;
  }
  bool log_y = true;
  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
      log_y = log_y && y > 0.0;
    }
  }
  // log axis only when the values span more than a decade
  log_y = log_y && y_hi / y_lo > 10.0;
  auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  const auto [xa, xb] = padded_range(x_lo, x_hi);
  const auto [ya, yb] = padded_range(ty(y_lo), ty(y_hi));
  panel_frame(svg, b, title + (log_y ? " (log)" : ""));
  const Box a = plot_area(b);
  svg.rect(a.x, a.y, a.w, a.h, "fill=\"none\" stroke=\"#dddddd\"");
  for (const auto& s : series) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& [x, y] : s.points) {
      pts.push_back({a.x + (x - xa) / (xb - xa) * a.w, a.y + a.h - (ty(y) - ya) / (yb - ya) * a.h});
    }
    svg.polyline(pts, s.color);
  }
  svg.text(a.x - 4, a.y + 10, label(y_hi), "text-anchor=\"end\" font-size=\"10\"");
  svg.text(a.x - 4, a.y + a.h, label(y_lo), "text-anchor=\"end\" font-size=\"10\"");
  svg.text(a.x, a.y + a.h + 14, label(x_lo), "font-size=\"10\"");
  svg.text(a.x + a.w, a.y + a.h + 14, label(x_hi), "text-anchor=\"end\" font-size=\"10\"");
  double legend_y = b.y + 18;
  for (const auto& s : series) {
    svg.text(b.x + b.w - 8, legend_y, s.name, "text-anchor=\"end\" font-size=\"10\" fill=\"" + s.color + "\"");
    legend_y += 12;
  }
}

Series scalar_series(const std::vector<TrackEvent>& events, const std::string& name, const std::string& color) {
  Series s{name, color, {}};
  for (const auto& e : events) {
    auto it = e.quantities.find(name);
    if (it != e.quantities.end() && it->second.is_scalar()) {
      s.points.push_back({static_cast<double>(e.iteration), it->second.scalar()});
    }
  }
  return s;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void alpha_panel(Svg& svg, const Box& b, const std::vector<TrackEvent>& events, double fraction) {
  const std::string title = "Alpha distribution";
  std::vector<double> alphas;
  for (const auto& e : events) {
    auto it = e.quantities.find(instrument::kAlpha);
    if (it != e.quantities.end() && it->second.is_scalar() && std::isfinite(it->second.scalar())) {
      alphas.push_back(it->second.scalar());
    }
  }
  if (alphas.empty()) {
    placeholder(svg, b, title);
    return;
  }
  const std::size_t n_last = last_fraction_count(alphas.size(), fraction);
  const std::vector<double> early(alphas.begin(), alphas.end() - static_cast<std::ptrdiff_t>(n_last));
  const std::vector<double> late(alphas.end() - static_cast<std::ptrdiff_t>(n_last), alphas.end());
  constexpr std::size_t bins = 20;
  const BinRange range{-kAlphaClamp, kAlphaClamp, bins};
  panel_frame(svg, b, title);
  const Box a = plot_area(b);
  svg.rect(a.x, a.y, a.w, a.h, "fill=\"none\" stroke=\"#dddddd\"");
  auto draw = [&](const std::vector<double>& values, const std::string& color) {
    if (values.empty()) return;
    const Hist1d h = histogram_1d(values, range);
    const double peak = static_cast<double>(*std::max_element(h.counts.begin(), h.counts.end()));
    const double w = a.w / bins;
    for (std::size_t i = 0; i < bins; ++i) {
      const double height = peak > 0 ? static_cast<double>(h.counts[i]) / peak * a.h : 0.0;
      svg.rect(a.x + static_cast<double>(i) * w, a.y + a.h - height, w, height,
               "fill=\"" + color + "\" fill-opacity=\"0.5\"");
    }
  };
  draw(early, "#888888");
  draw(late, "#e07020");
  // reference lines at -1 (no progress), 0 (valley floor), +1 (mirror step)
  for (double ref : {-1.0, 0.0, 1.0}) {
    const double x = a.x + (ref + kAlphaClamp) / (2 * kAlphaClamp) * a.w;
    svg.line(x, a.y, x, a.y + a.h, "stroke=\"#444444\" stroke-dasharray=\"2 2\"");
  }
  svg.text(a.x, a.y + a.h + 14, label(-kAlphaClamp), "font-size=\"10\"");
  svg.text(a.x + a.w, a.y + a.h + 14, label(kAlphaClamp), "text-anchor=\"end\" font-size=\"10\"");
  svg.text(b.x + b.w - 8, b.y + 18, "all " + std::to_string(early.size()) + ", median " + label(early.empty() ? NAN : median_of(early)),
           "text-anchor=\"end\" font-size=\"10\" fill=\"#666666\"");
  svg.text(b.x + b.w - 8, b.y + 30, "last " + std::to_string(late.size()) + ", median " + label(median_of(late)),
           "text-anchor=\"end\" font-size=\"10\" fill=\"#e07020\"");
}

const TrackEvent* latest_with(const std::vector<TrackEvent>& events, const std::string& name) {
  for (auto it = events.rbegin(); it != events.rend(); ++it) {
    if (it->quantities.count(name)) return &*it;
  }
  return nullptr;
}

double log_scale(std::int64_t count, std::int64_t peak) {
  return peak > 0 ? std::log1p(static_cast<double>(count)) / std::log1p(static_cast<double>(peak)) : 0.0;
}

void hist1d_panel(Svg& svg, const Box& b, const std::vector<TrackEvent>& events) {
  const std::string title = "Gradient elements";
  const TrackEvent* e = latest_with(events, instrument::kGradHist1d);
  const Hist1d* h = e ? std::get_if<Hist1d>(&e->quantities.at(instrument::kGradHist1d).data) : nullptr;
  if (h == nullptr || h->counts.empty()) {
    placeholder(svg, b, title);
    return;
  }
  panel_frame(svg, b, title + " (iteration " + std::to_string(e->iteration) + ", log counts)");
  const Box a = plot_area(b);
  svg.rect(a.x, a.y, a.w, a.h, "fill=\"none\" stroke=\"#dddddd\"");
  const std::int64_t peak = *std::max_element(h->counts.begin(), h->counts.end());
  const double w = a.w / static_cast<double>(h->counts.size());
  for (std::size_t i = 0; i < h->counts.size(); ++i) {
    const double height = log_scale(h->counts[i], peak) * a.h;
    svg.rect(a.x + static_cast<double>(i) * w, a.y + a.h - height, w, height, "fill=\"#3070b0\"");
  }
  svg.text(a.x, a.y + a.h + 14, label(h->edges.front()), "font-size=\"10\"");
  svg.text(a.x + a.w, a.y + a.h + 14, label(h->edges.back()), "text-anchor=\"end\" font-size=\"10\"");
  svg.text(a.x - 4, a.y + 10, label(static_cast<double>(peak)), "text-anchor=\"end\" font-size=\"10\"");
}

void hist2d_panel(Svg& svg, const Box& b, const std::vector<TrackEvent>& events) {
  const std::string title = "Parameters vs gradients";
  const TrackEvent* e = latest_with(events, instrument::kGradHist2d);
  const Hist2d* h = e ? std::get_if<Hist2d>(&e->quantities.at(instrument::kGradHist2d).data) : nullptr;
  if (h == nullptr || h->counts.empty()) {
    placeholder(svg, b, title);
    return;
  }
  panel_frame(svg, b, title + " (iteration " + std::to_string(e->iteration) + ")");
  const Box a = plot_area(b);
  const std::int64_t peak = *std::max_element(h->counts.begin(), h->counts.end());
  const double cw = a.w / static_cast<double>(h->x_bins()), ch = a.h / static_cast<double>(h->y_bins());
  svg.rect(a.x, a.y, a.w, a.h, "fill=\"#ffffff\" stroke=\"#dddddd\"");
  for (std::size_t i = 0; i < h->x_bins(); ++i) {
    for (std::size_t j = 0; j < h->y_bins(); ++j) {
      const std::int64_t c = h->at(i, j);
      if (c == 0) continue;
      svg.rect(a.x + static_cast<double>(i) * cw, a.y + a.h - static_cast<double>(j + 1) * ch, cw, ch,
               "fill=\"#802080\" fill-opacity=\"" + fmt("%.3f", log_scale(c, peak)) + "\"");
    }
  }
  svg.text(a.x, a.y + a.h + 14, label(h->x_edges.front()), "font-size=\"10\"");
  svg.text(a.x + a.w, a.y + a.h + 14, label(h->x_edges.back()), "text-anchor=\"end\" font-size=\"10\"");
  svg.text(a.x - 4, a.y + 10, label(h->y_edges.back()), "text-anchor=\"end\" font-size=\"10\"");
  svg.text(a.x - 4, a.y + a.h, label(h->y_edges.front()), "text-anchor=\"end\" font-size=\"10\"");
}

}  // namespace

std::size_t last_fraction_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("last fraction must lie in (0, 1]");
  const double raw = std::ceil(static_cast<double>(n) * fraction - 1e-9);
  return std::min(n, static_cast<std::size_t>(std::max(raw, 0.0)));
}

bool is_known_quantity(const std::string& name) {
  if (name == instrument::kLoss || name == instrument::kLearningRate) return true;
  if (name == "GradNorm.layers" || name == "HessTrace.layers") return true;
  const std::string prefix = "GradHist1d.layer";
  if (name.rfind(prefix, 0) == 0 && name.size() > prefix.size()) {
    return std::all_of(name.begin() + static_cast<std::ptrdiff_t>(prefix.size()), name.end(),
                       [](char c) { return c >= '0' && c <= '9'; });
  }
  const auto& all = all_instruments();
  return std::find(all.begin(), all.end(), name) != all.end();
}

std::string render_dashboard(const std::vector<TrackEvent>& events, const DashboardOptions& options) {
  last_fraction_count(0, options.last_fraction);
  const double height = kTop + 3 * (kPanelH + kGap) + kStripH + kGap;
  Svg svg;
  svg.raw("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
  svg.raw("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + px(kWidth) + "\" height=\"" +
          px(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n");
  svg.rect(0, 0, kWidth, height, "fill=\"#f7f7f7\"");
  std::string heading = "Training dashboard: " + std::to_string(events.size()) + " events";
  if (!events.empty()) {
    heading += ", iterations " + std::to_string(events.front().iteration) + " to " +
               std::to_string(events.back().iteration);
  }
  svg.text(kGap, 30, heading, "font-size=\"16\" font-weight=\"bold\"");

  auto cell = [](int col, int row) {
    return Box{kGap + col * (kPanelW + kGap), kTop + row * (kPanelH + kGap), kPanelW, kPanelH};
  };
  alpha_panel(svg, cell(0, 0), events, options.last_fraction);
  line_panel(svg, cell(0, 1), "Distance and update size",
             {scalar_series(events, instrument::kDistance, "#1f77b4"),
              scalar_series(events, instrument::kUpdateSize, "#ff7f0e")});
  line_panel(svg, cell(0, 2), "Gradient norm", {scalar_series(events, instrument::kGradNorm, "#2ca02c")});
  line_panel(svg, cell(1, 0), "Gradient tests",
             {scalar_series(events, instrument::kNormTest, "#d62728"),
              scalar_series(events, instrument::kInnerTest, "#9467bd"),
              scalar_series(events, instrument::kOrthoTest, "#8c564b")});
  hist1d_panel(svg, cell(1, 1), events);
  hist2d_panel(svg, cell(1, 2), events);
  line_panel(svg, cell(2, 0), "Max Hessian eigenvalue", {scalar_series(events, instrument::kHessMaxEv, "#17becf")});
  line_panel(svg, cell(2, 1), "Hessian trace", {scalar_series(events, instrument::kHessTrace, "#bcbd22")});
  line_panel(svg, cell(2, 2), "TIC (diagonal)", {scalar_series(events, instrument::kTicDiag, "#e377c2")});

  const double strip_y = kTop + 3 * (kPanelH + kGap);
  const double strip_w = (kWidth - 3 * kGap) / 2;
  line_panel(svg, {kGap, strip_y, strip_w, kStripH}, "Mini-batch loss",
             {scalar_series(events, instrument::kLoss, "#333333")});
  line_panel(svg, {2 * kGap + strip_w, strip_y, strip_w, kStripH}, "Learning rate",
             {scalar_series(events, instrument::kLearningRate, "#333333")});
  svg.raw("</svg>\n");
  return svg.str();
}

}  // namespace trainscope
