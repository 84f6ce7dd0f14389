#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "repdrift/experiment.hpp"
#include "repdrift/metrics.hpp"

namespace repdrift::plot {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
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

inline const char* color(MetricKind m) {
  switch (m) {
    case MetricKind::continual: return "#1f77b4";
    case MetricKind::diagnostic: return "#d62728";
    case MetricKind::procrustes: return "#2ca02c";
    case MetricKind::feature_transfer: return "#7f7f7f";
  }
  return "#000000";
}

inline const char* class_color(std::size_t c) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[c % 10];
}

/// SVG 1.1 document built from raw element strings.
class Canvas {
 public:
  Canvas(double width, double height) : width_(width), height_(height) {}

  void add(std::string element) { body_ += "  " + element + "\n"; }
  void open(const std::string& tag) { body_ += "  " + tag + "\n"; }
  void close(const std::string& name) { body_ += "  </" + name + ">\n"; }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double w = 1.0) {
    add("<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
        "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(w) + "\"/>");
  }

  void text(double x, double y, const std::string& s, const std::string& anchor = "middle", double size = 11) {
    add("<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" + num(size) +
        "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>");
  }

  static std::string points(const std::vector<std::pair<double, double>>& pts) {
    std::string s;
    for (const auto& [x, y] : pts) s += (s.empty() ? "" : " ") + num(x) + "," + num(y);
    return s;
  }

  std::string str() const {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n"
           "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
           num(width_) + "\" height=\"" + num(height_) + "\" viewBox=\"0 0 " + num(width_) + " " + num(height_) +
           "\">\n  <rect x=\"0\" y=\"0\" width=\"" + num(width_) + "\" height=\"" + num(height_) +
           "\" fill=\"white\"/>\n" + body_ + "</svg>\n";
  }

 private:
  double width_, height_;
  std::string body_;
};

/// Rectangular plotting area with data-to-pixel maps.
struct Panel {
  double left, top, width, height;
  double xmin, xmax, ymin, ymax;

  double px(double x) const { return left + (x - xmin) / (xmax - xmin) * width; }
  double py(double y) const { return top + height - (y - ymin) / (ymax - ymin) * height; }
  double yscale() const { return height / (ymax - ymin); }

  void axes(Canvas& c, const std::string& title, const std::string& xlabel, const std::string& ylabel,
            const std::vector<std::pair<double, std::string>>& xticks, int yticks = 5) const {
    c.line(left, top + height, left + width, top + height, "#000000");
    c.line(left, top, left, top + height, "#000000");
    for (const auto& [x, label] : xticks) {
      c.line(px(x), top + height, px(x), top + height + 4, "#000000");
      c.text(px(x), top + height + 16, label);
    }
    for (int i = 0; i <= yticks; ++i) {
      const double y = ymin + (ymax - ymin) * i / yticks;
      c.line(left - 4, py(y), left, py(y), "#000000");
      c.line(left, py(y), left + width, py(y), "#e0e0e0", 0.5);
      char buf[16];
      std::snprintf(buf, sizeof buf, "%.2f", std::abs(y) < 1e-12 ? 0.0 : y);
      c.text(left - 6, py(y) + 4, buf, "end");
    }
    c.text(left + width / 2, top - 8, title, "middle", 13);
    c.text(left + width / 2, top + height + 34, xlabel);
    c.add("<text x=\"" + num(left - 40) + "\" y=\"" + num(top + height / 2) +
          "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 " +
          num(left - 40) + " " + num(top + height / 2) + ")\">" + escape(ylabel) + "</text>");
  }
};

struct SeriesPoint {
  double x;
  MeanStderr stats;
};

/// Mean polyline with a translucent ±stderr band; a single point gets a marker and no band.
inline void draw_series(Canvas& c, const Panel& p, const std::vector<SeriesPoint>& pts, const std::string& colour,
                        const std::string& name) {
  if (pts.empty()) return;
  std::string data_t, data_mean, data_se;
  for (const auto& s : pts) {
    data_t += (data_t.empty() ? "" : " ") + exact(s.x);
    data_mean += (data_mean.empty() ? "" : " ") + exact(s.stats.mean);
    data_se += (data_se.empty() ? "" : " ") + exact(s.stats.stderr_);
  }
  c.open("<g class=\"series\" data-name=\"" + escape(name) + "\" data-x=\"" + data_t + "\" data-mean=\"" +
         data_mean + "\" data-stderr=\"" + data_se + "\">");
  if (pts.size() >= 2) {
    std::vector<std::pair<double, double>> band;
    for (const auto& s : pts) band.emplace_back(p.px(s.x), p.py(s.stats.mean + s.stats.stderr_));
    for (auto it = pts.rbegin(); it != pts.rend(); ++it)
      band.emplace_back(p.px(it->x), p.py(it->stats.mean - it->stats.stderr_));
    c.add("<polygon class=\"band\" points=\"" + Canvas::points(band) + "\" fill=\"" + colour +
          "\" fill-opacity=\"0.2\" stroke=\"none\"/>");
    std::vector<std::pair<double, double>> mean;
    for (const auto& s : pts) mean.emplace_back(p.px(s.x), p.py(s.stats.mean));
    c.add("<polyline class=\"mean\" points=\"" + Canvas::points(mean) + "\" fill=\"none\" stroke=\"" + colour +
          "\" stroke-width=\"2\"/>");
  } else {
    const auto& s = pts.front();
    if (s.stats.stderr_ > 0.0)
      c.line(p.px(s.x), p.py(s.stats.mean - s.stats.stderr_), p.px(s.x), p.py(s.stats.mean + s.stats.stderr_),
             colour, 1.5);
  }
  for (const auto& s : pts)
    c.add("<circle cx=\"" + num(p.px(s.x)) + "\" cy=\"" + num(p.py(s.stats.mean)) + "\" r=\"3\" fill=\"" + colour +
          "\"/>");
  c.close("g");
}

inline void legend(Canvas& c, double x, double y, const std::vector<std::pair<std::string, std::string>>& entries) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double yy = y + 16.0 * static_cast<double>(i);
    c.add("<rect x=\"" + num(x) + "\" y=\"" + num(yy - 8) + "\" width=\"12\" height=\"8\" fill=\"" +
          entries[i].second + "\"/>");
    c.text(x + 16, yy, entries[i].first, "start", 10);
  }
}

inline std::string width_label(std::size_t w) { return "h_L = " + std::to_string(w); }

/// Mean ± stderr over seeds of the task-averaged accuracy against relative time, one panel per width.
inline std::string trajectories_svg(const std::vector<SummaryRow>& summary) {
  std::set<std::size_t> widths;
  int max_t = 0;
  for (const auto& r : summary)
    if (r.quantity == "trajectory") {
      widths.insert(r.width);
      max_t = std::max(max_t, *r.t);
    }
  const double pw = 300, ph = 220;
  Canvas c(80 + (pw + 90) * static_cast<double>(std::max<std::size_t>(widths.size(), 1)), ph + 160);
  double left = 70;
  for (std::size_t w : widths) {
    const Panel p{left, 40, pw, ph, -1.5, static_cast<double>(std::max(max_t, 1)) + 0.5, 0.0, 1.0};
    std::vector<std::pair<double, std::string>> ticks;
    for (int t = -1; t <= max_t; ++t) ticks.emplace_back(t, std::to_string(t));
    c.open("<g class=\"panel\" data-width=\"" + std::to_string(w) + "\" data-yscale=\"" + exact(p.yscale()) +
           "\">");
    p.axes(c, width_label(w), "tasks since onset (t)", "accuracy", ticks);
    for (MetricKind m : kAllMetrics) {
      std::vector<SeriesPoint> pts;
      for (const auto& r : summary)
        if (r.quantity == "trajectory" && r.width == w && r.metric == to_string(m))
          pts.push_back({static_cast<double>(*r.t), r.stats});
      std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.x < b.x; });
      draw_series(c, p, pts, color(m), std::string(to_string(m)));
    }
    c.close("g");
    left += pw + 90;
  }
  std::vector<std::pair<std::string, std::string>> entries;
  for (MetricKind m : kAllMetrics) entries.emplace_back(std::string(to_string(m)), color(m));
  legend(c, 80, ph + 100, entries);
  return c.str();
}

/// Scalar summary quantity against final-hidden width (categorical axis).
inline std::string width_sweep_svg(const std::vector<SummaryRow>& summary, const std::string& quantity,
                                   const std::vector<std::string>& metrics, const std::string& title,
                                   const std::string& ylabel) {
  std::set<std::size_t> width_set;
  double lo = 0.0, hi = 0.0;
  for (const auto& r : summary)
    if (r.quantity == quantity) {
      width_set.insert(r.width);
      lo = std::min(lo, r.stats.mean - r.stats.stderr_);
      hi = std::max(hi, r.stats.mean + r.stats.stderr_);
    }
  const std::vector<std::size_t> widths(width_set.begin(), width_set.end());
  if (hi <= lo) hi = lo + 1.0;
  const double pad = 0.1 * (hi - lo);
  const Panel p{70, 40, 320, 220, -0.5, static_cast<double>(std::max<std::size_t>(widths.size(), 1)) - 0.5,
                lo < 0.0 ? lo - pad : 0.0, hi + pad};
  Canvas c(520, 330);
  std::vector<std::pair<double, std::string>> ticks;
  for (std::size_t i = 0; i < widths.size(); ++i) ticks.emplace_back(i, std::to_string(widths[i]));
  c.open("<g class=\"panel\" data-yscale=\"" + exact(p.yscale()) + "\">");
  p.axes(c, title, "final hidden width h_L", ylabel, ticks);
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& m : metrics) {
    std::vector<SeriesPoint> pts;
    for (std::size_t i = 0; i < widths.size(); ++i)
      for (const auto& r : summary)
        if (r.quantity == quantity && r.metric == m && r.width == widths[i])
          pts.push_back({static_cast<double>(i), r.stats});
    const std::string colour = color(metric_from_string(m));
    draw_series(c, p, pts, colour, m);
    for (const auto& s : pts)
      c.line(p.px(s.x), p.py(s.stats.mean - s.stats.stderr_), p.px(s.x), p.py(s.stats.mean + s.stats.stderr_),
             colour, 1.5);
    entries.emplace_back(m, colour);
  }
  c.close("g");
  legend(c, 410, 60, entries);
  return c.str();
}

inline std::string onset_svg(const std::vector<SummaryRow>& summary) {
  return width_sweep_svg(summary, "onset_accuracy", {"continual"}, "accuracy at onset", "accuracy");
}

inline std::string loss_svg(const std::vector<SummaryRow>& summary) {
  return width_sweep_svg(summary, "performance_loss", {"continual", "diagnostic", "procrustes"},
                         "performance loss", "acc(t=0) - mean acc(t>0)");
}

/// Class-mean embeddings of one task at several relative times, sharing one coordinate frame.
inline std::string mds_svg(const std::vector<MdsRow>& rows, const std::vector<int>& wanted_t = {0, 5, 9}) {
  if (rows.empty()) {
    Canvas c(400, 100);
    c.text(200, 50, "no embedding data");
    return c.str();
  }
  // Use the width with the most seeds (the main run), then its lowest seed.
  std::map<std::size_t, std::set<std::uint64_t>> seeds_per_width;
  for (const auto& r : rows) seeds_per_width[r.width].insert(r.seed);
  std::size_t width = seeds_per_width.begin()->first;
  for (const auto& [w, s] : seeds_per_width)
    if (s.size() > seeds_per_width[width].size()) width = w;
  const std::uint64_t seed = *seeds_per_width[width].begin();

  std::vector<MdsRow> sel;
  std::set<int> available;
  for (const auto& r : rows)
    if (r.width == width && r.seed == seed) {
      sel.push_back(r);
      available.insert(r.phase - static_cast<int>(r.task));
    }
  std::vector<int> panels;
  for (int t : wanted_t)
    if (available.contains(t)) panels.push_back(t);
  if (panels.size() < wanted_t.size()) {
    // Short runs: first, middle and last available time.
    const std::vector<int> ts(available.begin(), available.end());
    std::set<int> pick{ts.front(), ts[ts.size() / 2], ts.back()};
    panels.assign(pick.begin(), pick.end());
  }

  double lo = 0.0, hi = 0.0;
  for (const auto& r : sel) {
    lo = std::min({lo, r.x, r.y});
    hi = std::max({hi, r.x, r.y});
  }
  if (hi <= lo) hi = lo + 1.0;
  const double pad = 0.1 * (hi - lo);
  const double size = 220;
  Canvas c(60 + (size + 60) * static_cast<double>(panels.size()), size + 90);
  double left = 50;
  std::set<std::uint32_t> labels;
  for (int t : panels) {
    const Panel p{left, 40, size, size, lo - pad, hi + pad, lo - pad, hi + pad};
    c.open("<g class=\"panel\" data-t=\"" + std::to_string(t) + "\">");
    c.add("<rect x=\"" + num(p.left) + "\" y=\"" + num(p.top) + "\" width=\"" + num(size) + "\" height=\"" +
          num(size) + "\" fill=\"none\" stroke=\"#000000\"/>");
    c.text(p.left + size / 2, p.top - 8, "t = " + std::to_string(t), "middle", 13);
    for (const auto& r : sel) {
      if (r.phase - static_cast<int>(r.task) != t) continue;
      labels.insert(r.label);
      c.add("<circle class=\"class-mean\" cx=\"" + num(p.px(r.x)) + "\" cy=\"" + num(p.py(r.y)) +
            "\" r=\"6\" fill=\"" + class_color(r.label) + "\" data-class=\"" + std::to_string(r.label) + "\"/>");
    }
    c.close("g");
    left += size + 60;
  }
  c.text(50, size + 75,
         "task " + std::to_string(sel.front().task) + ", seed " + std::to_string(seed) + ", " + width_label(width),
         "start");
  std::vector<std::pair<std::string, std::string>> entries;
  for (auto l : labels) entries.emplace_back("class " + std::to_string(l), class_color(l));
  legend(c, left - 40, 50, entries);
  return c.str();
}

}  // namespace repdrift::plot
