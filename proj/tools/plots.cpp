#include "plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace dermalab::cli {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

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

std::string header(double w, double h, const std::string& title) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n"
         "<title>" + escape(title) + "</title>\n"
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + num(w / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
         escape(title) + "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2, const std::string& stroke) {
  return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" +
         num(y2) + "\" stroke=\"" + stroke + "\"/>\n";
}

std::string text(double x, double y, const std::string& s, const std::string& anchor,
                 const std::string& cls = "") {
  return "<text" + (cls.empty() ? std::string() : " class=\"" + cls + "\"") + " x=\"" + num(x) +
         "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
}

/// Blue to red through purple.
std::string colour(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(30 + 225 * t));
  const int g = static_cast<int>(std::lround(136 - 106 * t));
  const int b = static_cast<int>(std::lround(229 - 159 * t));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<std::size_t> impact_order(std::size_t n_features, const std::vector<SwarmPoint>& points) {
  std::vector<double> total(n_features, 0.0);
  std::vector<int> count(n_features, 0);
  for (const auto& p : points) {
    total[p.feature] += std::abs(p.shap);
    ++count[p.feature];
  }
  std::vector<double> mean(n_features, 0.0);
  for (std::size_t f = 0; f < n_features; ++f) mean[f] = count[f] ? total[f] / count[f] : 0.0;
  std::vector<std::size_t> order(n_features);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });
  return order;
}

std::string beeswarm_svg(const std::vector<std::string>& features,
                         const std::vector<SwarmPoint>& points, const std::string& title) {
  const auto order = impact_order(features.size(), points);
  const double left = 150, right = 40, top = 40, row_h = 36, width = 760;
  const double height = top + row_h * static_cast<double>(features.size()) + 60;
  double span = 0.0;
  for (const auto& p : points) span = std::max(span, std::abs(p.shap));
  if (span == 0.0) span = 1.0;
  const double plot_w = width - left - right;
  const auto xpos = [&](double v) { return left + plot_w * (0.5 + 0.5 * v / span); };

  std::string svg = header(width, height, title);
  const double axis_y = top + row_h * static_cast<double>(features.size());
  svg += line(xpos(0.0), top, xpos(0.0), axis_y, "#999999");
  svg += line(left, axis_y, width - right, axis_y, "black");
  for (double v : {-span, -span / 2, 0.0, span / 2, span}) {
    svg += line(xpos(v), axis_y, xpos(v), axis_y + 4, "black");
    svg += text(xpos(v), axis_y + 16, tick(v), "middle");
  }
  svg += text(left + plot_w / 2, axis_y + 34, "Shapley value (impact on model output)", "middle");

  for (std::size_t row = 0; row < order.size(); ++row) {
    const std::size_t f = order[row];
    const double cy = top + row_h * (static_cast<double>(row) + 0.5);
    svg += text(left - 8, cy + 4, features[f], "end", "feature");
    std::vector<const SwarmPoint*> mine;
    for (const auto& p : points) {
      if (p.feature == f) mine.push_back(&p);
    }
    std::stable_sort(mine.begin(), mine.end(),
                     [](const SwarmPoint* a, const SwarmPoint* b) { return a->shap < b->shap; });
    // Stack points sharing a 4 px bin alternately above and below the row.
    std::map<long, int> bins;
    for (const auto* p : mine) {
      const double x = xpos(p->shap);
      const int k = bins[std::lround(x / 4.0)]++;
      const double dy = (k % 2 ? -1.0 : 1.0) * 3.0 * ((k + 1) / 2);
      svg += "<circle cx=\"" + num(x) + "\" cy=\"" + num(cy + std::clamp(dy, -row_h / 2 + 3, row_h / 2 - 3)) +
             "\" r=\"2.5\" fill=\"" + colour(p->percentile) + "\"/>\n";
    }
  }
  // Colour legend.
  for (int i = 0; i < 10; ++i) {
    svg += "<rect x=\"" + num(width - right + 10) + "\" y=\"" + num(top + 10 * (9 - i)) +
           "\" width=\"10\" height=\"10\" fill=\"" + colour(i / 9.0) + "\"/>\n";
  }
  svg += text(width - right + 15, top - 4, "high", "middle");
  svg += text(width - right + 15, top + 112, "low", "middle");
  svg += "</svg>\n";
  return svg;
}

std::string box_plot_svg(const std::string& title, const std::vector<BoxGroup>& groups) {
  const double left = 70, bottom = 60, top = 40, width = 120.0 * std::max<std::size_t>(groups.size(), 1) + 100;
  const double height = 360, plot_h = height - top - bottom;
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& g : groups) {
    for (double v : g.values) {
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  }
  if (hi - lo <= 0.0) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const auto ypos = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  std::string svg = header(width, height, title);
  svg += line(left, top, left, top + plot_h, "black");
  svg += line(left, top + plot_h, width - 20, top + plot_h, "black");
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    svg += line(left - 4, ypos(v), left, ypos(v), "black");
    svg += text(left - 6, ypos(v) + 4, tick(v), "end");
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double cx = left + 60 + 120.0 * static_cast<double>(i);
    svg += text(cx, top + plot_h + 18, groups[i].label, "middle", "group");
    std::vector<double> v = groups[i].values;
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    const double q1 = quantile(v, 0.25), q2 = quantile(v, 0.5), q3 = quantile(v, 0.75);
    const double iqr = q3 - q1;
    double wlo = q1, whi = q3;
    for (double x : v) {
      if (x >= q1 - 1.5 * iqr) {
        wlo = x;
        break;
      }
    }
    for (auto it = v.rbegin(); it != v.rend(); ++it) {
      if (*it <= q3 + 1.5 * iqr) {
        whi = *it;
        break;
      }
    }
    svg += line(cx, ypos(whi), cx, ypos(q3), "black");
    svg += line(cx, ypos(q1), cx, ypos(wlo), "black");
    svg += line(cx - 12, ypos(whi), cx + 12, ypos(whi), "black");
    svg += line(cx - 12, ypos(wlo), cx + 12, ypos(wlo), "black");
    svg += "<rect x=\"" + num(cx - 30) + "\" y=\"" + num(ypos(q3)) + "\" width=\"60\" height=\"" +
           num(std::max(ypos(q1) - ypos(q3), 0.5)) + "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    svg += line(cx - 30, ypos(q2), cx + 30, ypos(q2), "#d62728");
    for (double x : v) {
      if (x < wlo || x > whi) {
        svg += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(ypos(x)) +
               "\" r=\"3\" fill=\"none\" stroke=\"black\"/>\n";
      }
    }
    svg += text(cx, top + plot_h + 34, "n=" + std::to_string(v.size()), "middle");
  }
  svg += "</svg>\n";
  return svg;
}

std::string confusion_svg(const std::vector<std::string>& labels, const Eigen::MatrixXi& counts,
                          const std::string& title) {
  const double cell = 60, left = 110, top = 60;
  const auto k = static_cast<double>(labels.size());
  const double width = left + cell * k + 40, height = top + cell * k + 60;
  const int peak = counts.size() ? std::max(counts.maxCoeff(), 1) : 1;
  std::string svg = header(width, height, title);
  for (Eigen::Index r = 0; r < counts.rows(); ++r) {
    for (Eigen::Index c = 0; c < counts.cols(); ++c) {
      const double shade = static_cast<double>(counts(r, c)) / peak;
      const int g = static_cast<int>(std::lround(255 - 180 * shade));
      char fill[8];
      std::snprintf(fill, sizeof fill, "#%02x%02xff", g, g);
      const double x = left + cell * static_cast<double>(c), y = top + cell * static_cast<double>(r);
      svg += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cell) + "\" height=\"" +
             num(cell) + "\" fill=\"" + fill + "\" stroke=\"white\"/>\n";
      svg += text(x + cell / 2, y + cell / 2 + 4, std::to_string(counts(r, c)), "middle");
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double off = cell * (static_cast<double>(i) + 0.5);
    svg += text(left - 8, top + off + 4, labels[i], "end");
    svg += text(left + off, top + cell * k + 18, labels[i], "middle");
  }
  svg += text(left + cell * k / 2, top + cell * k + 40, "predicted", "middle");
  svg += text(20, top + cell * k / 2, "true", "middle");
  svg += "</svg>\n";
  return svg;
}

}  // namespace dermalab::cli
