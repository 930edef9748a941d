#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bmpc/eval.hpp"

namespace bmpc {

/// Minimal SVG chart: lines with optional shaded bands, and scatter series.
/// Output depends only on the data, so repeated runs are byte-identical.
struct SvgSeries
{
  std::string label;
  std::string color = "#1f77b4";
  std::vector<double> x, y;
  std::vector<double> lo, hi;  ///< optional band around y
  bool scatter = false;
};

struct SvgChart
{
  std::string title, x_label, y_label;
  bool log_y = false;
  std::vector<SvgSeries> series;

  void write(std::ostream & o) const
  {
    constexpr double W = 640, H = 420, ml = 70, mr = 150, mt = 40, mb = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    auto ty = [&](double v) { return log_y ? std::log10(std::max(v, 1e-12)) : v; };
    for (const auto & s : series) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        x0 = std::min(x0, s.x[i]);
        x1 = std::max(x1, s.x[i]);
        for (double v : {s.y[i], s.lo.empty() ? s.y[i] : s.lo[i], s.hi.empty() ? s.y[i] : s.hi[i]}) {
          y0 = std::min(y0, ty(v));
          y1 = std::max(y1, ty(v));
        }
      }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (ty(y) - y0) / (y1 - y0) * (H - mt - mb); };
    auto num = [](double v) {
      std::ostringstream s;
      s.precision(6);
      s << v;
      return s.str();
    };

    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    o << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double xv = x0 + (x1 - x0) * i / 4.0;
      const double yv = y0 + (y1 - y0) * i / 4.0;
      o << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
      const double shown = log_y ? std::pow(10.0, yv) : yv;
      const double yy = H - mb - (yv - y0) / (y1 - y0) * (H - mt - mb);
      o << "<text x=\"" << ml - 6 << "\" y=\"" << yy + 4 << "\" text-anchor=\"end\">" << num(shown) << "</text>\n";
    }
    o << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
    o << "<text x=\"16\" y=\"" << (mt + H - mb) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (mt + H - mb) / 2 << ")\">" << y_label << (log_y ? " (log)" : "") << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
      const auto & s = series[si];
      if (!s.lo.empty() && !s.hi.empty() && !s.x.empty()) {
        o << "<polygon fill=\"" << s.color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) o << px(s.x[i]) << ',' << py(s.hi[i]) << ' ';
        for (std::size_t i = s.x.size(); i-- > 0;) o << px(s.x[i]) << ',' << py(s.lo[i]) << ' ';
        o << "\"/>\n";
      }
      if (s.scatter) {
        for (std::size_t i = 0; i < s.x.size(); ++i)
          o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2.5\" fill=\"" << s.color << "\"/>\n";
      } else if (!s.x.empty()) {
        o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) o << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
        o << "\"/>\n";
      }
      const double ly = mt + 16.0 * static_cast<double>(si);
      o << "<rect x=\"" << W - mr + 10 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\"" << s.color << "\"/>\n";
      o << "<text x=\"" << W - mr + 26 << "\" y=\"" << ly + 1 << "\">" << s.label << "</text>\n";
    }
    o << "</svg>\n";
  }
};

inline const char * palette(std::size_t i)
{
  static const char * c[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
  return c[i % 8];
}

/// MSE against training weeks with 16-84 percentile bands.
inline SvgChart sample_eff_chart(const SampleEffReport & r)
{
  SvgChart ch{"Open-loop 1 h MSE", "training weeks", "MSE [K^2]", true, {}};
  for (std::size_t m = 0; m < r.models.size(); ++m) {
    SvgSeries s;
    s.label = r.models[m];
    s.color = palette(m);
    for (int w : r.weeks) {
      const auto & c = r.cell(r.models[m], w);
      s.x.push_back(w);
      s.y.push_back(c.median);
      s.lo.push_back(c.p16);
      s.hi.push_back(c.p84);
    }
    ch.series.push_back(std::move(s));
  }
  return ch;
}

/// Daily energy against solar-augmented degree days with fitted lines.
inline SvgChart degree_day_chart(const std::vector<std::pair<std::string, std::vector<DailyAggregate>>> & sets,
  const std::vector<DegreeDayRegression> & fits, const DegreeDayRegression & axis)
{
  SvgChart ch{"Daily energy", axis.mode == ThermalMode::Heating ? "HDSD [K day]" : "CDSD [K day]", "energy [Wh]", false, {}};
  for (std::size_t i = 0; i < sets.size(); ++i) {
    SvgSeries pts;
    pts.label = sets[i].first;
    pts.color = palette(i);
    pts.scatter = true;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto & d : sets[i].second) {
      const double x = axis.solar_degree(d.T_amb, d.I_hor);
      pts.x.push_back(x);
      pts.y.push_back(d.energy_Wh);
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    ch.series.push_back(pts);
    if (i < fits.size() && std::isfinite(lo) && fits[i].theta_dd != 0.0) {
      // Along the axis regression's HDSD, the fit is linear with slope theta_dd
      // when both share the solar ratio; otherwise this is its best line.
      SvgSeries line;
      line.label = sets[i].first + " fit";
      line.color = palette(i);
      for (double x : {lo, hi}) {
        line.x.push_back(x);
        line.y.push_back(fits[i].theta_dd * x + fits[i].c);
      }
      ch.series.push_back(line);
    }
  }
  return ch;
}

}  // namespace bmpc
