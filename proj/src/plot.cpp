#include "mira/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mira {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s) {
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

}  // namespace

std::string svg_chart(const std::vector<Series>& series, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel) {
  constexpr double kW = 720, kH = 440, kL = 70, kR = 170, kT = 40, kB = 55;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      const double sp = i < s.spread.size() ? s.spread[i] : 0.0;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i] - sp);
      ymax = std::max(ymax, s.y[i] + sp);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pw = kW - kL - kR, ph = kH - kT - kB;
  auto px = [&](double x) { return kL + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return kT + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream os;
  os.precision(5);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kL << "\" y=\"24\" font-size=\"15\">" << escape(title) << "</text>\n";
  os << "<rect x=\"" << kL << "\" y=\"" << kT << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x=\"" << px(fx) << "\" y=\"" << kT + ph + 16 << "\" text-anchor=\"middle\">" << fx
       << "</text>\n";
    os << "<text x=\"" << kL - 6 << "\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">" << fy
       << "</text>\n";
    os << "<line x1=\"" << kL << "\" x2=\"" << kL + pw << "\" y1=\"" << py(fy) << "\" y2=\"" << py(fy)
       << "\" stroke=\"#ddd\"/>\n";
  }
  os << "<text x=\"" << kL + pw / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">"
     << escape(xlabel) << "</text>\n";
  os << "<text transform=\"translate(16," << kT + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(ylabel) << "</text>\n";
  for (size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
    const size_t n = std::min(s.x.size(), s.y.size());
    if (s.spread.size() >= n && n > 0) {
      os << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (size_t i = 0; i < n; ++i) os << px(s.x[i]) << ',' << py(s.y[i] + s.spread[i]) << ' ';
      for (size_t i = n; i-- > 0;) os << px(s.x[i]) << ',' << py(s.y[i] - s.spread[i]) << ' ';
      os << "\"/>\n";
    }
    os << "<polyline class=\"series\" data-name=\"" << escape(s.name) << "\" fill=\"none\" stroke=\""
       << color << "\" stroke-width=\"1.6\" points=\"";
    for (size_t i = 0; i < n; ++i) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    os << "\"/>\n";
    const double ly = kT + 14 + 18.0 * static_cast<double>(k);
    os << "<line x1=\"" << kL + pw + 12 << "\" x2=\"" << kL + pw + 32 << "\" y1=\"" << ly << "\" y2=\""
       << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kL + pw + 38 << "\" y=\"" << ly + 4 << "\">" << escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_svg(const std::string& svg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << svg;
}

}  // namespace mira
