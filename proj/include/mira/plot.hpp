#ifndef MIRA_PLOT_HPP_
#define MIRA_PLOT_HPP_

#include <string>
#include <vector>

namespace mira {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> spread;  // optional +/- band, same length as y
};

/// A standalone SVG line chart with one polyline (and band) per series.
std::string svg_chart(const std::vector<Series>& series, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel);
void write_svg(const std::string& svg, const std::string& path);

}  // namespace mira

#endif  // MIRA_PLOT_HPP_
