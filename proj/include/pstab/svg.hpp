#pragma once

#include <iosfwd>

#include "pstab/common.hpp"

namespace pstab {

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
  bool dashed = false;
  bool markers = false;
};

struct PlotLabels {
  std::string title, x, y;
  bool log_x = false;
};

void write_line_plot_svg(std::ostream& os, const std::vector<PlotSeries>& series, const PlotLabels& labels);

struct PoleMap {
  std::string title;
  std::vector<std::vector<Complex>> branches;  // traced pole paths
  std::vector<Complex> open_loop;              // stars
  std::vector<Complex> zeros;                  // circles
  std::vector<Complex> selected;               // filled dots
  std::vector<Complex> poles;                  // plain eigenvalues
  std::vector<double> damping_lines = {0.0, 0.05, 0.1, 0.2, 0.3, 0.5};
  /// Frequency window (Hz) for the imaginary axis; poles outside are dropped.
  double max_freq_hz = 3.0;
};

/// Complex-plane pole map with dotted constant-damping rays.
void write_pole_map_svg(std::ostream& os, const PoleMap& map);

}  // namespace pstab
