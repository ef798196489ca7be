#include "pstab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace pstab {

namespace {

constexpr double kW = 720.0, kH = 440.0;
constexpr double kL = 70.0, kR = 150.0, kT = 40.0, kB = 50.0;

const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

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

struct Frame {
  double x0, x1, y0, y1;
  bool log_x = false;

  double px(double x) const {
    const double a = log_x ? std::log10(x) : x;
    const double lo = log_x ? std::log10(x0) : x0, hi = log_x ? std::log10(x1) : x1;
    return kL + (a - lo) / (hi - lo) * (kW - kL - kR);
  }
  double py(double y) const { return kH - kB - (y - y0) / (y1 - y0) * (kH - kT - kB); }
};

std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
  const double span = hi - lo;
  if (!(span > 0)) return {lo};
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  return t;
}

void pad_range(double& lo, double& hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
    const double d = std::max(1e-3, std::abs(hi) * 0.1);
    lo -= d;
    hi += d;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

void header(std::ostream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 "
     << kW << ' ' << kH << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(kW / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
}

void axes(std::ostream& os, const Frame& f, const std::string& xl, const std::string& yl) {
  os << "<rect x=\"" << kL << "\" y=\"" << kT << "\" width=\"" << (kW - kL - kR) << "\" height=\"" << (kH - kT - kB)
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  std::vector<double> xt;
  if (f.log_x) {
    for (int e = static_cast<int>(std::floor(std::log10(f.x0))); e <= static_cast<int>(std::ceil(std::log10(f.x1))); ++e) {
      const double v = std::pow(10.0, e);
      if (v >= f.x0 * (1 - 1e-9) && v <= f.x1 * (1 + 1e-9)) xt.push_back(v);
    }
  } else {
    xt = nice_ticks(f.x0, f.x1);
  }
  for (double v : xt) {
    const double x = f.px(v);
    os << "<line x1=\"" << num(x) << "\" y1=\"" << num(kH - kB) << "\" x2=\"" << num(x) << "\" y2=\"" << num(kT)
       << "\" stroke=\"#e0e0e0\"/>\n";
    os << "<text x=\"" << num(x) << "\" y=\"" << num(kH - kB + 15) << "\" text-anchor=\"middle\">" << tick(v)
       << "</text>\n";
  }
  for (double v : nice_ticks(f.y0, f.y1)) {
    const double y = f.py(v);
    os << "<line x1=\"" << kL << "\" y1=\"" << num(y) << "\" x2=\"" << num(kW - kR) << "\" y2=\"" << num(y)
       << "\" stroke=\"#e0e0e0\"/>\n";
    os << "<text x=\"" << num(kL - 5) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << tick(v)
       << "</text>\n";
  }
  os << "<text x=\"" << num((kL + kW - kR) / 2) << "\" y=\"" << num(kH - 12) << "\" text-anchor=\"middle\">"
     << escape(xl) << "</text>\n";
  os << "<text x=\"16\" y=\"" << num((kT + kH - kB) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << num((kT + kH - kB) / 2) << ")\">" << escape(yl) << "</text>\n";
}

void legend(std::ostream& os, std::size_t i, const std::string& name, const char* color, bool dashed) {
  const double y = kT + 14 + 16 * static_cast<double>(i);
  os << "<line x1=\"" << num(kW - kR + 10) << "\" y1=\"" << num(y) << "\" x2=\"" << num(kW - kR + 34) << "\" y2=\""
     << num(y) << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << (dashed ? " stroke-dasharray=\"6 3\"" : "")
     << "/>\n";
  os << "<text x=\"" << num(kW - kR + 40) << "\" y=\"" << num(y + 4) << "\">" << escape(name) << "</text>\n";
}

}  // namespace

void write_line_plot_svg(std::ostream& os, const std::vector<PlotSeries>& series, const PlotLabels& labels) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (labels.log_x && s.x[i] <= 0) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!labels.log_x) {
    if (!std::isfinite(x0)) {
      x0 = 0.0;
      x1 = 1.0;
    }
    if (x1 <= x0) x1 = x0 + 1.0;
  } else if (!std::isfinite(x0)) {
    x0 = 0.1;
    x1 = 10.0;
  }
  pad_range(y0, y1);
  Frame f{x0, x1, y0, y1, labels.log_x};
  header(os, labels.title);
  axes(os, f, labels.x, labels.y);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
       << (s.dashed ? " stroke-dasharray=\"6 3\"" : "") << " points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (labels.log_x && s.x[i] <= 0)) continue;
      os << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i])) << ' ';
    }
    os << "\"/>\n";
    if (s.markers) {
      for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        os << "<circle cx=\"" << num(f.px(s.x[i])) << "\" cy=\"" << num(f.py(s.y[i])) << "\" r=\"2.5\" fill=\""
           << color << "\"/>\n";
      }
    }
    legend(os, k, s.name, color, s.dashed);
  }
  os << "</svg>\n";
}

void write_pole_map_svg(std::ostream& os, const PoleMap& map) {
  const double wmax = 2.0 * kPi * map.max_freq_hz;
  auto keep = [&](Complex z) { return std::isfinite(z.real()) && std::isfinite(z.imag()) && z.imag() >= -1e-9 && z.imag() <= wmax; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  auto take = [&](Complex z) {
    if (!keep(z)) return;
    x0 = std::min(x0, z.real());
    x1 = std::max(x1, z.real());
  };
  for (const auto& b : map.branches)
    for (auto z : b) take(z);
  for (auto z : map.open_loop) take(z);
  for (auto z : map.selected) take(z);
  for (auto z : map.poles) take(z);
  if (!std::isfinite(x0)) {
    x0 = -1.0;
    x1 = 0.5;
  }
  x0 = std::min(x0, -0.1);
  x1 = std::max(x1, 0.1);
  pad_range(x0, x1);
  double y0 = 0.0, y1 = wmax;
  Frame f{x0, x1, y0, y1, false};
  header(os, map.title);
  axes(os, f, "real part (1/s)", "imaginary part (rad/s)");

  // constant damping rays: sigma = -xi / sqrt(1 - xi^2) * omega
  for (double xi : map.damping_lines) {
    const double slope = -xi / std::sqrt(std::max(1e-12, 1.0 - xi * xi));
    double we = y1;
    double se = slope * we;
    if (se < x0) {
      se = x0;
      we = x0 / slope;
    }
    os << "<line x1=\"" << num(f.px(0.0)) << "\" y1=\"" << num(f.py(0.0)) << "\" x2=\"" << num(f.px(se))
       << "\" y2=\"" << num(f.py(we)) << "\" stroke=\"gray\" stroke-dasharray=\"2 3\"/>\n";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", xi);
    os << "<text x=\"" << num(f.px(se) + 3) << "\" y=\"" << num(f.py(we) + 12) << "\" fill=\"gray\">" << buf
       << "</text>\n";
  }

  std::size_t k = 0;
  for (const auto& b : map.branches) {
    bool any = std::any_of(b.begin(), b.end(), keep);
    if (!any) continue;
    const char* color = kColors[k++ % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    for (auto z : b)
      if (keep(z)) os << num(f.px(z.real())) << ',' << num(f.py(z.imag())) << ' ';
    os << "\"/>\n";
  }
  auto star = [&](Complex z) {
    const double cx = f.px(z.real()), cy = f.py(z.imag());
    os << "<polygon fill=\"black\" points=\"";
    for (int i = 0; i < 10; ++i) {
      const double r = i % 2 ? 2.5 : 6.0, a = -kPi / 2 + i * kPi / 5;
      os << num(cx + r * std::cos(a)) << ',' << num(cy + r * std::sin(a)) << ' ';
    }
    os << "\"/>\n";
  };
  for (auto z : map.open_loop)
    if (keep(z)) star(z);
  for (auto z : map.zeros)
    if (keep(z) && z.real() >= x0 && z.real() <= x1)
      os << "<circle cx=\"" << num(f.px(z.real())) << "\" cy=\"" << num(f.py(z.imag()))
         << "\" r=\"5\" fill=\"none\" stroke=\"black\"/>\n";
  for (auto z : map.poles)
    if (keep(z))
      os << "<text x=\"" << num(f.px(z.real())) << "\" y=\"" << num(f.py(z.imag()) + 4)
         << "\" text-anchor=\"middle\" font-size=\"12\">x</text>\n";
  for (auto z : map.selected)
    if (keep(z))
      os << "<circle cx=\"" << num(f.px(z.real())) << "\" cy=\"" << num(f.py(z.imag())) << "\" r=\"3.5\" fill=\"#d62728\"/>\n";
  os << "</svg>\n";
}

}  // namespace pstab
