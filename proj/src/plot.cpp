#include "wbstab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "wbstab/errors.hpp"

namespace wbstab::plot {

namespace {

constexpr double kW = 800, kH = 200, kPad = 40;
constexpr std::size_t kMaxPoints = 2000;

struct Trace {
  std::string colour;
  std::function<double(std::size_t)> y;
};

void panel(std::ostringstream& os, const Series& s, double top, const std::string& label, const std::vector<Trace>& traces) {
  const std::size_t n = s.t.size();
  const std::size_t stride = std::max<std::size_t>(1, n / kMaxPoints);
  double lo = 0.0, hi = 0.0;
  for (const Trace& tr : traces)
    for (std::size_t i = 0; i < n; i += stride) {
      lo = std::min(lo, tr.y(i));
      hi = std::max(hi, tr.y(i));
    }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double t0 = n ? s.t.front() : 0.0, t1 = n ? std::max(s.t.back(), t0 + 1e-9) : 1.0;
  auto X = [&](double t) { return kPad + (t - t0) / (t1 - t0) * (kW - 2 * kPad); };
  auto Y = [&](double v) { return top + kH - 10 - (v - lo) / (hi - lo) * (kH - 30); };
  char buf[128];
  std::snprintf(buf, sizeof buf, "<rect x='%g' y='%g' width='%g' height='%g' fill='none' stroke='#999'/>\n", kPad,
                top + 10, kW - 2 * kPad, kH - 20);
  os << buf;
  std::snprintf(buf, sizeof buf, "<text x='%g' y='%g' font-size='11'>%s [%.4g, %.4g]</text>\n", kPad + 4, top + 22,
                label.c_str(), lo, hi);
  os << buf;
  for (const Trace& tr : traces) {
    os << "<polyline fill='none' stroke='" << tr.colour << "' stroke-width='1' points='";
    for (std::size_t i = 0; i < n; i += stride) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", X(s.t[i]), Y(tr.y(i)));
      os << buf;
    }
    os << "'/>\n";
  }
}

}  // namespace

std::string svg(const std::string& title, const Series& s) {
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << 3 * kH + 30 << "'>\n";
  os << "<text x='" << kPad << "' y='18' font-size='14'>" << title << "</text>\n";
  panel(os, s, 20, "CoM error x/y/z (m)",
        {{"#c00", [&](std::size_t i) { return s.com_error[i].x(); }},
         {"#080", [&](std::size_t i) { return s.com_error[i].y(); }},
         {"#00c", [&](std::size_t i) { return s.com_error[i].z(); }}});
  panel(os, s, 20 + kH, "base tilt (rad)", {{"#000", [&](std::size_t i) { return s.tilt[i]; }}});
  panel(os, s, 20 + 2 * kH, "f_z left/right, reference dashed (N)",
        {{"#c00", [&](std::size_t i) { return s.fz[i].x(); }},
         {"#00c", [&](std::size_t i) { return s.fz[i].y(); }},
         {"#f88", [&](std::size_t i) { return s.fz_ref[i].x(); }},
         {"#88f", [&](std::size_t i) { return s.fz_ref[i].y(); }}});
  os << "</svg>\n";
  return os.str();
}

void write_svg(const std::string& path, const std::string& title, const Series& s) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path + "'");
  f << svg(title, s);
  if (!f) throw Error("failed writing '" + path + "'");
}

}  // namespace wbstab::plot
