#pragma once

// Minimal SVG time-series plot of a run: CoM error, base tilt, normal forces.

#include <string>
#include <vector>

#include "wbstab/spatial.hpp"

namespace wbstab::plot {

struct Series {
  std::vector<double> t;
  std::vector<Vec3> com_error;  // m
  std::vector<double> tilt;     // rad
  std::vector<Vec2> fz;         // measured, per foot
  std::vector<Vec2> fz_ref;     // F_ID
};

std::string svg(const std::string& title, const Series& s);
/// Throws Error when the file cannot be written.
void write_svg(const std::string& path, const std::string& title, const Series& s);

}  // namespace wbstab::plot
