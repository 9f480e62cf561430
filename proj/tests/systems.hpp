#pragma once

#include "qmono/dynamics.hpp"
#include "qmono/section.hpp"

#include <cmath>
#include <numbers>

namespace qmono::testing {

// Symmetric 3-disk pinball: center separation 6, radius 1.
inline ScatteringSystem three_disk(double separation = 6.0, double radius = 1.0) {
  // disks 1 and 2 share a y coordinate so their 2-cycle is exactly representable
  const double r = separation / std::sqrt(3.0);
  return ScatteringSystem::billiard({{{0.0, r}, radius},
                                     {{-0.5 * separation, -0.5 * r}, radius},
                                     {{0.5 * separation, -0.5 * r}, radius}});
}

inline constexpr double kDiskEnergy = 0.5;  // unit speed

// Trapped samples of the 3-disk system, refined well past the section return times.
inline std::vector<PhasePoint> three_disk_trapped(int budget = 300) {
  TrappedSamplingOptions o;
  o.t_max = 40.0;
  o.escape_radius = 10.0;
  return sample_trapped_set(three_disk(), kDiskEnergy, budget, o);
}

inline constexpr double kBumpEnergy = 0.5;

// Three equal Gaussian bumps on a circle of radius 1.
inline ScatteringSystem three_bump() {
  std::vector<GaussianBump> bumps;
  for (int k = 0; k < 3; ++k) {
    const double a = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * k / 3.0;
    bumps.push_back({{std::cos(a), std::sin(a)}, 1.0, 0.3});
  }
  return ScatteringSystem::smooth(bumps, 3.0, 0.8);
}

inline std::vector<PhasePoint> three_bump_trapped(int budget = 120) {
  TrappedSamplingOptions o;
  o.t_max = 12.0;
  o.escape_radius = 6.0;
  return sample_trapped_set(three_bump(), kBumpEnergy, budget, o);
}

inline SectionOptions bump_sections() {
  SectionOptions o;
  o.escape_radius = 6.0;
  o.max_diameter = 4.0;
  o.tau_max = 4.0;
  o.chart_margin = 0.1;
  return o;
}

}  // namespace qmono::testing
