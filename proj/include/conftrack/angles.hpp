#pragma once

#include <cmath>
#include <numbers>

namespace conftrack {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Maps any angle into [0, 2π).
inline double wrap_phi(double phi) {
  double w = std::fmod(phi, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  // fmod of a tiny negative value can round up to exactly 2π
  if (w >= kTwoPi) w = 0.0;
  return w;
}

/// Shortest signed arc from `from` to `to`, in [-π, π).
inline double delta_phi(double to, double from) {
  double d = std::fmod(to - from + kPi, kTwoPi);
  if (d < 0.0) d += kTwoPi;
  return d - kPi;
}

/// Maps an axis orientation into [0, π) (ellipse orientations have period π).
inline double wrap_half_turn(double theta) {
  double w = std::fmod(theta, kPi);
  if (w < 0.0) w += kPi;
  if (w >= kPi) w = 0.0;
  return w;
}

}  // namespace conftrack
