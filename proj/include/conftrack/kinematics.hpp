#pragma once

// Transverse-plane track geometry. Units are meters, tesla and GeV throughout.
//
// A circle (x-a)^2 + (y-b)^2 = R^2 passing close to the beamline becomes, under
// the inversion (u, v) = (x, y) / (x^2 + y^2), approximately the parabola
//
//   v = 1/(2b) - u a/b - u^2 eps (R/b)^3
//
// where eps = R - sqrt(a^2 + b^2) is the signed distance of closest approach.
// Circles through the origin (eps = 0) map onto exact straight lines.

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "conftrack/angles.hpp"
#include "conftrack/error.hpp"

namespace conftrack {

/// GeV / (T m): p_T = 0.3 B R.
inline constexpr double kMomentumPerFieldRadius = 0.3;

struct PointXY {
  double x = 0.0;
  double y = 0.0;
};

struct PointUV {
  double u = 0.0;
  double v = 0.0;
};

struct CircleTrack {
  double a = 0.0;  // center x
  double b = 0.0;  // center y
  double R = 1.0;
  int charge = 1;

  /// R^2 - a^2 - b^2; zero for circles through the origin.
  double displacement() const { return R * R - a * a - b * b; }
};

/// Coefficients of v = c0 + c1 u + c2 u^2.
struct ParabolaCoeffs {
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;

  double operator()(double u) const { return c0 + u * (c1 + u * c2); }
};

struct TrackParams {
  double pT = 0.0;
  double epsT = 0.0;
  double a = 0.0;
  double b = 0.0;
};

namespace detail {
inline PointXY invert_through_unit_circle(double x, double y, const char* what) {
  const double r2 = x * x + y * y;
  if (!(r2 > 0.0) || !std::isfinite(r2)) {
    throw DomainError(std::string(what) + ": conformal map undefined at the origin");
  }
  return {x / r2, y / r2};
}
}  // namespace detail

inline PointUV to_conformal(PointXY p) {
  const auto q = detail::invert_through_unit_circle(p.x, p.y, "to_conformal");
  return {q.x, q.y};
}

/// The conformal map is an involution; this is the same inversion typed the
/// other way round.
inline PointXY from_conformal(PointUV p) {
  return detail::invert_through_unit_circle(p.u, p.v, "from_conformal");
}

/// η = -ln tan(θ/2) for polar angle θ in (0, π).
inline double pseudorapidity(double theta) {
  if (!(theta > 0.0 && theta < kPi)) {
    throw DomainError("pseudorapidity: polar angle must lie in (0, pi), got " +
                      std::to_string(theta));
  }
  return -std::log(std::tan(0.5 * theta));
}

/// Inverse of pseudorapidity().
inline double polar_angle(double eta) { return 2.0 * std::atan(std::exp(-eta)); }

/// η of a space point seen from the origin. Requires a nonzero transverse radius.
inline double eta_of(double x, double y, double z) {
  const double r = std::hypot(x, y);
  if (!(r > 0.0)) throw DomainError("eta_of: point on the beamline");
  return std::asinh(z / r);
}

inline double phi_of(double x, double y) { return wrap_phi(std::atan2(y, x)); }

inline double pt_from_radius(double B, double R) {
  if (!(B > 0.0) || !(R > 0.0)) {
    throw DomainError("pt_from_radius: field and radius must be positive");
  }
  return kMomentumPerFieldRadius * B * R;
}

inline double radius_from_pt(double B, double pT) {
  if (!(B > 0.0) || !(pT > 0.0)) {
    throw DomainError("radius_from_pt: field and momentum must be positive");
  }
  return pT / (kMomentumPerFieldRadius * B);
}

/// Full least-squares result. `condition` is the 1-norm condition number of the
/// column-scaled normal matrix.
struct ParabolaFit {
  ParabolaCoeffs coeffs;
  double condition = 0.0;
  double residual_ss = 0.0;
};

inline constexpr double kMaxFitCondition = 1e10;

namespace detail {

// Solves M x = rhs for a 3x3 system by partial-pivot elimination. Returns false
// when a pivot vanishes.
inline bool solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3>& rhs) {
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    }
    if (m[piv][col] == 0.0) return false;
    std::swap(m[piv], m[col]);
    std::swap(rhs[piv], rhs[col]);
    for (int r = col + 1; r < 3; ++r) {
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 3; ++c) m[r][c] -= f * m[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  for (int r = 2; r >= 0; --r) {
    double s = rhs[r];
    for (int c = r + 1; c < 3; ++c) s -= m[r][c] * rhs[c];
    rhs[r] = s / m[r][r];
  }
  return true;
}

inline double norm1(const std::array<std::array<double, 3>, 3>& m) {
  double best = 0.0;
  for (int c = 0; c < 3; ++c) {
    best = std::max(best, std::abs(m[0][c]) + std::abs(m[1][c]) + std::abs(m[2][c]));
  }
  return best;
}

}  // namespace detail

/// Least-squares parabola v = c0 + c1 u + c2 u^2 through at least three points.
///
/// Solved through the normal equations in the centred and scaled abscissa
/// t = (u - mean) / spread, then mapped back to the raw coefficients.
inline ParabolaFit fit_parabola_detailed(std::span<const PointUV> points) {
  const std::size_t n = points.size();
  if (n < 3) {
    throw FitError("fit_parabola: need at least 3 points, got " + std::to_string(n), 0.0);
  }
  double mean = 0.0;
  for (const auto& p : points) mean += p.u;
  mean /= static_cast<double>(n);
  double spread = 0.0;
  for (const auto& p : points) spread = std::max(spread, std::abs(p.u - mean));
  if (!(spread > 0.0)) {
    throw FitError("fit_parabola: all abscissae identical", INFINITY);
  }

  std::array<std::array<double, 3>, 3> gram{};
  std::array<double, 3> rhs{};
  for (const auto& p : points) {
    const double t = (p.u - mean) / spread;
    const std::array<double, 3> row{1.0, t, t * t};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) gram[i][j] += row[i] * row[j];
      rhs[i] += row[i] * p.v;
    }
  }

  std::array<std::array<double, 3>, 3> inverse{};
  for (int k = 0; k < 3; ++k) {
    std::array<double, 3> e{};
    e[k] = 1.0;
    if (!detail::solve3(gram, e)) {
      throw FitError("fit_parabola: singular design (fewer than 3 distinct abscissae)", INFINITY);
    }
    for (int r = 0; r < 3; ++r) inverse[r][k] = e[r];
  }
  const double condition = detail::norm1(gram) * detail::norm1(inverse);
  if (!(condition <= kMaxFitCondition)) {
    throw FitError("fit_parabola: design condition number " + std::to_string(condition) +
                       " exceeds " + std::to_string(kMaxFitCondition),
                   condition);
  }
  if (!detail::solve3(gram, rhs)) {
    throw FitError("fit_parabola: singular design", INFINITY);
  }
  const double d0 = rhs[0], d1 = rhs[1], d2 = rhs[2];
  const double s2 = spread * spread;

  ParabolaFit fit;
  fit.coeffs.c2 = d2 / s2;
  fit.coeffs.c1 = d1 / spread - 2.0 * d2 * mean / s2;
  fit.coeffs.c0 = d0 - d1 * mean / spread + d2 * mean * mean / s2;
  fit.condition = condition;
  for (const auto& p : points) {
    const double t = (p.u - mean) / spread;
    const double r = p.v - (d0 + t * (d1 + t * d2));
    fit.residual_ss += r * r;
  }
  return fit;
}

inline ParabolaCoeffs fit_parabola(std::span<const PointUV> points) {
  return fit_parabola_detailed(points).coeffs;
}

/// Inverts the parabola coefficients into circle center, impact parameter and
/// transverse momentum, approximating R^2 by a^2 + b^2. The returned eps_T is
/// signed: positive when the origin lies outside the circle.
inline TrackParams extract_track_params(const ParabolaCoeffs& c, double B) {
  if (c.c0 == 0.0 || !std::isfinite(c.c0)) {
    throw DomainError("extract_track_params: c0 = 0 describes a track of infinite radius");
  }
  TrackParams out;
  out.b = 1.0 / (2.0 * c.c0);
  out.a = -c.c1 * out.b;
  const double R = std::hypot(out.a, out.b);
  const double ratio = out.b / R;
  out.epsT = -c.c2 * ratio * ratio * ratio;
  out.pT = pt_from_radius(B, R);
  return out;
}

/// Result of fitting a set of transverse hit positions in a rotated frame.
struct TrackEstimate {
  ParabolaFit fit;       // coefficients in the rotated frame
  double frame_phi = 0;  // rotation applied to the hits before mapping
  TrackParams params;    // center (a, b) expressed in the detector frame
};

/// Fits a track from hit positions. The hits are first rotated so that their
/// mean azimuth lies on +x; in that frame the circle center sits near the
/// y-axis, which keeps b away from zero and the v(u) parabola single-valued for
/// any track direction.
inline TrackEstimate estimate_track(std::span<const PointXY> hits, double B) {
  double sx = 0.0, sy = 0.0;
  for (const auto& h : hits) {
    const double r = std::hypot(h.x, h.y);
    if (!(r > 0.0)) throw DomainError("estimate_track: hit on the beamline");
    sx += h.x / r;
    sy += h.y / r;
  }
  TrackEstimate est;
  est.frame_phi = std::atan2(sy, sx);
  const double cs = std::cos(est.frame_phi), sn = std::sin(est.frame_phi);

  std::vector<PointUV> uv;
  uv.reserve(hits.size());
  for (const auto& h : hits) {
    uv.push_back(to_conformal({cs * h.x + sn * h.y, -sn * h.x + cs * h.y}));
  }
  est.fit = fit_parabola_detailed(uv);
  const TrackParams local = extract_track_params(est.fit.coeffs, B);
  est.params = local;
  est.params.a = cs * local.a - sn * local.b;
  est.params.b = sn * local.a + cs * local.b;
  return est;
}

}  // namespace conftrack
