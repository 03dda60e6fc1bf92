#pragma once

// Rotated ellipses in η–φ space: residual encoding against a vertex, point
// membership, polygon-clipped IoU and the minimum-area enclosing ellipse.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "conftrack/angles.hpp"
#include "conftrack/error.hpp"

namespace conftrack {

struct EtaPhi {
  double eta = 0.0;
  double phi = 0.0;
};

/// Ellipse with center (eta_c, phi_c), semi-axes a >= b > 0 and orientation
/// theta of the major axis measured from the η-axis.
struct Ellipse5 {
  double eta_c = 0.0;
  double phi_c = 0.0;
  double a = 1.0;
  double b = 1.0;
  double theta = 0.0;

  double area() const { return kPi * a * b; }
};

/// Residuals of an ellipse relative to the vertex that predicts it.
struct EncodedBox {
  double d_eta = 0.0;
  double d_phi = 0.0;
  double d_a = 0.0;
  double d_b = 0.0;
  double d_theta = 0.0;

  std::array<double, 5> to_array() const { return {d_eta, d_phi, d_a, d_b, d_theta}; }
  static EncodedBox from_array(const std::array<double, 5>& v) {
    return {v[0], v[1], v[2], v[3], v[4]};
  }
};

struct BoxScales {
  double eta_m = 0.01;
  double phi_m = 0.004;
  double a_m = 0.038;
  double b_m = 0.005;
  double theta_m = kPi / 4.0;
  double delta_theta = 0.5;
};

inline constexpr double kSemiAxisFloor = 1e-4;

/// Brings an ellipse to canonical form: a >= b, theta in [0, π), phi_c in [0, 2π).
inline Ellipse5 canonicalize(Ellipse5 e) {
  if (e.b > e.a) {
    std::swap(e.a, e.b);
    e.theta += kPi / 2.0;
  }
  e.theta = wrap_half_turn(e.theta);
  e.phi_c = wrap_phi(e.phi_c);
  return e;
}

inline Ellipse5 dilate(Ellipse5 e, double k) {
  e.a *= k;
  e.b *= k;
  return e;
}

/// δθ uses the representative of θ (mod π) in [-Δθ, π - Δθ), so δθ lies in
/// [0, π/θ_m) and an ellipse at θ ≡ -Δθ encodes to zero.
inline EncodedBox encode_box(const Ellipse5& e, EtaPhi vertex, const BoxScales& s = {}) {
  if (!(e.a > 0.0) || !(e.b > 0.0)) {
    throw DomainError("encode_box: semi-axes must be positive");
  }
  EncodedBox d;
  d.d_eta = (e.eta_c - vertex.eta) / s.eta_m;
  d.d_phi = delta_phi(e.phi_c, vertex.phi) / s.phi_m;
  d.d_a = std::log(e.a / s.a_m);
  d.d_b = std::log(e.b / s.b_m);
  d.d_theta = wrap_half_turn(e.theta + s.delta_theta) / s.theta_m;
  return d;
}

inline Ellipse5 decode_box(const EncodedBox& d, EtaPhi vertex, const BoxScales& s = {}) {
  Ellipse5 e;
  e.eta_c = vertex.eta + d.d_eta * s.eta_m;
  e.phi_c = vertex.phi + d.d_phi * s.phi_m;
  e.a = s.a_m * std::exp(d.d_a);
  e.b = s.b_m * std::exp(d.d_b);
  e.theta = d.d_theta * s.theta_m - s.delta_theta;
  return canonicalize(e);
}

/// Value of the ellipse's quadratic form at p; 1 on the boundary.
inline double ellipse_form(const Ellipse5& e, EtaPhi p) {
  const double de = p.eta - e.eta_c;
  const double dp = delta_phi(p.phi, e.phi_c);
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  const double x = (de * c + dp * s) / e.a;
  const double y = (-de * s + dp * c) / e.b;
  return x * x + y * y;
}

/// Boundary inclusive; the 1e-12 slack absorbs rounding in the rotation.
inline bool point_in_ellipse(const Ellipse5& e, EtaPhi p) {
  return ellipse_form(e, p) <= 1.0 + 1e-12;
}

namespace detail {

struct Vec2 {
  double x, y;
};

inline double cross(Vec2 o, Vec2 a, Vec2 b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline double polygon_area(const std::vector<Vec2>& poly) {
  double s = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    s += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(s);
}

// Counter-clockwise polygon with the same area as the ellipse, centered at
// `center` in a local (η, φ) frame.
inline std::vector<Vec2> ellipse_polygon(const Ellipse5& e, Vec2 center, int n) {
  const double step = kTwoPi / n;
  const double k = std::sqrt(step / std::sin(step));
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  std::vector<Vec2> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double x = k * e.a * std::cos(i * step);
    const double y = k * e.b * std::sin(i * step);
    out.push_back({center.x + c * x - s * y, center.y + s * x + c * y});
  }
  return out;
}

// Sutherland–Hodgman: clips `subject` against the convex CCW polygon `clip`.
inline std::vector<Vec2> clip_convex(std::vector<Vec2> subject, const std::vector<Vec2>& clip) {
  for (std::size_t i = 0, n = clip.size(); i < n && !subject.empty(); ++i) {
    const Vec2 a = clip[i];
    const Vec2 b = clip[(i + 1) % n];
    std::vector<Vec2> next;
    next.reserve(subject.size() + 1);
    for (std::size_t j = 0, m = subject.size(); j < m; ++j) {
      const Vec2 p = subject[j];
      const Vec2 q = subject[(j + 1) % m];
      const double cp = cross(a, b, p);
      const double cq = cross(a, b, q);
      if (cp >= 0.0) next.push_back(p);
      if ((cp >= 0.0) != (cq >= 0.0)) {
        const double t = cp / (cp - cq);
        next.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    }
    subject = std::move(next);
  }
  return subject;
}

}  // namespace detail

inline constexpr int kDefaultIouResolution = 64;

/// Intersection over union of two ellipses, each replaced by an equal-area
/// `resolution`-gon. Convex clipping is exact, so the only error is the
/// polygonalization, O(1/resolution^2).
inline double ellipse_iou(const Ellipse5& e1, const Ellipse5& e2,
                          int resolution = kDefaultIouResolution) {
  if (resolution < 3) throw DomainError("ellipse_iou: resolution must be >= 3");
  const double dx = e2.eta_c - e1.eta_c;
  const double dy = delta_phi(e2.phi_c, e1.phi_c);
  if (std::hypot(dx, dy) > e1.a + e2.a) return 0.0;

  const auto p1 = detail::ellipse_polygon(e1, {0.0, 0.0}, resolution);
  const auto p2 = detail::ellipse_polygon(e2, {dx, dy}, resolution);
  const double a1 = detail::polygon_area(p1);
  const double a2 = detail::polygon_area(p2);
  const auto inter = detail::clip_convex(p1, p2);
  const double ai = inter.size() >= 3 ? detail::polygon_area(inter) : 0.0;
  const double uni = a1 + a2 - ai;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(ai / uni, 0.0, 1.0);
}

struct MveeOptions {
  double tolerance = 1e-6;
  double floor = kSemiAxisFloor;
  int max_iterations = 100000;
};

namespace detail {

struct SymEigen2 {
  double lo, hi;       // eigenvalues, lo <= hi
  double angle_hi;     // direction of the eigenvector for `hi`
};

inline SymEigen2 sym_eigen2(double p, double q, double r) {
  const double mean = 0.5 * (p + r);
  const double d = std::hypot(0.5 * (p - r), q);
  return {mean - d, mean + d, 0.5 * std::atan2(2.0 * q, p - r)};
}

}  // namespace detail

/// Minimum-area ellipse enclosing the points (Khachiyan's barycentric scheme).
/// φ is unwrapped around the first point, so sets straddling φ = 0 work.
/// Coincident or collinear inputs degenerate to a point or a segment and pick up
/// the semi-axis floor. The result always contains every input point.
inline Ellipse5 mvee(std::span<const EtaPhi> points, const MveeOptions& opt = {}) {
  const std::size_t n = points.size();
  if (n == 0) throw DomainError("mvee: empty point set");

  std::vector<detail::Vec2> pts;
  pts.reserve(n);
  const double phi_ref = points[0].phi;
  for (const auto& p : points) pts.push_back({p.eta, phi_ref + delta_phi(p.phi, phi_ref)});

  detail::Vec2 mean{0.0, 0.0};
  for (const auto& p : pts) {
    mean.x += p.x;
    mean.y += p.y;
  }
  mean.x /= static_cast<double>(n);
  mean.y /= static_cast<double>(n);
  double scale = 0.0;
  for (auto& p : pts) {
    p.x -= mean.x;
    p.y -= mean.y;
    scale = std::max({scale, std::abs(p.x), std::abs(p.y)});
  }

  auto finish = [&](Ellipse5 e) {
    e.a = std::max(e.a, opt.floor);
    e.b = std::max(e.b, opt.floor);
    return canonicalize(e);
  };

  if (!(scale > 0.0)) {
    return finish({mean.x, mean.y, opt.floor, opt.floor, 0.0});
  }
  for (auto& p : pts) {
    p.x /= scale;
    p.y /= scale;
  }

  double cxx = 0.0, cxy = 0.0, cyy = 0.0;
  for (const auto& p : pts) {
    cxx += p.x * p.x;
    cxy += p.x * p.y;
    cyy += p.y * p.y;
  }
  const auto cov = detail::sym_eigen2(cxx, cxy, cyy);
  if (n < 3 || cov.lo <= 1e-14 * cov.hi) {
    // Segment along the principal direction.
    const double ux = std::cos(cov.angle_hi), uy = std::sin(cov.angle_hi);
    double tmin = INFINITY, tmax = -INFINITY;
    for (const auto& p : pts) {
      const double t = p.x * ux + p.y * uy;
      tmin = std::min(tmin, t);
      tmax = std::max(tmax, t);
    }
    const double mid = 0.5 * (tmin + tmax);
    Ellipse5 e;
    e.eta_c = mean.x + scale * mid * ux;
    e.phi_c = mean.y + scale * mid * uy;
    e.a = 0.5 * scale * (tmax - tmin);
    e.b = 0.0;
    e.theta = cov.angle_hi;
    return finish(e);
  }

  // Khachiyan iteration on the lifted points (x, y, 1).
  std::vector<double> u(n, 1.0 / static_cast<double>(n));
  double mx = 0.0, my = 0.0;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    mx = 0.0;
    my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sxx += u[i] * pts[i].x * pts[i].x;
      sxy += u[i] * pts[i].x * pts[i].y;
      syy += u[i] * pts[i].y * pts[i].y;
      mx += u[i] * pts[i].x;
      my += u[i] * pts[i].y;
    }
    // X = [[sxx sxy mx] [sxy syy my] [mx my 1]]; M_i = q_i^T X^-1 q_i
    const double m00 = sxx, m01 = sxy, m02 = mx, m11 = syy, m12 = my, m22 = 1.0;
    const double c00 = m11 * m22 - m12 * m12;
    const double c01 = -(m01 * m22 - m12 * m02);
    const double c02 = m01 * m12 - m11 * m02;
    const double c11 = m00 * m22 - m02 * m02;
    const double c12 = -(m00 * m12 - m01 * m02);
    const double c22 = m00 * m11 - m01 * m01;
    const double det = m00 * c00 + m01 * c01 + m02 * c02;
    std::size_t jmax = 0;
    double best = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = pts[i].x, y = pts[i].y;
      const double val = (c00 * x * x + c11 * y * y + c22 + 2.0 * (c01 * x * y + c02 * x + c12 * y)) / det;
      if (val > best) {
        best = val;
        jmax = i;
      }
    }
    const double step = (best - 3.0) / (3.0 * (best - 1.0));
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double next = (1.0 - step) * u[i] + (i == jmax ? step : 0.0);
      change += (next - u[i]) * (next - u[i]);
      u[i] = next;
    }
    if (std::sqrt(change) < opt.tolerance) break;
  }
  mx = 0.0;
  my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += u[i] * pts[i].x;
    my += u[i] * pts[i].y;
  }
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pts[i].x - mx, y = pts[i].y - my;
    sxx += u[i] * x * x;
    sxy += u[i] * x * y;
    syy += u[i] * y * y;
  }
  // Shape matrix A = (1/d) S^-1 with d = 2.
  const double det = sxx * syy - sxy * sxy;
  double axx = 0.5 * syy / det, axy = -0.5 * sxy / det, ayy = 0.5 * sxx / det;
  double worst = 0.0;
  for (const auto& p : pts) {
    const double x = p.x - mx, y = p.y - my;
    worst = std::max(worst, axx * x * x + 2.0 * axy * x * y + ayy * y * y);
  }
  if (worst > 1.0) {
    axx /= worst;
    axy /= worst;
    ayy /= worst;
  }
  const auto eig = detail::sym_eigen2(axx, axy, ayy);
  Ellipse5 e;
  e.eta_c = mean.x + scale * mx;
  e.phi_c = mean.y + scale * my;
  e.a = scale / std::sqrt(eig.lo);
  e.b = scale / std::sqrt(eig.hi);
  // major axis follows the smaller eigenvalue, perpendicular to angle_hi
  e.theta = eig.angle_hi + kPi / 2.0;
  return finish(e);
}

}  // namespace conftrack
