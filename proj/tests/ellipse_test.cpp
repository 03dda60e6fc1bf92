#include "conftrack/ellipse.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "test_support.hpp"

namespace conftrack {
namespace {

using testing::Rng;
using testing::uniform;

// Independent membership test for the Monte Carlo oracle: builds the inverse
// shape matrix explicitly instead of rotating the point.
bool inside_by_matrix(const Ellipse5& e, double x, double y) {
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  const double ia = 1.0 / (e.a * e.a), ib = 1.0 / (e.b * e.b);
  const double qxx = c * c * ia + s * s * ib;
  const double qxy = c * s * (ia - ib);
  const double qyy = s * s * ia + c * c * ib;
  const double dx = x - e.eta_c, dy = y - e.phi_c;
  return qxx * dx * dx + 2.0 * qxy * dx * dy + qyy * dy * dy <= 1.0;
}

double monte_carlo_iou(const Ellipse5& e1, const Ellipse5& e2, int samples, Rng& rng) {
  const double lo_x = std::min(e1.eta_c - e1.a, e2.eta_c - e2.a);
  const double hi_x = std::max(e1.eta_c + e1.a, e2.eta_c + e2.a);
  const double lo_y = std::min(e1.phi_c - e1.a, e2.phi_c - e2.a);
  const double hi_y = std::max(e1.phi_c + e1.a, e2.phi_c + e2.a);
  long both = 0, either = 0;
  for (int i = 0; i < samples; ++i) {
    const double x = uniform(rng, lo_x, hi_x), y = uniform(rng, lo_y, hi_y);
    const bool in1 = inside_by_matrix(e1, x, y), in2 = inside_by_matrix(e2, x, y);
    both += in1 && in2;
    either += in1 || in2;
  }
  return either ? static_cast<double>(both) / static_cast<double>(either) : 0.0;
}

Ellipse5 random_ellipse(Rng& rng) {
  return canonicalize({uniform(rng, -3.0, 3.0), uniform(rng, 0.0, kTwoPi), uniform(rng, 1e-3, 0.2),
                       uniform(rng, 1e-3, 0.2), uniform(rng, 0.0, kPi)});
}

TEST(EncodeBox, ZeroCase) {
  const BoxScales s;
  const Ellipse5 e = canonicalize({0.3, 1.2, s.a_m, s.b_m, -s.delta_theta});
  const auto d = encode_box(e, {0.3, 1.2}, s);
  EXPECT_NEAR(d.d_eta, 0.0, 1e-15);
  EXPECT_NEAR(d.d_phi, 0.0, 1e-15);
  EXPECT_NEAR(d.d_a, 0.0, 1e-15);
  EXPECT_NEAR(d.d_b, 0.0, 1e-15);
  EXPECT_NEAR(d.d_theta, 0.0, 1e-15);
}

TEST(EncodeBox, ScaleConstantExamples) {
  const BoxScales s;
  EXPECT_DOUBLE_EQ(s.eta_m, 0.01);
  EXPECT_DOUBLE_EQ(s.phi_m, 0.004);
  EXPECT_DOUBLE_EQ(s.a_m, 0.038);
  EXPECT_DOUBLE_EQ(s.b_m, 0.005);
  EXPECT_DOUBLE_EQ(s.theta_m, kPi / 4.0);
  EXPECT_DOUBLE_EQ(s.delta_theta, 0.5);

  const auto d = encode_box({0.51, 2.0, 0.05, 0.01, kPi / 4.0}, {0.5, 2.0}, s);
  EXPECT_NEAR(d.d_eta, 1.0, 1e-12);
  EXPECT_NEAR(d.d_theta, 1.0 + 2.0 / kPi, 1e-14);
}

TEST(EncodeBox, PhiResidualTakesShortArc) {
  const BoxScales s;
  const auto d = encode_box({0.0, 0.002, 0.05, 0.01, 0.0}, {0.0, kTwoPi - 0.002}, s);
  EXPECT_NEAR(d.d_phi, 1.0, 1e-9);
}

TEST(EncodeBox, NonPositiveAxesRejected) {
  EXPECT_THROW(encode_box({0.0, 0.0, 0.0, 0.01, 0.0}, {0.0, 0.0}), DomainError);
  EXPECT_THROW(encode_box({0.0, 0.0, 0.05, -0.01, 0.0}, {0.0, 0.0}), DomainError);
}

TEST(DecodeBox, Examples) {
  const BoxScales s;
  const auto e = decode_box({}, {0.0, 0.0}, s);
  EXPECT_DOUBLE_EQ(e.eta_c, 0.0);
  EXPECT_DOUBLE_EQ(e.phi_c, 0.0);
  EXPECT_DOUBLE_EQ(e.a, s.a_m);
  EXPECT_DOUBLE_EQ(e.b, s.b_m);
  EXPECT_NEAR(e.theta, kPi - s.delta_theta, 1e-15);

  EncodedBox d;
  d.d_a = std::log(2.0);
  EXPECT_NEAR(decode_box(d, {0.0, 0.0}, s).a, 0.076, 1e-15);
}

TEST(DecodeBox, SwapsAxesWhenMinorExceedsMajor) {
  EncodedBox d;
  d.d_a = std::log(0.001 / 0.038);
  d.d_b = std::log(0.02 / 0.005);
  d.d_theta = 0.5 / (kPi / 4.0);  // θ = 0 before the swap
  const auto e = decode_box(d, {0.0, 1.0});
  EXPECT_NEAR(e.a, 0.02, 1e-15);
  EXPECT_NEAR(e.b, 0.001, 1e-15);
  EXPECT_NEAR(e.theta, kPi / 2.0, 1e-12);
}

TEST(EncodeDecode, RoundTripProperty) {
  Rng rng(21);
  const BoxScales s;
  for (int i = 0; i < 10000; ++i) {
    const Ellipse5 e = random_ellipse(rng);
    const EtaPhi v{e.eta_c + uniform(rng, -0.1, 0.1), wrap_phi(e.phi_c + uniform(rng, -0.1, 0.1))};
    const Ellipse5 back = decode_box(encode_box(e, v, s), v, s);
    ASSERT_NEAR(back.eta_c, e.eta_c, 1e-12);
    ASSERT_NEAR(delta_phi(back.phi_c, e.phi_c), 0.0, 1e-12);
    ASSERT_NEAR(back.a, e.a, 1e-12);
    ASSERT_NEAR(back.b, e.b, 1e-12);
    ASSERT_NEAR(std::remainder(back.theta - e.theta, kPi), 0.0, 1e-12);
  }
}

TEST(PointInEllipse, Examples) {
  const Ellipse5 e{0.5, 1.0, 0.2, 0.05, 0.7};
  EXPECT_TRUE(point_in_ellipse(e, {0.5, 1.0}));
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  EXPECT_TRUE(point_in_ellipse(e, {0.5 + e.a * c, 1.0 + e.a * s}));
  EXPECT_FALSE(point_in_ellipse(e, {0.5 + 1.001 * e.a * c, 1.0 + 1.001 * e.a * s}));
  EXPECT_TRUE(point_in_ellipse(e, {0.5 - e.b * s, 1.0 + e.b * c}));
  EXPECT_FALSE(point_in_ellipse(e, {0.5 - 1.001 * e.b * s, 1.0 + 1.001 * e.b * c}));
}

TEST(PointInEllipse, WrapsPhi) {
  const Ellipse5 e{0.0, 0.01, 0.05, 0.05, 0.0};
  EXPECT_TRUE(point_in_ellipse(e, {0.0, kTwoPi - 0.02}));
  EXPECT_FALSE(point_in_ellipse(e, {0.0, kTwoPi - 0.05}));
}

TEST(EllipseIou, IdenticalAndDisjoint) {
  const Ellipse5 e{0.0, 1.0, 0.1, 0.03, 0.4};
  EXPECT_NEAR(ellipse_iou(e, e), 1.0, 1e-6);
  const Ellipse5 far{0.25, 1.0, 0.1, 0.03, 0.4};
  EXPECT_EQ(ellipse_iou(e, far), 0.0);
}

TEST(EllipseIou, UnitCircleLens) {
  // lens area of two unit circles at distance 1: 2π/3 - √3/2
  const double lens = 2.0 * kPi / 3.0 - std::sqrt(3.0) / 2.0;
  const double expected = lens / (2.0 * kPi - lens);
  EXPECT_NEAR(expected, 0.2430, 5e-5);
  const Ellipse5 c1{0.0, 2.0, 1.0, 1.0, 0.0};
  const Ellipse5 c2{1.0, 2.0, 1.0, 1.0, 0.0};
  EXPECT_NEAR(ellipse_iou(c1, c2), expected, 0.005);
  Rng rng(22);
  EXPECT_NEAR(monte_carlo_iou(c1, c2, 1000000, rng), expected, 0.005);
}

TEST(EllipseIou, MatchesMonteCarlo) {
  Rng rng(23);
  int compared = 0;
  while (compared < 10) {
    const Ellipse5 e1 = canonicalize({0.0, 1.0, uniform(rng, 0.05, 0.2), uniform(rng, 0.01, 0.2), uniform(rng, 0.0, kPi)});
    const Ellipse5 e2 = canonicalize({uniform(rng, -0.15, 0.15), 1.0 + uniform(rng, -0.15, 0.15),
                                      uniform(rng, 0.05, 0.2), uniform(rng, 0.01, 0.2), uniform(rng, 0.0, kPi)});
    const double iou = ellipse_iou(e1, e2);
    if (iou == 0.0) continue;
    EXPECT_NEAR(iou, monte_carlo_iou(e1, e2, 200000, rng), 0.005);
    ++compared;
  }
}

TEST(EllipseIou, SymmetricAndBounded) {
  Rng rng(24);
  for (int i = 0; i < 500; ++i) {
    Ellipse5 e1 = random_ellipse(rng);
    Ellipse5 e2 = random_ellipse(rng);
    e2.eta_c = e1.eta_c + uniform(rng, -0.2, 0.2);
    e2.phi_c = wrap_phi(e1.phi_c + uniform(rng, -0.2, 0.2));
    const double x = ellipse_iou(e1, e2), y = ellipse_iou(e2, e1);
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
    EXPECT_NEAR(x, y, 1e-9);
  }
}

TEST(EllipseIou, DecreasesUnderDilation) {
  const Ellipse5 e{0.0, 3.0, 0.1, 0.02, 1.1};
  double prev = 1.0;
  for (double k = 1.1; k < 4.0; k += 0.1) {
    const double iou = ellipse_iou(e, dilate(e, k));
    EXPECT_LT(iou, prev);
    EXPECT_NEAR(iou, 1.0 / (k * k), 0.01);
    prev = iou;
  }
}

TEST(EllipseIou, PhiTranslationInvariant) {
  Rng rng(25);
  for (int i = 0; i < 100; ++i) {
    Ellipse5 e1 = random_ellipse(rng);
    Ellipse5 e2 = e1;
    e2.eta_c += uniform(rng, -0.1, 0.1);
    e2.phi_c = wrap_phi(e2.phi_c + uniform(rng, -0.1, 0.1));
    e2.a *= 1.3;
    const double shift = uniform(rng, 0.0, kTwoPi);
    Ellipse5 s1 = e1, s2 = e2;
    s1.phi_c = wrap_phi(s1.phi_c + shift);
    s2.phi_c = wrap_phi(s2.phi_c + shift);
    EXPECT_NEAR(ellipse_iou(e1, e2), ellipse_iou(s1, s2), 1e-9);
  }
}

TEST(Mvee, UnitSquareCorners) {
  const std::vector<EtaPhi> pts{{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
  const auto e = mvee(pts, {.tolerance = 1e-6});
  EXPECT_NEAR(e.eta_c, 0.5, 1e-3);
  EXPECT_NEAR(e.phi_c, 0.5, 1e-3);
  EXPECT_NEAR(e.a, std::sqrt(2.0) / 2.0, 1e-3);
  EXPECT_NEAR(e.b, std::sqrt(2.0) / 2.0, 1e-3);

  // Brute-force: no centered ellipse on a parameter grid that contains the
  // corners is smaller than the returned one (beyond grid resolution).
  double best_area = INFINITY;
  for (double a = 0.5; a <= 1.2; a += 0.005) {
    for (double b = 0.5; b <= a; b += 0.005) {
      for (double th = 0.0; th < kPi; th += kPi / 90.0) {
        const Ellipse5 cand{0.5, 0.5, a, b, th};
        bool ok = true;
        for (const auto& p : pts) ok = ok && inside_by_matrix(cand, p.eta, p.phi);
        if (ok) best_area = std::min(best_area, cand.area());
      }
    }
  }
  EXPECT_LE(e.area(), best_area * (1.0 + 1e-3));
}

TEST(Mvee, SinglePointIsFloorCircle) {
  const std::vector<EtaPhi> pts{{0.3, 2.0}};
  const auto e = mvee(pts);
  EXPECT_DOUBLE_EQ(e.eta_c, 0.3);
  EXPECT_DOUBLE_EQ(e.phi_c, 2.0);
  EXPECT_DOUBLE_EQ(e.a, kSemiAxisFloor);
  EXPECT_DOUBLE_EQ(e.b, kSemiAxisFloor);
}

TEST(Mvee, TwoPointsGiveSegment) {
  const std::vector<EtaPhi> pts{{0.0, 1.0}, {0.03, 1.04}};
  const auto e = mvee(pts);
  EXPECT_NEAR(e.a, 0.025, 1e-12);
  EXPECT_DOUBLE_EQ(e.b, kSemiAxisFloor);
  EXPECT_NEAR(e.eta_c, 0.015, 1e-12);
  EXPECT_NEAR(e.phi_c, 1.02, 1e-12);
  EXPECT_NEAR(e.theta, std::atan2(0.04, 0.03), 1e-12);
}

TEST(Mvee, RecoversSampledEllipse) {
  Rng rng(26);
  for (int i = 0; i < 50; ++i) {
    const Ellipse5 truth = canonicalize({uniform(rng, -1, 1), uniform(rng, 1, 5), uniform(rng, 0.02, 0.1),
                                         uniform(rng, 0.01, 0.1), uniform(rng, 0, kPi)});
    std::vector<EtaPhi> pts;
    const double c = std::cos(truth.theta), s = std::sin(truth.theta);
    for (int k = 0; k < 24; ++k) {
      const double t = kTwoPi * k / 24.0;
      const double x = truth.a * std::cos(t), y = truth.b * std::sin(t);
      pts.push_back({truth.eta_c + c * x - s * y, truth.phi_c + s * x + c * y});
    }
    const auto e = mvee(pts, {.tolerance = 1e-9});
    EXPECT_NEAR(e.a, truth.a, 1e-3);
    EXPECT_NEAR(e.b, truth.b, 1e-3);
    EXPECT_NEAR(e.eta_c, truth.eta_c, 1e-6);
    EXPECT_NEAR(e.phi_c, truth.phi_c, 1e-6);
  }
}

TEST(Mvee, ContainsInputsAndHandlesWrap) {
  Rng rng(27);
  for (int i = 0; i < 300; ++i) {
    const int n = 1 + static_cast<int>(rng() % 12);
    const double phi0 = uniform(rng, -0.1, 0.1);
    std::vector<EtaPhi> pts;
    for (int k = 0; k < n; ++k) {
      pts.push_back({uniform(rng, -0.05, 0.05), wrap_phi(phi0 + uniform(rng, -0.05, 0.05))});
    }
    const double tol = 1e-6;
    const auto e = mvee(pts, {.tolerance = tol});
    EXPECT_GE(e.a, e.b);
    EXPECT_GE(e.b, kSemiAxisFloor);
    EXPECT_LT(e.a, 0.2);  // stays local even when the set straddles φ = 0
    for (const auto& p : pts) EXPECT_TRUE(point_in_ellipse(dilate(e, 1.0 + tol), p));

    // φ-translation equivariance of the shape
    const double shift = uniform(rng, 0.0, kTwoPi);
    std::vector<EtaPhi> moved;
    for (const auto& p : pts) moved.push_back({p.eta, wrap_phi(p.phi + shift)});
    const auto m = mvee(moved, {.tolerance = tol});
    EXPECT_NEAR(m.a, e.a, 1e-9);
    EXPECT_NEAR(m.b, e.b, 1e-9);
    EXPECT_NEAR(m.eta_c, e.eta_c, 1e-9);
    EXPECT_NEAR(delta_phi(m.phi_c, e.phi_c + shift), 0.0, 1e-9);
  }
}

}  // namespace
}  // namespace conftrack
