#include "conftrack/postprocess.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "test_support.hpp"

namespace conftrack {
namespace {

using testing::Rng;
using testing::uniform;

std::set<std::set<std::size_t>> groups_of(const std::vector<TrackCandidate>& cs) {
  std::set<std::set<std::size_t>> out;
  for (const auto& c : cs) out.insert(std::set<std::size_t>(c.members.begin(), c.members.end()));
  return out;
}

TEST(MergeEllipses, ThreeIdentical) {
  const Ellipse5 e{0.3, 1.2, 0.02, 0.01, 0.4};
  const std::vector<Ellipse5> es{e, e, e};
  const auto cs = merge_ellipses(es, std::vector<double>{0.9, 0.8, 0.7}, 0.5);
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_NEAR(cs[0].confidence, 0.8, 1e-15);
  EXPECT_NEAR(cs[0].ellipse.eta_c, e.eta_c, 1e-15);
  EXPECT_NEAR(cs[0].ellipse.phi_c, e.phi_c, 1e-15);
  EXPECT_NEAR(cs[0].ellipse.a, e.a, 1e-15);
  EXPECT_NEAR(cs[0].ellipse.b, e.b, 1e-15);
  EXPECT_NEAR(cs[0].ellipse.theta, e.theta, 1e-12);
  EXPECT_EQ(cs[0].members, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(MergeEllipses, DisjointStaySeparate) {
  const std::vector<Ellipse5> es{{0.0, 1.0, 0.01, 0.01, 0.0}, {0.5, 1.0, 0.01, 0.01, 0.0}};
  const auto cs = merge_ellipses(es, std::vector<double>{0.6, 0.9}, 0.5);
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(cs[0].members, (std::vector<std::size_t>{1}));  // descending confidence
  EXPECT_EQ(cs[1].members, (std::vector<std::size_t>{0}));
}

TEST(MergeEllipses, PairAboveThresholdPlusOutlier) {
  // offset two unit circles until their IoU is 0.6
  auto circle = [](double x) { return Ellipse5{x, 2.0, 1.0, 1.0, 0.0}; };
  double lo = 0.0, hi = 2.0;
  for (int k = 0; k < 60; ++k) {
    const double mid = 0.5 * (lo + hi);
    (ellipse_iou(circle(0.0), circle(mid)) > 0.6 ? lo : hi) = mid;
  }
  const Ellipse5 A = circle(0.0), B = circle(lo), C{10.0, 2.0, 1.0, 1.0, 0.0};
  ASSERT_NEAR(ellipse_iou(A, B), 0.6, 1e-3);
  const std::vector<Ellipse5> es{A, B, C};
  const auto cs = merge_ellipses(es, std::vector<double>{0.9, 0.7, 0.8}, 0.5);
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(groups_of(cs), (std::set<std::set<std::size_t>>{{0, 1}, {2}}));
  const auto& ab = cs[0].members.size() == 2 ? cs[0] : cs[1];
  EXPECT_NEAR(ab.ellipse.eta_c, lo / 2.0, 1e-12);
  EXPECT_NEAR(ab.confidence, 0.8, 1e-15);
}

TEST(MergeEllipses, PhiAndThetaAveragedOnTheCircle) {
  const std::vector<Ellipse5> es{{0.0, 0.002, 0.05, 0.02, 0.02}, {0.0, kTwoPi - 0.002, 0.05, 0.02, kPi - 0.02}};
  const auto cs = merge_ellipses(es, std::vector<double>{0.5, 0.5}, 0.3);
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_NEAR(std::abs(delta_phi(cs[0].ellipse.phi_c, 0.0)), 0.0, 1e-12);
  EXPECT_NEAR(std::min(cs[0].ellipse.theta, kPi - cs[0].ellipse.theta), 0.0, 1e-12);
}

TEST(MergeEllipses, RescoreHookChangesSeed) {
  const std::vector<Ellipse5> es{{0.0, 1.0, 1.0, 1.0, 0.0}, {0.9, 1.0, 1.0, 1.0, 0.0}, {1.8, 1.0, 1.0, 1.0, 0.0}};
  const std::vector<double> s{0.9, 0.5, 0.1};
  // seed 0 takes 1; 2 stays alone
  EXPECT_EQ(groups_of(merge_ellipses(es, s, 0.25)), (std::set<std::set<std::size_t>>{{0, 1}, {2}}));
  const auto boosted = merge_ellipses(es, s, 0.25, [](std::size_t i, double v) { return i == 1 ? 1.0 : v; });
  EXPECT_EQ(groups_of(boosted), (std::set<std::set<std::size_t>>{{0, 1, 2}}));
}

std::vector<Ellipse5> random_ellipses(Rng& rng, int n) {
  std::vector<Ellipse5> es;
  for (int i = 0; i < n; ++i) {
    const double a = uniform(rng, 0.01, 0.1);
    es.push_back(canonicalize({uniform(rng, -0.5, 0.5), uniform(rng, 0.0, kTwoPi), a, a * uniform(rng, 0.2, 1.0),
                               uniform(rng, 0.0, kPi)}));
  }
  return es;
}

TEST(MergeEllipses, PartitionAndConfidenceBounds) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto es = random_ellipses(rng, 1 + static_cast<int>(rng() % 30));
    std::vector<double> s;
    for (std::size_t i = 0; i < es.size(); ++i) s.push_back(uniform(rng, 0.0, 1.0));
    const auto cs = merge_ellipses(es, s, uniform(rng, 0.05, 0.95));
    std::vector<int> seen(es.size(), 0);
    for (const auto& c : cs) {
      ASSERT_FALSE(c.members.empty());
      double lo = 1.0, hi = 0.0;
      for (auto k : c.members) {
        ++seen[k];
        lo = std::min(lo, s[k]);
        hi = std::max(hi, s[k]);
      }
      EXPECT_GE(c.confidence, lo - 1e-15);
      EXPECT_LE(c.confidence, hi + 1e-15);
    }
    EXPECT_EQ(std::count(seen.begin(), seen.end(), 1), static_cast<long>(es.size()));
    for (std::size_t k = 1; k < cs.size(); ++k) EXPECT_GE(cs[k - 1].confidence, cs[k].confidence);
  }
}

TEST(MergeEllipses, IdempotentOnSeparatedCandidates) {
  Rng rng(2);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const double th = 0.5;
    const auto es = random_ellipses(rng, 2 + static_cast<int>(rng() % 20));
    std::vector<double> s;
    for (std::size_t i = 0; i < es.size(); ++i) s.push_back(uniform(rng, 0.0, 1.0));
    const auto cs = merge_ellipses(es, s, th);
    std::vector<Ellipse5> ce;
    std::vector<double> cc;
    for (const auto& c : cs) {
      ce.push_back(c.ellipse);
      cc.push_back(c.confidence);
    }
    bool separated = true;
    for (std::size_t i = 0; i < ce.size(); ++i) {
      for (std::size_t j = i + 1; j < ce.size(); ++j) separated &= ellipse_iou(ce[i], ce[j]) <= th;
    }
    if (!separated) continue;
    ++checked;
    const auto again = merge_ellipses(ce, cc, th);
    ASSERT_EQ(again.size(), cs.size());
    for (std::size_t k = 0; k < cs.size(); ++k) {
      EXPECT_EQ(again[k].members, std::vector<std::size_t>{k});
      EXPECT_EQ(again[k].confidence, cs[k].confidence);
      EXPECT_NEAR(again[k].ellipse.eta_c, cs[k].ellipse.eta_c, 1e-15);
      EXPECT_NEAR(again[k].ellipse.a, cs[k].ellipse.a, 1e-15);
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(MergeEllipses, ScoreOrderInvarianceForSeparatedFamilies) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    // families of slightly jittered copies, far apart from each other
    std::vector<Ellipse5> es;
    std::set<std::set<std::size_t>> expected;
    const int n_fam = 1 + static_cast<int>(rng() % 5);
    for (int f = 0; f < n_fam; ++f) {
      const Ellipse5 base{f * 1.0, 1.0 + 0.7 * f, 0.05, 0.02, uniform(rng, 0.0, kPi)};
      std::set<std::size_t> fam;
      for (int k = 0; k < 1 + static_cast<int>(rng() % 4); ++k) {
        Ellipse5 e = base;
        e.eta_c += uniform(rng, -0.002, 0.002);
        e.a *= uniform(rng, 0.97, 1.03);
        fam.insert(es.size());
        es.push_back(canonicalize(e));
      }
      expected.insert(fam);
    }
    for (int perm = 0; perm < 5; ++perm) {
      std::vector<double> s;
      for (std::size_t i = 0; i < es.size(); ++i) s.push_back(uniform(rng, 0.0, 1.0));
      EXPECT_EQ(groups_of(merge_ellipses(es, s, 0.5)), expected);
    }
  }
}

TEST(MergeEllipses, Errors) {
  const std::vector<Ellipse5> es{{0, 0, 1, 1, 0}};
  EXPECT_THROW(merge_ellipses(es, std::vector<double>{}, 0.5), ShapeError);
  EXPECT_THROW(merge_ellipses(es, std::vector<double>{1.0}, 1.0), DomainError);
  EXPECT_TRUE(merge_ellipses({}, {}, 0.5).empty());
}

TEST(AssignHits, Rules) {
  std::vector<TrackCandidate> cs(2);
  cs[0].ellipse = {0.0, 1.0, 0.1, 0.1, 0.0};
  cs[0].confidence = 0.6;
  cs[1].ellipse = {0.15, 1.0, 0.1, 0.1, 0.0};
  cs[1].confidence = 0.9;
  const std::vector<EtaPhi> v{{-0.05, 1.0}, {0.08, 1.0}, {0.2, 1.0}, {0.5, 1.0}, {0.08, 1.0}};
  const std::vector<double> p{0.9, 0.9, 0.9, 0.9, 0.2};
  EXPECT_EQ(assign_hits(cs, v, p), (std::vector<int>{0, 1, 1, kUnassigned, kUnassigned}));
  EXPECT_EQ(assign_hits(cs, v, std::vector<double>(5, 0.1)), std::vector<int>(5, kUnassigned));
}

TEST(ChooseThreshold, SeparableMidpoint) {
  std::vector<IouPair> pairs{{0.8, true}, {0.95, true}, {0.85, true}, {0.2, false}, {0.0, false}, {0.1, false}};
  const auto c = choose_threshold(pairs);
  EXPECT_DOUBLE_EQ(c.threshold, 0.5);
  EXPECT_TRUE(c.separable);
  EXPECT_EQ(c.balanced_accuracy, 1.0);
  const auto one = choose_threshold(std::vector<IouPair>{{0.9, true}, {0.1, false}});
  EXPECT_DOUBLE_EQ(one.threshold, 0.5);
}

TEST(ChooseThreshold, OverlappingDistributions) {
  std::vector<IouPair> pairs{{0.3, true}, {0.6, true}, {0.3, false}, {0.6, false}};
  const auto c = choose_threshold(pairs);
  EXPECT_DOUBLE_EQ(c.balanced_accuracy, 0.5);
  EXPECT_FALSE(c.separable);
  EXPECT_DOUBLE_EQ(c.threshold, 0.5);
}

TEST(ChooseThreshold, MatchesExhaustiveScan) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<IouPair> pairs;
    const int n = 2 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      const bool same = i == 0 || (i != 1 && rng() % 2);
      // coarse grid so ties and shared values occur
      const double iou = std::round(uniform(rng, same ? 0.2 : 0.0, same ? 1.0 : 0.7) * 20.0) / 20.0;
      pairs.push_back({iou, same});
    }
    const auto c = choose_threshold(pairs);
    double best = 0.0;
    for (int k = 0; k <= 10000; ++k) best = std::max(best, balanced_accuracy(pairs, k / 10000.0));
    EXPECT_NEAR(c.balanced_accuracy, best, 1e-15);
    EXPECT_NEAR(balanced_accuracy(pairs, c.threshold), best, 1e-15);
    EXPECT_GE(c.threshold, 0.0);
    EXPECT_LE(c.threshold, 1.0);
  }
}

TEST(ChooseThreshold, SingleClassIsError) {
  EXPECT_THROW(choose_threshold(std::vector<IouPair>{{0.5, true}}), DomainError);
  EXPECT_THROW(choose_threshold(std::vector<IouPair>{}), DomainError);
}

}  // namespace
}  // namespace conftrack
