#include "conftrack/graph.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "test_support.hpp"

namespace conftrack {
namespace {

using testing::Rng;
using testing::uniform;

TEST(EtaPhiDistance, Examples) {
  EXPECT_NEAR(eta_phi_distance({0.0, 0.05}, {0.0, kTwoPi - 0.05}), 0.1, 1e-12);
  EXPECT_EQ(eta_phi_distance({0.3, 1.0}, {0.3, 1.0}), 0.0);
  EXPECT_NEAR(eta_phi_distance({0.0, 0.0}, {3.0, 0.0}), 3.0, 1e-15);
}

TEST(Dbscan, SparsePointsAreNoise) {
  std::vector<EtaPhi> pts{{0, 0}, {1, 0}, {2, 0}, {0, 1}, {0, 2}};
  EXPECT_EQ(dbscan(pts, {0.5, 2}), std::vector<int>(5, kUnclustered));
}

TEST(Dbscan, TwoSeparatedGroups) {
  std::vector<EtaPhi> pts;
  for (int g = 0; g < 2; ++g) {
    for (int k = 0; k < 4; ++k) pts.push_back({g * 1.0 + 0.01 * k, 1.0 + 0.01 * (k % 2)});
  }
  const auto labels = dbscan(pts, {0.05, 3});
  EXPECT_EQ(testing::canonical_partition(labels), (std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1}));
}

TEST(Dbscan, BorderPointJoinsFirstCluster) {
  // the last point reaches a core of each group but has only three neighbors
  std::vector<EtaPhi> q;
  for (double d : {0.08, 0.09, 0.10, 0.11}) q.push_back({-d, 1.0});
  for (double d : {0.08, 0.09, 0.10, 0.11}) q.push_back({d, 1.0});
  q.push_back({0.0, 1.0});
  const auto labels = dbscan(q, {0.085, 4});
  EXPECT_EQ(labels, (std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1, 0}));
  EXPECT_EQ(labels, testing::brute_force_dbscan(q, 0.085, 4));
}

TEST(Dbscan, InvalidParams) {
  std::vector<EtaPhi> pts{{0, 0}};
  EXPECT_THROW(dbscan(pts, {0.0, 2}), DomainError);
  EXPECT_THROW(dbscan(pts, {0.1, 0}), DomainError);
  std::vector<EtaPhi> bad{{std::nan(""), 0.0}};
  EXPECT_THROW(dbscan(bad, {0.1, 2}), DomainError);
}

std::vector<EtaPhi> random_points(Rng& rng, int n, double eta_span, double phi_lo, double phi_hi) {
  std::vector<EtaPhi> pts;
  for (int i = 0; i < n; ++i) pts.push_back({uniform(rng, -eta_span, eta_span), wrap_phi(uniform(rng, phi_lo, phi_hi))});
  return pts;
}

TEST(Dbscan, UniformPointsMatchBruteForce) {
  Rng rng(200);
  const auto pts = random_points(rng, 200, 0.5, 0.0, 1.0);
  EXPECT_EQ(testing::canonical_partition(dbscan(pts, {0.1, 4})),
            testing::canonical_partition(testing::brute_force_dbscan(pts, 0.1, 4)));
}

TEST(Dbscan, RandomSetsMatchBruteForce) {
  Rng rng(3);
  int clustered_sets = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 200);
    const double eps = uniform(rng, 0.02, 0.3);
    const int min_pts = 1 + static_cast<int>(rng() % 6);
    std::vector<EtaPhi> pts;
    switch (trial % 3) {
      case 0: pts = random_points(rng, n, 1.0, 0.0, kTwoPi); break;
      case 1: pts = random_points(rng, n, 0.3, -0.4, 0.4); break;  // straddles φ = 0
      default: {
        // tight blobs, some across the seam
        for (int i = 0; i < n; ++i) {
          const double c = (i % 4) * 1.6 + (i % 2 ? 0.0 : kTwoPi - 0.02);
          pts.push_back({uniform(rng, -0.1, 0.1) + (i % 3), wrap_phi(c + uniform(rng, -0.1, 0.1))});
        }
      }
    }
    const auto got = dbscan(pts, {eps, min_pts});
    const auto want = testing::brute_force_dbscan(pts, eps, min_pts);
    ASSERT_EQ(testing::canonical_partition(got), testing::canonical_partition(want))
        << "trial " << trial << " n=" << n << " eps=" << eps << " min_pts=" << min_pts;
    clustered_sets += *std::max_element(want.begin(), want.end()) >= 1;
  }
  EXPECT_GT(clustered_sets, 100);
}

TEST(Dbscan, PhiTranslationInvariance) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pts = random_points(rng, 150, 0.5, 0.0, 1.5);
    const auto base = testing::canonical_partition(dbscan(pts, {0.08, 3}));
    for (double shift : {kPi, kTwoPi - 0.7, 5.9}) {
      auto moved = pts;
      for (auto& p : moved) p.phi = wrap_phi(p.phi + shift);
      EXPECT_EQ(testing::canonical_partition(dbscan(moved, {0.08, 3})), base);
    }
  }
}

Hit hit(std::int64_t id, double eta, double phi, std::int64_t pid, int layer = 2) {
  const double r = 0.1;
  return make_hit(id, r * std::cos(phi), r * std::sin(phi), r * std::sinh(eta), layer, kSyntheticVolume, pid);
}

TEST(BuildGraph, CompleteSubgraphPerCluster) {
  Event e;
  for (int k = 0; k < 4; ++k) e.hits.push_back(hit(k + 1, 0.01 * k, 1.0, 7, k));
  const Graph g = build_graph(e, {0.05, 2});
  ASSERT_EQ(g.edges.size(), 6u);
  for (const auto& ed : g.edges) {
    EXPECT_LT(ed.i, ed.j);
    EXPECT_TRUE(ed.truth);
  }
  EXPECT_EQ(g.vertices[2].state[0], e.hits[2].z);
  EXPECT_EQ(g.vertices[2].state[1], 2.0);

  const Graph chain = build_graph(e, {0.05, 2}, EdgeTopology::kLayerAdjacent);
  EXPECT_EQ(chain.edges.size(), 3u);
}

TEST(BuildGraph, CrossParticleEdgesAreFalse) {
  Event e;
  e.hits = {hit(1, 0.0, 1.0, 5), hit(2, 0.01, 1.0, 5), hit(3, 0.02, 1.0, 6), hit(4, 0.03, 1.0, 6),
            hit(5, 0.015, 1.01, 0)};
  const Graph g = build_graph(e, {0.05, 2});
  ASSERT_EQ(g.edges.size(), 10u);
  for (const auto& ed : g.edges) {
    const auto pa = e.hits[ed.i].particle_id, pb = e.hits[ed.j].particle_id;
    EXPECT_EQ(ed.truth, pa != 0 && pa == pb);
  }
  EXPECT_EQ(std::count_if(g.edges.begin(), g.edges.end(), [](const GraphEdge& x) { return x.truth; }), 2);
  EXPECT_FALSE(g.vertices[4].is_track());
}

TEST(BuildGraph, IsolatedNoise) {
  Event e;
  for (int k = 0; k < 5; ++k) e.hits.push_back(hit(k + 1, 0.3 * k, 0.5 * k, 0));
  const Graph g = build_graph(e, {0.05, 2});
  EXPECT_TRUE(g.edges.empty());
  for (const auto& v : g.vertices) EXPECT_EQ(v.cluster, kUnclustered);
  EXPECT_THROW(build_graph(Event{}, {0.05, 2}), ConsistencyError);
}

TEST(BuildGraph, GeneratedEventEdgeLabelsAndPhiShift) {
  DetectorConfig det;
  GenConfig gen;
  gen.seed = 21;
  const Event e = generate_event(det, gen);
  const Graph g = build_graph(e, {});
  std::set<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& ed : g.edges) {
    ASSERT_LT(ed.i, ed.j);
    ASSERT_LT(ed.j, g.vertices.size());
    EXPECT_TRUE(edges.insert({ed.i, ed.j}).second);
    const auto pa = g.vertices[ed.i].particle_id, pb = g.vertices[ed.j].particle_id;
    EXPECT_EQ(ed.truth, pa != 0 && pa == pb);
  }
  Event shifted = e;
  for (auto& h : shifted.hits) h.phi = wrap_phi(h.phi + 2.5);
  const Graph gs = build_graph(shifted, {});
  ASSERT_EQ(gs.edges.size(), g.edges.size());
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    EXPECT_EQ(gs.edges[k].i, g.edges[k].i);
    EXPECT_EQ(gs.edges[k].j, g.edges[k].j);
  }
}

Event track_event(const std::vector<EtaPhi>& pts) {
  Event e;
  TruthTrack t;
  t.particle_id = 9;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    e.hits.push_back(hit(static_cast<std::int64_t>(k + 1), pts[k].eta, pts[k].phi, 9));
    t.hit_ids.push_back(static_cast<std::int64_t>(k + 1));
  }
  e.tracks.push_back(t);
  return e;
}

TEST(TruthEllipses, TwoHitTrack) {
  const Event e = track_event({{0.1, 1.0}, {0.14, 1.03}});
  const auto el = truth_ellipses(e);
  ASSERT_EQ(el.size(), 1u);
  EXPECT_EQ(el[0].first, 9);
  const Ellipse5& x = el[0].second;
  EXPECT_NEAR(x.a, 1.1 * 0.025, 1e-9);
  EXPECT_NEAR(x.b, kSemiAxisFloor, 1e-15);
  EXPECT_NEAR(x.eta_c, 0.12, 1e-12);
  EXPECT_NEAR(x.phi_c, 1.015, 1e-12);
  EXPECT_NEAR(x.theta, std::atan2(0.03, 0.04), 1e-9);
}

TEST(TruthEllipses, SingleHitTrack) {
  const auto x = truth_ellipses(track_event({{-0.4, 6.0}}))[0].second;
  EXPECT_NEAR(x.a, kSemiAxisFloor, 1e-15);
  EXPECT_NEAR(x.b, kSemiAxisFloor, 1e-15);
  EXPECT_NEAR(x.eta_c, -0.4, 1e-12);
  EXPECT_NEAR(x.phi_c, 6.0, 1e-12);
}

TEST(TruthEllipses, CollinearInEta) {
  const double L = 0.08;
  std::vector<EtaPhi> pts;
  for (int k = 0; k < 5; ++k) pts.push_back({0.2 + L * k / 4.0, 2.0});
  const auto x = truth_ellipses(track_event(pts))[0].second;
  EXPECT_NEAR(x.a, 1.1 * L / 2.0, 1e-9);
  EXPECT_NEAR(x.b, kSemiAxisFloor, 1e-15);
  EXPECT_NEAR(std::min(x.theta, kPi - x.theta), 0.0, 1e-9);
}

TEST(TruthEllipses, ContainmentOnGeneratedEvents) {
  DetectorConfig det;
  GenConfig gen;
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    gen.seed = seed;
    const Event e = generate_event(det, gen);
    const auto ells = truth_ellipses(e);
    ASSERT_EQ(ells.size(), e.tracks.size());
    std::map<std::int64_t, Ellipse5> by_pid(ells.begin(), ells.end());
    for (const auto& h : e.hits) {
      if (h.is_noise()) continue;
      EXPECT_TRUE(point_in_ellipse(by_pid.at(h.particle_id), {h.eta, h.phi}));
      ++checked;
    }
  }
  EXPECT_GT(checked, 300u);
}

TEST(AssignVertexTargets, Counting) {
  DetectorConfig det;
  GenConfig gen;
  gen.seed = 4;
  const Event e = generate_event(det, gen);
  const Graph g = build_training_graph(e, {});
  std::size_t targets = 0, tracks = 0;
  for (const auto& v : g.vertices) {
    targets += v.target.has_value();
    tracks += v.is_track();
  }
  EXPECT_EQ(targets, tracks);
  const auto y = class_targets(g);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], g.vertices[i].is_track() ? 1.0 : 0.0);

  // every vertex of one track carries the same target
  const auto pid = e.tracks[0].particle_id;
  std::optional<Ellipse5> first;
  for (const auto& v : g.vertices) {
    if (v.particle_id != pid) continue;
    if (!first) first = v.target;
    EXPECT_EQ(v.target->eta_c, first->eta_c);
    EXPECT_EQ(v.target->a, first->a);
  }
}

TEST(AssignVertexTargets, AllNoiseAndMissingEllipse) {
  Event e;
  for (int k = 0; k < 3; ++k) e.hits.push_back(hit(k + 1, 0.3 * k, 1.0, 0));
  const Graph g = build_training_graph(e, {});
  for (const auto& v : g.vertices) EXPECT_FALSE(v.target.has_value());
  for (double y : class_targets(g)) EXPECT_EQ(y, 0.0);

  Event orphan = track_event({{0.0, 1.0}});
  const Graph go = build_graph(orphan, {});
  EXPECT_THROW(assign_vertex_targets(go, {}), ConsistencyError);
}

}  // namespace
}  // namespace conftrack
