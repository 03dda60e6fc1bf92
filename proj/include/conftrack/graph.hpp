#pragma once

// Event -> hit graph: DBSCAN clusters in η–φ become edge sets, vertices carry
// (η, φ) coordinates, the initial state (z, layer) and per-vertex truth targets.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "conftrack/dbscan.hpp"
#include "conftrack/ellipse.hpp"
#include "conftrack/error.hpp"
#include "conftrack/event.hpp"

namespace conftrack {

enum class VertexClass { kTrack, kNoise };

enum class EdgeTopology {
  kComplete,       // every pair inside a cluster
  kLayerAdjacent,  // pairs on consecutive occupied layers inside a cluster
};

struct GraphVertex {
  double eta = 0.0;
  double phi = 0.0;
  std::array<double, 2> state{};  // (z, layer)
  std::int64_t hit_id = 0;
  std::int64_t particle_id = 0;
  double x = 0.0, y = 0.0;  // transverse position, for the conformal fit
  int layer = 0;
  int cluster = kUnclustered;
  VertexClass cls = VertexClass::kNoise;
  std::optional<Ellipse5> target;

  EtaPhi coords() const { return {eta, phi}; }
  bool is_track() const { return cls == VertexClass::kTrack; }
};

struct GraphEdge {
  std::size_t i = 0;  // i < j
  std::size_t j = 0;
  bool truth = false;
};

/// Truth kinematics of one particle, kept for the tracking loss.
struct GraphTrack {
  std::int64_t particle_id = 0;
  double pT = 0.0;
  double epsT = 0.0;
};

struct Graph {
  std::int64_t event_id = 0;
  double field_B = 2.0;
  std::vector<GraphVertex> vertices;
  std::vector<GraphEdge> edges;
  std::vector<GraphTrack> tracks;
};

/// Builds the graph of one event. Vertices follow the event's hit order.
inline Graph build_graph(const Event& e, const DbscanParams& params,
                         EdgeTopology topology = EdgeTopology::kComplete) {
  if (e.hits.empty()) throw ConsistencyError("build_graph: event has no hits");
  Graph g;
  g.event_id = e.event_id;
  g.field_B = e.field_B;
  for (const auto& t : e.tracks) g.tracks.push_back({t.particle_id, t.params.pT, t.params.epsT});

  std::vector<EtaPhi> coords;
  coords.reserve(e.hits.size());
  for (const auto& h : e.hits) coords.push_back({h.eta, h.phi});
  const auto labels = dbscan(coords, params);

  g.vertices.reserve(e.hits.size());
  for (std::size_t i = 0; i < e.hits.size(); ++i) {
    const Hit& h = e.hits[i];
    GraphVertex v;
    v.eta = h.eta;
    v.phi = h.phi;
    v.state = {h.z, static_cast<double>(h.layer)};
    v.hit_id = h.hit_id;
    v.particle_id = h.particle_id;
    v.x = h.x;
    v.y = h.y;
    v.layer = h.layer;
    v.cluster = labels[i];
    v.cls = h.is_noise() ? VertexClass::kNoise : VertexClass::kTrack;
    g.vertices.push_back(v);
  }

  std::map<int, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kUnclustered) clusters[labels[i]].push_back(i);
  }
  auto add = [&g](std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    const auto& a = g.vertices[i];
    const auto& b = g.vertices[j];
    g.edges.push_back({i, j, a.particle_id != 0 && a.particle_id == b.particle_id});
  };
  for (const auto& [id, members] : clusters) {
    if (topology == EdgeTopology::kComplete) {
      for (std::size_t p = 0; p < members.size(); ++p) {
        for (std::size_t q = p + 1; q < members.size(); ++q) add(members[p], members[q]);
      }
    } else {
      std::map<int, std::vector<std::size_t>> by_layer;
      for (auto m : members) by_layer[g.vertices[m].layer].push_back(m);
      for (auto it = by_layer.begin(); it != by_layer.end() && std::next(it) != by_layer.end(); ++it) {
        for (auto i : it->second) {
          for (auto j : std::next(it)->second) add(i, j);
        }
      }
    }
  }
  std::sort(g.edges.begin(), g.edges.end(),
            [](const GraphEdge& x, const GraphEdge& y) { return std::tie(x.i, x.j) < std::tie(y.i, y.j); });
  return g;
}

struct TruthEllipseOptions {
  double padding = 1.1;
  double floor = kSemiAxisFloor;
  double tolerance = 1e-6;
};

/// One padded minimum-area ellipse per truth track, ordered like e.tracks.
inline std::vector<std::pair<std::int64_t, Ellipse5>> truth_ellipses(
    const Event& e, const TruthEllipseOptions& opt = {}) {
  std::unordered_map<std::int64_t, const Hit*> by_id;
  for (const auto& h : e.hits) by_id[h.hit_id] = &h;
  std::vector<std::pair<std::int64_t, Ellipse5>> out;
  out.reserve(e.tracks.size());
  for (const auto& t : e.tracks) {
    std::vector<EtaPhi> pts;
    for (auto id : t.hit_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw ConsistencyError("truth_ellipses: track " + std::to_string(t.particle_id) +
                               " references missing hit " + std::to_string(id));
      }
      pts.push_back({it->second->eta, it->second->phi});
    }
    if (pts.empty()) {
      throw ConsistencyError("truth_ellipses: track " + std::to_string(t.particle_id) + " has no hits");
    }
    Ellipse5 el = mvee(pts, {.tolerance = opt.tolerance, .floor = 0.0});
    el.a = std::max(el.a * opt.padding, opt.floor);
    el.b = std::max(el.b * opt.padding, opt.floor);
    out.emplace_back(t.particle_id, canonicalize(el));
  }
  return out;
}

/// Copies each track vertex's particle ellipse onto the vertex; noise vertices
/// carry no box target.
inline Graph assign_vertex_targets(Graph g,
                                   const std::vector<std::pair<std::int64_t, Ellipse5>>& ellipses) {
  std::unordered_map<std::int64_t, Ellipse5> by_pid(ellipses.begin(), ellipses.end());
  for (auto& v : g.vertices) {
    if (!v.is_track()) {
      v.target.reset();
      continue;
    }
    auto it = by_pid.find(v.particle_id);
    if (it == by_pid.end()) {
      throw ConsistencyError("assign_vertex_targets: no ellipse for particle " +
                             std::to_string(v.particle_id));
    }
    v.target = it->second;
  }
  return g;
}

/// Vertex indices of each truth track, ordered like g.tracks. Tracks without
/// vertices give empty lists.
inline std::vector<std::vector<std::size_t>> truth_clusters(const Graph& g) {
  std::unordered_map<std::int64_t, std::size_t> slot;
  for (std::size_t k = 0; k < g.tracks.size(); ++k) slot[g.tracks[k].particle_id] = k;
  std::vector<std::vector<std::size_t>> out(g.tracks.size());
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    auto it = slot.find(g.vertices[i].particle_id);
    if (g.vertices[i].is_track() && it != slot.end()) out[it->second].push_back(i);
  }
  return out;
}

/// Classification targets: 1 for track vertices, 0 for noise.
inline std::vector<double> class_targets(const Graph& g) {
  std::vector<double> y;
  y.reserve(g.vertices.size());
  for (const auto& v : g.vertices) y.push_back(v.is_track() ? 1.0 : 0.0);
  return y;
}

/// Graph with truth targets attached, ready for training.
inline Graph build_training_graph(const Event& e, const DbscanParams& params,
                                  EdgeTopology topology = EdgeTopology::kComplete,
                                  const TruthEllipseOptions& opt = {}) {
  return assign_vertex_targets(build_graph(e, params, topology), truth_ellipses(e, opt));
}

}  // namespace conftrack
