#pragma once

// JSON persistence of events, graphs, predictions and metrics. Every writer
// has a matching reader; doubles are written with round-trip precision.

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "conftrack/error.hpp"
#include "conftrack/event.hpp"
#include "conftrack/graph.hpp"
#include "conftrack/metrics.hpp"
#include "conftrack/postprocess.hpp"
#include "json.hpp"

namespace conftrack {

using nlohmann::json;

inline constexpr const char* kEventFormat = "event-v1";
inline constexpr const char* kGraphFormat = "graph-v1";
inline constexpr const char* kPredictionsFormat = "predictions-v1";
inline constexpr const char* kMetricsFormat = "metrics-v1";

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

namespace detail {

inline void expect_format(const json& j, const char* format, const std::string& what) {
  if (!j.is_object() || !j.contains("format") || j.at("format") != format) {
    throw ParseError(what + ": expected format " + format);
  }
}

/// Runs a decoder, turning nlohmann type/key errors into ParseError.
template <class F>
auto decode(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

inline json ellipse_to_json(const Ellipse5& e) { return json::array({e.eta_c, e.phi_c, e.a, e.b, e.theta}); }

inline Ellipse5 ellipse_from_json(const json& j) {
  if (!j.is_array() || j.size() != 5) throw ParseError("ellipse: expected 5 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(), j[4].get<double>()};
}

inline json optional_ellipse_to_json(const std::optional<Ellipse5>& e) { return e ? ellipse_to_json(*e) : json(); }

inline std::optional<Ellipse5> optional_ellipse_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return ellipse_from_json(j);
}

}  // namespace detail

// ---- events ----

inline json event_to_json(const Event& e, const json& config_echo = nullptr, std::uint64_t seed = 0) {
  json hits = json::array();
  for (const auto& h : e.hits) {
    hits.push_back({{"hit_id", h.hit_id}, {"x", h.x}, {"y", h.y}, {"z", h.z}, {"r", h.r}, {"eta", h.eta},
                    {"phi", h.phi}, {"layer", h.layer}, {"volume", h.volume}, {"particle_id", h.particle_id}});
  }
  json tracks = json::array();
  for (const auto& t : e.tracks) {
    tracks.push_back({{"particle_id", t.particle_id},
                      {"pT", t.params.pT},
                      {"epsT", t.params.epsT},
                      {"a", t.params.a},
                      {"b", t.params.b},
                      {"circle", {{"a", t.circle.a}, {"b", t.circle.b}, {"R", t.circle.R}, {"charge", t.circle.charge}}},
                      {"hit_ids", t.hit_ids}});
  }
  return {{"format", kEventFormat}, {"event_id", e.event_id}, {"field_B", e.field_B}, {"hits", std::move(hits)},
          {"tracks", std::move(tracks)}, {"config", config_echo}, {"seed", seed}};
}

inline Event event_from_json(const json& j) {
  detail::expect_format(j, kEventFormat, "event");
  return detail::decode("event", [&] {
    Event e;
    e.event_id = j.at("event_id").get<std::int64_t>();
    e.field_B = j.at("field_B").get<double>();
    for (const auto& hj : j.at("hits")) {
      Hit h;
      h.hit_id = hj.at("hit_id").get<std::int64_t>();
      h.x = hj.at("x").get<double>();
      h.y = hj.at("y").get<double>();
      h.z = hj.at("z").get<double>();
      h.r = hj.at("r").get<double>();
      h.eta = hj.at("eta").get<double>();
      h.phi = hj.at("phi").get<double>();
      h.layer = hj.at("layer").get<int>();
      h.volume = hj.at("volume").get<int>();
      h.particle_id = hj.at("particle_id").get<std::int64_t>();
      e.hits.push_back(h);
    }
    for (const auto& tj : j.at("tracks")) {
      TruthTrack t;
      t.particle_id = tj.at("particle_id").get<std::int64_t>();
      t.params = {tj.at("pT").get<double>(), tj.at("epsT").get<double>(), tj.at("a").get<double>(),
                  tj.at("b").get<double>()};
      const auto& c = tj.at("circle");
      t.circle = {c.at("a").get<double>(), c.at("b").get<double>(), c.at("R").get<double>(), c.at("charge").get<int>()};
      t.hit_ids = tj.at("hit_ids").get<std::vector<std::int64_t>>();
      e.tracks.push_back(std::move(t));
    }
    return e;
  });
}

// ---- graphs ----

inline json graph_to_json(const Graph& g, const json& config_echo = nullptr, std::uint64_t seed = 0) {
  json vs = json::array();
  for (const auto& v : g.vertices) {
    vs.push_back({{"eta", v.eta},
                  {"phi", v.phi},
                  {"state", v.state},
                  {"hit_id", v.hit_id},
                  {"particle_id", v.particle_id},
                  {"x", v.x},
                  {"y", v.y},
                  {"layer", v.layer},
                  {"cluster", v.cluster},
                  {"class", v.is_track() ? "track" : "noise"},
                  {"target", detail::optional_ellipse_to_json(v.target)}});
  }
  json es = json::array();
  for (const auto& e : g.edges) es.push_back(json::array({e.i, e.j, e.truth}));
  json ts = json::array();
  for (const auto& t : g.tracks) ts.push_back({{"particle_id", t.particle_id}, {"pT", t.pT}, {"epsT", t.epsT}});
  return {{"format", kGraphFormat}, {"event_id", g.event_id}, {"field_B", g.field_B}, {"vertices", std::move(vs)},
          {"edges", std::move(es)}, {"tracks", std::move(ts)}, {"config", config_echo}, {"seed", seed}};
}

inline Graph graph_from_json(const json& j) {
  detail::expect_format(j, kGraphFormat, "graph");
  return detail::decode("graph", [&] {
    Graph g;
    g.event_id = j.at("event_id").get<std::int64_t>();
    g.field_B = j.at("field_B").get<double>();
    for (const auto& vj : j.at("vertices")) {
      GraphVertex v;
      v.eta = vj.at("eta").get<double>();
      v.phi = vj.at("phi").get<double>();
      v.state = vj.at("state").get<std::array<double, 2>>();
      v.hit_id = vj.at("hit_id").get<std::int64_t>();
      v.particle_id = vj.at("particle_id").get<std::int64_t>();
      v.x = vj.at("x").get<double>();
      v.y = vj.at("y").get<double>();
      v.layer = vj.at("layer").get<int>();
      v.cluster = vj.at("cluster").get<int>();
      const auto cls = vj.at("class").get<std::string>();
      if (cls != "track" && cls != "noise") throw ParseError("graph: unknown vertex class " + cls);
      v.cls = cls == "track" ? VertexClass::kTrack : VertexClass::kNoise;
      v.target = detail::optional_ellipse_from_json(vj.at("target"));
      g.vertices.push_back(v);
    }
    for (const auto& ej : j.at("edges")) {
      if (!ej.is_array() || ej.size() != 3) throw ParseError("graph: edge must be [i, j, truth]");
      GraphEdge e{ej[0].get<std::size_t>(), ej[1].get<std::size_t>(), ej[2].get<bool>()};
      if (e.i >= g.vertices.size() || e.j >= g.vertices.size()) {
        throw IndexError("graph: edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) + ") out of range");
      }
      g.edges.push_back(e);
    }
    for (const auto& tj : j.at("tracks")) {
      g.tracks.push_back(
          {tj.at("particle_id").get<std::int64_t>(), tj.at("pT").get<double>(), tj.at("epsT").get<double>()});
    }
    return g;
  });
}

// ---- predictions ----

inline json prediction_to_json(const EventPrediction& p) {
  json cands = json::array();
  for (const auto& c : p.candidates) {
    json cj{{"ellipse", detail::ellipse_to_json(c.ellipse)}, {"confidence", c.confidence}, {"members", c.members}};
    cj["params"] = c.params ? json(*c.params) : json();
    cands.push_back(std::move(cj));
  }
  json ves = json::array();
  for (const auto& e : p.vertex_ellipses) ves.push_back(detail::optional_ellipse_to_json(e));
  return {{"event_id", p.event_id},         {"hit_ids", p.hit_ids},       {"class_prob", p.class_prob},
          {"vertex_ellipses", std::move(ves)}, {"candidates", std::move(cands)}, {"assignment", p.assignment}};
}

inline EventPrediction prediction_from_json(const json& j) {
  return detail::decode("prediction", [&] {
    EventPrediction p;
    p.event_id = j.at("event_id").get<std::int64_t>();
    p.hit_ids = j.at("hit_ids").get<std::vector<std::int64_t>>();
    p.class_prob = j.at("class_prob").get<std::vector<double>>();
    for (const auto& e : j.at("vertex_ellipses")) p.vertex_ellipses.push_back(detail::optional_ellipse_from_json(e));
    for (const auto& cj : j.at("candidates")) {
      TrackCandidate c;
      c.ellipse = detail::ellipse_from_json(cj.at("ellipse"));
      c.confidence = cj.at("confidence").get<double>();
      c.members = cj.at("members").get<std::vector<std::size_t>>();
      if (!cj.at("params").is_null()) c.params = cj.at("params").get<std::array<double, 2>>();
      p.candidates.push_back(std::move(c));
    }
    p.assignment = j.at("assignment").get<std::vector<int>>();
    return p;
  });
}

inline json predictions_to_json(const std::vector<EventPrediction>& ps, const json& config_echo = nullptr,
                                std::uint64_t seed = 0, double iou_threshold = kDefaultIouThreshold) {
  json events = json::array();
  for (const auto& p : ps) events.push_back(prediction_to_json(p));
  return {{"format", kPredictionsFormat}, {"iou_threshold", iou_threshold}, {"events", std::move(events)},
          {"config", config_echo},        {"seed", seed}};
}

inline std::vector<EventPrediction> predictions_from_json(const json& j) {
  detail::expect_format(j, kPredictionsFormat, "predictions");
  std::vector<EventPrediction> out;
  detail::decode("predictions", [&] {
    for (const auto& e : j.at("events")) out.push_back(prediction_from_json(e));
    return 0;
  });
  return out;
}

// ---- metrics ----

inline json metrics_to_json(const Metrics& m, const json& config_echo = nullptr, std::uint64_t seed = 0) {
  return {{"format", kMetricsFormat},
          {"hit_classification", {{"accuracy", m.accuracy}, {"auc", m.auc ? json(*m.auc) : json()}}},
          {"segmentation", {{"efficiency", m.efficiency}, {"purity", m.purity}, {"no_candidates", m.no_candidates}}},
          {"parameter_resolution",
           {{"pT_rel_rms", m.pT_rel_rms}, {"epsT_abs_rms", m.epsT_abs_rms}, {"n_pairs", m.n_resolution_pairs}}},
          {"counts",
           {{"n_events", m.n_events},
            {"n_hits", m.n_hits},
            {"n_tracks", m.n_tracks},
            {"n_candidates", m.n_candidates},
            {"n_matched_tracks", m.n_matched_tracks},
            {"n_matched_candidates", m.n_matched_candidates}}},
          {"config", config_echo},
          {"seed", seed}};
}

inline Metrics metrics_from_json(const json& j) {
  detail::expect_format(j, kMetricsFormat, "metrics");
  return detail::decode("metrics", [&] {
    Metrics m;
    const auto& hc = j.at("hit_classification");
    m.accuracy = hc.at("accuracy").get<double>();
    if (!hc.at("auc").is_null()) m.auc = hc.at("auc").get<double>();
    const auto& sg = j.at("segmentation");
    m.efficiency = sg.at("efficiency").get<double>();
    m.purity = sg.at("purity").get<double>();
    m.no_candidates = sg.at("no_candidates").get<bool>();
    const auto& pr = j.at("parameter_resolution");
    m.pT_rel_rms = pr.at("pT_rel_rms").get<double>();
    m.epsT_abs_rms = pr.at("epsT_abs_rms").get<double>();
    m.n_resolution_pairs = pr.at("n_pairs").get<std::size_t>();
    const auto& c = j.at("counts");
    m.n_events = c.at("n_events").get<std::size_t>();
    m.n_hits = c.at("n_hits").get<std::size_t>();
    m.n_tracks = c.at("n_tracks").get<std::size_t>();
    m.n_candidates = c.at("n_candidates").get<std::size_t>();
    m.n_matched_tracks = c.at("n_matched_tracks").get<std::size_t>();
    m.n_matched_candidates = c.at("n_matched_candidates").get<std::size_t>();
    return m;
  });
}

}  // namespace conftrack
