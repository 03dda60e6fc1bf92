#pragma once

// Pipeline stages over an artifact directory, and the staged end-to-end run.
//
// Layout under the artifact directory:
//   events/{train,test}/event_<id>.json
//   graphs/{train,test}/graph_<id>.json
//   checkpoint.json, history.json, predictions.json, metrics.json
//   plots/event_<id>.svg, run.log

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "conftrack/config.hpp"
#include "conftrack/error.hpp"
#include "conftrack/event.hpp"
#include "conftrack/graph.hpp"
#include "conftrack/metrics.hpp"
#include "conftrack/postprocess.hpp"
#include "conftrack/serialize.hpp"
#include "conftrack/svg.hpp"
#include "conftrack/trackml.hpp"
#include "conftrack/tracknet.hpp"

namespace conftrack {

namespace fs = std::filesystem;

/// Stage log: kept in memory for run.log, echoed to stderr when verbose.
struct RunLog {
  bool verbose = false;
  std::vector<std::string> lines;

  void operator()(const std::string& line) {
    lines.push_back(line);
    if (verbose) std::cerr << line << '\n';
  }

  void write(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& l : lines) out << l << '\n';
  }
};

inline constexpr const char* kSplits[] = {"train", "test"};

namespace detail {

inline fs::path event_path(const fs::path& dir, const std::string& split, std::int64_t id) {
  return dir / "events" / split / ("event_" + std::to_string(id) + ".json");
}

inline fs::path graph_path(const fs::path& dir, const std::string& split, std::int64_t id) {
  return dir / "graphs" / split / ("graph_" + std::to_string(id) + ".json");
}

inline void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

/// JSON files of a directory in name order; empty when the directory is absent.
inline std::vector<fs::path> json_files(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline void write_events(const fs::path& dir, const std::string& split, const std::vector<Event>& events,
                         const json& echo, std::uint64_t seed) {
  make_dirs(dir / "events" / split);
  for (const auto& e : events) write_json_file(event_path(dir, split, e.event_id).string(), event_to_json(e, echo, seed));
}

}  // namespace detail

/// Events of one split ordered by event id.
inline std::vector<Event> load_events(const fs::path& dir, const std::string& split) {
  std::vector<Event> out;
  for (const auto& p : detail::json_files(dir / "events" / split)) {
    try {
      out.push_back(event_from_json(read_json_file(p.string())));
    } catch (const ParseError& e) {
      throw ParseError(p.string() + ": " + e.what());
    }
  }
  std::sort(out.begin(), out.end(), [](const Event& a, const Event& b) { return a.event_id < b.event_id; });
  return out;
}

/// Graphs of one split ordered by event id.
inline std::vector<Graph> load_graphs(const fs::path& dir, const std::string& split) {
  std::vector<Graph> out;
  for (const auto& p : detail::json_files(dir / "graphs" / split)) {
    try {
      out.push_back(graph_from_json(read_json_file(p.string())));
    } catch (const ParseError& e) {
      throw ParseError(p.string() + ": " + e.what());
    }
  }
  std::sort(out.begin(), out.end(), [](const Graph& a, const Graph& b) { return a.event_id < b.event_id; });
  return out;
}

// ---- stages ----

/// Synthetic events: ids [0, n_train) for training, the next n_test for testing.
inline void stage_generate(const RunConfig& cfg, const fs::path& dir, RunLog& log) {
  const json echo = to_json(cfg);
  std::int64_t id = 0;
  const int counts[] = {cfg.generator.n_train_events, cfg.generator.n_test_events};
  for (int s = 0; s < 2; ++s) {
    std::vector<Event> events;
    for (int k = 0; k < counts[s]; ++k, ++id) {
      GenConfig gen = cfg.generator.gen;
      gen.seed = cfg.seed;
      events.push_back(generate_event(cfg.detector, gen, id));
    }
    detail::write_events(dir, kSplits[s], events, echo, cfg.seed);
    log("generate: " + std::to_string(events.size()) + " " + kSplits[s] + " events");
  }
}

/// TrackML events from paths.trackml_dir. Each prefix P names the files
/// P-hits.csv, P-truth.csv and P-particles.csv; the event id is the trailing
/// number of P. Without `split`, the first generator.n_train_events prefixes in
/// name order go to train and the rest to test.
inline void stage_ingest(const RunConfig& cfg, const fs::path& dir, RunLog& log,
                         const std::optional<std::string>& split = std::nullopt) {
  const fs::path src = cfg.paths.trackml_dir;
  if (src.empty()) throw ConfigError("ingest: paths.trackml_dir is not set");
  std::error_code ec;
  if (!fs::is_directory(src, ec)) throw IoError("ingest: input directory not found: " + src.string());
  std::vector<std::string> prefixes = cfg.paths.trackml_events;
  if (prefixes.empty()) {
    for (const auto& entry : fs::directory_iterator(src)) {
      const std::string name = entry.path().filename().string();
      const std::string suffix = "-hits.csv";
      if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        prefixes.push_back(name.substr(0, name.size() - suffix.size()));
      }
    }
    std::sort(prefixes.begin(), prefixes.end());
  }
  if (prefixes.empty()) throw IoError("ingest: no *-hits.csv files in " + src.string());
  const json echo = to_json(cfg);
  std::map<std::string, std::vector<Event>> by_split;
  for (std::size_t n = 0; n < prefixes.size(); ++n) {
    const std::string& prefix = prefixes[n];
    std::size_t k = prefix.size();
    while (k > 0 && std::isdigit(static_cast<unsigned char>(prefix[k - 1]))) --k;
    const std::int64_t id = k < prefix.size() ? std::stoll(prefix.substr(k)) : static_cast<std::int64_t>(n);
    const auto base = (src / prefix).string();
    for (const char* part : {"-hits.csv", "-truth.csv", "-particles.csv"}) {
      if (!fs::exists(base + part, ec)) throw IoError("ingest: input file not found: " + base + part);
    }
    Event e = read_trackml_event(base + "-hits.csv", base + "-truth.csv", base + "-particles.csv", id,
                                 cfg.detector.field_B);
    const std::string to = split ? *split : (static_cast<int>(n) < cfg.generator.n_train_events ? "train" : "test");
    by_split[to].push_back(apply_selection(e, cfg.selection.pt_min, cfg.selection.volumes));
  }
  for (const auto& [to, events] : by_split) {
    detail::write_events(dir, to, events, echo, cfg.seed);
    log("ingest: " + std::to_string(events.size()) + " events into " + to);
  }
}

inline void stage_build_graphs(const RunConfig& cfg, const fs::path& dir, RunLog& log) {
  const json echo = to_json(cfg);
  std::size_t total = 0;
  for (const char* split : kSplits) {
    const auto events = load_events(dir, split);
    if (events.empty()) continue;
    detail::make_dirs(dir / "graphs" / split);
    for (const auto& e : events) {
      const Graph g = build_training_graph(e, cfg.dbscan.params, cfg.dbscan.topology, cfg.dbscan.truth);
      write_json_file(detail::graph_path(dir, split, e.event_id).string(), graph_to_json(g, echo, cfg.seed));
    }
    total += events.size();
    log(std::string("build-graphs: ") + std::to_string(events.size()) + " " + split + " graphs");
  }
  if (total == 0) throw IoError("build-graphs: no events under " + (dir / "events").string());
}

inline json history_to_json(const std::vector<EpochStats>& h, const json& echo, std::uint64_t seed) {
  json rows = json::array();
  for (const auto& s : h) {
    rows.push_back({{"epoch", s.epoch},
                    {"classification", s.mean.classification},
                    {"localization", s.mean.localization},
                    {"tracking", s.mean.tracking},
                    {"total", s.mean.total}});
  }
  return {{"format", "history-v1"}, {"epochs", std::move(rows)}, {"config", echo}, {"seed", seed}};
}

inline void stage_train(const RunConfig& cfg, const fs::path& dir, RunLog& log) {
  const auto graphs = load_graphs(dir, "train");
  if (graphs.empty()) throw IoError("train: no graphs under " + (dir / "graphs" / "train").string());
  Model m(cfg.model);
  TrainConfig tc;
  tc.epochs = cfg.training.epochs;
  tc.adam = cfg.training.adam;
  tc.seed = cfg.seed;
  const auto res = train(m, graphs, tc, [&](const EpochStats& s) {
    log("train: epoch " + std::to_string(s.epoch) + " total " + std::to_string(s.mean.total));
  });
  const json echo = to_json(cfg);
  save_checkpoint((dir / "checkpoint.json").string(), m, res.optimizer, cfg.training.epochs, cfg.seed, echo);
  write_json_file((dir / "history.json").string(), history_to_json(res.history, echo, cfg.seed));
}

/// Vertex ellipses -> merged candidates -> hit assignment -> per-candidate
/// track parameters for one graph.
inline EventPrediction predict_event(Model& m, const Graph& g, double iou_threshold, double class_threshold) {
  const Inference inf = infer(m, g, class_threshold);
  EventPrediction p;
  p.event_id = g.event_id;
  p.class_prob = inf.outputs.class_prob;
  p.vertex_ellipses = inf.ellipses;
  std::vector<Ellipse5> els;
  std::vector<double> scores;
  std::vector<std::size_t> src;
  std::vector<EtaPhi> coords;
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    p.hit_ids.push_back(g.vertices[i].hit_id);
    coords.push_back(g.vertices[i].coords());
    if (inf.ellipses[i]) {
      els.push_back(*inf.ellipses[i]);
      scores.push_back(inf.outputs.class_prob[i]);
      src.push_back(i);
    }
  }
  if (!els.empty()) p.candidates = merge_ellipses(els, scores, iou_threshold);
  for (auto& c : p.candidates) {
    for (auto& k : c.members) k = src[k];
  }
  p.assignment = assign_hits(p.candidates, coords, p.class_prob, class_threshold);
  if (!p.candidates.empty()) {
    std::vector<std::vector<std::size_t>> clusters(p.candidates.size());
    for (std::size_t i = 0; i < p.assignment.size(); ++i) {
      if (p.assignment[i] != kUnassigned) clusters[p.assignment[i]].push_back(i);
    }
    for (std::size_t k = 0; k < clusters.size(); ++k) {
      if (clusters[k].empty()) clusters[k] = p.candidates[k].members;
    }
    const auto params = predict_cluster_params(m, g, inf.outputs, clusters);
    for (std::size_t k = 0; k < params.size(); ++k) p.candidates[k].params = params[k];
  }
  return p;
}

/// IoU of predicted ellipses across graph edges, labelled by whether both
/// endpoints are hits of the same particle.
inline std::vector<IouPair> edge_iou_pairs(Model& m, const Graph& g, double class_threshold) {
  const Inference inf = infer(m, g, class_threshold);
  std::vector<IouPair> out;
  for (const auto& e : g.edges) {
    if (!inf.ellipses[e.i] || !inf.ellipses[e.j]) continue;
    out.push_back({ellipse_iou(*inf.ellipses[e.i], *inf.ellipses[e.j]), e.truth});
  }
  return out;
}

inline void stage_infer(const RunConfig& cfg, const fs::path& dir, RunLog& log) {
  Checkpoint ck = load_checkpoint((dir / "checkpoint.json").string());
  const auto graphs = load_graphs(dir, "test");
  if (graphs.empty()) throw IoError("infer: no graphs under " + (dir / "graphs" / "test").string());
  double t_h = cfg.nms.iou_threshold;
  if (cfg.nms.choose_threshold) {
    std::vector<IouPair> pairs;
    for (const auto& g : load_graphs(dir, "train")) {
      const auto p = edge_iou_pairs(ck.model, g, cfg.nms.class_threshold);
      pairs.insert(pairs.end(), p.begin(), p.end());
    }
    const bool pos = std::any_of(pairs.begin(), pairs.end(), [](const IouPair& p) { return p.same_track; });
    const bool neg = std::any_of(pairs.begin(), pairs.end(), [](const IouPair& p) { return !p.same_track; });
    if (pos && neg) {
      const auto choice = choose_threshold(pairs);
      if (choice.threshold > 0.0 && choice.threshold < 1.0) t_h = choice.threshold;
      log("infer: chose IoU threshold " + std::to_string(t_h) + " (balanced accuracy " +
          std::to_string(choice.balanced_accuracy) + ")");
    } else {
      log("infer: IoU pairs of a single class; keeping threshold " + std::to_string(t_h));
    }
  }
  std::vector<EventPrediction> preds;
  for (const auto& g : graphs) preds.push_back(predict_event(ck.model, g, t_h, cfg.nms.class_threshold));
  write_json_file((dir / "predictions.json").string(), predictions_to_json(preds, to_json(cfg), cfg.seed, t_h));
  log("infer: " + std::to_string(preds.size()) + " events");
}

inline Metrics stage_evaluate(const RunConfig& cfg, const fs::path& dir, RunLog& log) {
  const auto preds = predictions_from_json(read_json_file((dir / "predictions.json").string()));
  const auto events = load_events(dir, "test");
  const Metrics m = evaluate(preds, events, {cfg.eval.majority, cfg.nms.class_threshold});
  write_json_file((dir / "metrics.json").string(), metrics_to_json(m, to_json(cfg), cfg.seed));
  log("evaluate: efficiency " + std::to_string(m.efficiency) + " purity " + std::to_string(m.purity));
  return m;
}

/// Event displays with the per-vertex predicted ellipses (or the merged
/// candidates) for the first eval.max_plots test events, or for `only`.
inline std::vector<fs::path> stage_plot(const RunConfig& cfg, const fs::path& dir, RunLog& log,
                                        std::optional<std::int64_t> only = std::nullopt, bool candidates = false) {
  const auto preds = predictions_from_json(read_json_file((dir / "predictions.json").string()));
  std::map<std::int64_t, const EventPrediction*> by_id;
  for (const auto& p : preds) by_id[p.event_id] = &p;
  const auto events = load_events(dir, "test");
  detail::make_dirs(dir / "plots");
  std::vector<fs::path> written;
  for (const auto& e : events) {
    if (only ? e.event_id != *only : static_cast<int>(written.size()) >= cfg.eval.max_plots) continue;
    auto it = by_id.find(e.event_id);
    if (it == by_id.end()) throw ConsistencyError("plot: no prediction for event " + std::to_string(e.event_id));
    std::vector<Ellipse5> els;
    if (candidates) {
      for (const auto& c : it->second->candidates) els.push_back(c.ellipse);
    } else {
      for (const auto& v : it->second->vertex_ellipses) {
        if (v) els.push_back(*v);
      }
    }
    const fs::path path = dir / "plots" / ("event_" + std::to_string(e.event_id) + ".svg");
    write_event_svg(path.string(), e, els);
    written.push_back(path);
  }
  if (only && written.empty()) throw ConsistencyError("plot: no test event " + std::to_string(*only));
  log("plot: " + std::to_string(written.size()) + " plots");
  return written;
}

// ---- end-to-end ----

/// Runs every stage in a staging directory beside the output. On success the
/// artifacts replace those in paths.out; on failure the staging directory is
/// removed and only run.log is left. Errors keep their kind and gain the stage
/// name.
inline void run_pipeline(const RunConfig& cfg, RunLog& log) {
  cfg.validate();
  const fs::path out = cfg.paths.out;
  detail::make_dirs(out);
  const fs::path staging = out / ".staging";
  std::error_code ec;
  fs::remove_all(staging, ec);
  detail::make_dirs(staging);

  using Stage = std::function<void()>;
  const std::vector<std::pair<std::string, Stage>> stages{
      {cfg.paths.trackml_dir.empty() ? "generate" : "ingest",
       [&] {
         if (cfg.paths.trackml_dir.empty()) {
           stage_generate(cfg, staging, log);
         } else {
           stage_ingest(cfg, staging, log);
         }
       }},
      {"build-graphs", [&] { stage_build_graphs(cfg, staging, log); }},
      {"train", [&] { stage_train(cfg, staging, log); }},
      {"infer", [&] { stage_infer(cfg, staging, log); }},
      {"evaluate", [&] { stage_evaluate(cfg, staging, log); }},
      {"plot", [&] { stage_plot(cfg, staging, log); }},
  };
  std::string current;
  try {
    for (const auto& [name, fn] : stages) {
      current = name;
      log("stage " + name);
      fn();
    }
    current = "finalize";
    for (const auto& entry : fs::directory_iterator(staging)) {
      const fs::path dst = out / entry.path().filename();
      fs::remove_all(dst);
      fs::rename(entry.path(), dst);
    }
    fs::remove_all(staging);
    log("done");
    log.write(out / "run.log");
  } catch (const Error& e) {
    log("error in stage " + current + ": " + e.what());
    fs::remove_all(staging, ec);
    log.write(out / "run.log");
    throw Error(e.kind(), "stage " + current + ": " + e.what());
  } catch (const fs::filesystem_error& e) {
    log("error in stage " + current + ": " + e.what());
    fs::remove_all(staging, ec);
    log.write(out / "run.log");
    throw IoError("stage " + current + ": " + e.what());
  }
}

}  // namespace conftrack
