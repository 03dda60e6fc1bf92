#pragma once

// Run configuration: every module's settings, artifact paths and the seed.
// Sections missing from the file keep their defaults; unknown keys are errors.

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "conftrack/dbscan.hpp"
#include "conftrack/error.hpp"
#include "conftrack/event.hpp"
#include "conftrack/graph.hpp"
#include "conftrack/neural.hpp"
#include "conftrack/postprocess.hpp"
#include "conftrack/serialize.hpp"
#include "conftrack/trackml.hpp"
#include "conftrack/tracknet.hpp"
#include "json.hpp"

namespace conftrack {

struct GeneratorSection {
  GenConfig gen;
  int n_train_events = 50;
  int n_test_events = 10;
};

struct SelectionSection {
  double pt_min = 2.0;  // GeV, applied to ingested events
  std::optional<std::set<int>> volumes = kPixelVolumes;  // nullopt keeps every volume
};

struct DbscanSection {
  DbscanParams params;
  EdgeTopology topology = EdgeTopology::kComplete;
  TruthEllipseOptions truth;
};

struct TrainingSection {
  int epochs = 30;
  AdamConfig adam;
};

struct NmsSection {
  double iou_threshold = kDefaultIouThreshold;
  double class_threshold = 0.5;
  bool choose_threshold = false;  // tune T_h on the training graphs before merging
};

struct EvalSection {
  double majority = 0.5;
  int max_plots = 3;
};

struct PathsSection {
  std::string trackml_dir;                  // non-empty: ingest instead of generating
  std::vector<std::string> trackml_events;  // file prefixes; empty scans the directory
  std::string out = "out";
};

struct RunConfig {
  DetectorConfig detector;
  GeneratorSection generator;
  SelectionSection selection;
  DbscanSection dbscan;
  ModelConfig model;
  TrainingSection training;
  NmsSection nms;
  EvalSection eval;
  PathsSection paths;
  std::uint64_t seed = 0;

  /// Propagates the global seed into the generator and model.
  void apply_seed(std::uint64_t s) {
    seed = s;
    generator.gen.seed = s;
    model.seed = s;
  }

  void validate() const {
    try {
      conftrack::validate(detector);
      conftrack::validate(generator.gen, detector);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    if (generator.n_train_events < 0 || generator.n_test_events < 0) {
      throw ConfigError("generator: event counts must be non-negative");
    }
    if (!(dbscan.params.eps > 0.0) || dbscan.params.min_pts < 1) {
      throw ConfigError("dbscan: eps must be positive and min_pts >= 1");
    }
    if (!(dbscan.truth.padding >= 1.0)) throw ConfigError("dbscan: truth padding must be >= 1");
    model.validate();
    if (training.epochs < 0) throw ConfigError("training: epochs must be >= 0");
    if (!(training.adam.lr > 0.0)) throw ConfigError("training: lr must be positive");
    if (!(nms.iou_threshold > 0.0 && nms.iou_threshold < 1.0)) {
      throw ConfigError("nms: iou_threshold must be in (0, 1)");
    }
    if (!(nms.class_threshold >= 0.0 && nms.class_threshold <= 1.0)) {
      throw ConfigError("nms: class_threshold must be in [0, 1]");
    }
    if (!(eval.majority >= 0.0 && eval.majority < 1.0)) throw ConfigError("eval: majority must be in [0, 1)");
    if (paths.out.empty()) throw ConfigError("paths: out must not be empty");
  }
};

namespace detail {

inline void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; })) {
      throw ConfigError(section + ": unknown key '" + k + "'");
    }
  }
}

template <class T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline const char* topology_name(EdgeTopology t) {
  return t == EdgeTopology::kComplete ? "complete" : "layer-adjacent";
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
  const auto& g = c.generator.gen;
  return {
      {"detector",
       {{"layer_radii", c.detector.layer_radii},
        {"z_halflength", c.detector.z_halflength},
        {"field_B", c.detector.field_B}}},
      {"generator",
       {{"n_tracks", g.n_tracks},
        {"pt_range", {g.pt_range.first, g.pt_range.second}},
        {"eps_range", {g.eps_range.first, g.eps_range.second}},
        {"eta_range", {g.eta_range.first, g.eta_range.second}},
        {"noise_fraction", g.noise_fraction},
        {"hit_smearing_sigma", g.hit_smearing_sigma},
        {"n_train_events", c.generator.n_train_events},
        {"n_test_events", c.generator.n_test_events}}},
      {"selection",
       {{"pt_min", c.selection.pt_min},
        {"volumes", c.selection.volumes ? json(*c.selection.volumes) : json()}}},
      {"dbscan",
       {{"eps", c.dbscan.params.eps},
        {"min_pts", c.dbscan.params.min_pts},
        {"topology", detail::topology_name(c.dbscan.topology)},
        {"truth_padding", c.dbscan.truth.padding},
        {"truth_floor", c.dbscan.truth.floor}}},
      {"model", to_json(c.model)},
      {"training",
       {{"epochs", c.training.epochs},
        {"lr", c.training.adam.lr},
        {"beta1", c.training.adam.beta1},
        {"beta2", c.training.adam.beta2},
        {"eps", c.training.adam.eps},
        {"weight_decay", c.training.adam.weight_decay}}},
      {"nms",
       {{"iou_threshold", c.nms.iou_threshold},
        {"class_threshold", c.nms.class_threshold},
        {"choose_threshold", c.nms.choose_threshold}}},
      {"eval", {{"majority", c.eval.majority}, {"max_plots", c.eval.max_plots}}},
      {"paths", {{"trackml_dir", c.paths.trackml_dir}, {"trackml_events", c.paths.trackml_events}, {"out", c.paths.out}}},
      {"seed", c.seed},
  };
}

inline RunConfig run_config_from_json(const json& j) {
  using detail::check_keys;
  using detail::read_key;
  detail::check_keys(j, "config",
                     {"detector", "generator", "selection", "dbscan", "model", "training", "nms", "eval", "paths", "seed"});
  RunConfig c;
  std::string section = "config";
  try {
    if (j.contains("detector")) {
      section = "detector";
      const auto& s = j.at(section);
      check_keys(s, section, {"layer_radii", "z_halflength", "field_B"});
      read_key(s, "layer_radii", c.detector.layer_radii);
      read_key(s, "z_halflength", c.detector.z_halflength);
      read_key(s, "field_B", c.detector.field_B);
    }
    if (j.contains("generator")) {
      section = "generator";
      const auto& s = j.at(section);
      check_keys(s, section,
                 {"n_tracks", "pt_range", "eps_range", "eta_range", "noise_fraction", "hit_smearing_sigma",
                  "n_train_events", "n_test_events"});
      auto& g = c.generator.gen;
      read_key(s, "n_tracks", g.n_tracks);
      read_key(s, "pt_range", g.pt_range);
      read_key(s, "eps_range", g.eps_range);
      read_key(s, "eta_range", g.eta_range);
      read_key(s, "noise_fraction", g.noise_fraction);
      read_key(s, "hit_smearing_sigma", g.hit_smearing_sigma);
      read_key(s, "n_train_events", c.generator.n_train_events);
      read_key(s, "n_test_events", c.generator.n_test_events);
    }
    if (j.contains("selection")) {
      section = "selection";
      const auto& s = j.at(section);
      check_keys(s, section, {"pt_min", "volumes"});
      read_key(s, "pt_min", c.selection.pt_min);
      if (s.contains("volumes")) {
        if (s.at("volumes").is_null()) {
          c.selection.volumes.reset();
        } else {
          c.selection.volumes = s.at("volumes").get<std::set<int>>();
        }
      }
    }
    if (j.contains("dbscan")) {
      section = "dbscan";
      const auto& s = j.at(section);
      check_keys(s, section, {"eps", "min_pts", "topology", "truth_padding", "truth_floor"});
      read_key(s, "eps", c.dbscan.params.eps);
      read_key(s, "min_pts", c.dbscan.params.min_pts);
      read_key(s, "truth_padding", c.dbscan.truth.padding);
      read_key(s, "truth_floor", c.dbscan.truth.floor);
      if (s.contains("topology")) {
        const auto t = s.at("topology").get<std::string>();
        if (t == "complete") {
          c.dbscan.topology = EdgeTopology::kComplete;
        } else if (t == "layer-adjacent") {
          c.dbscan.topology = EdgeTopology::kLayerAdjacent;
        } else {
          throw ConfigError("dbscan: unknown topology '" + t + "'");
        }
      }
    }
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("training")) {
      section = "training";
      const auto& s = j.at(section);
      check_keys(s, section, {"epochs", "lr", "beta1", "beta2", "eps", "weight_decay"});
      read_key(s, "epochs", c.training.epochs);
      read_key(s, "lr", c.training.adam.lr);
      read_key(s, "beta1", c.training.adam.beta1);
      read_key(s, "beta2", c.training.adam.beta2);
      read_key(s, "eps", c.training.adam.eps);
      read_key(s, "weight_decay", c.training.adam.weight_decay);
    }
    if (j.contains("nms")) {
      section = "nms";
      const auto& s = j.at(section);
      check_keys(s, section, {"iou_threshold", "class_threshold", "choose_threshold"});
      read_key(s, "iou_threshold", c.nms.iou_threshold);
      read_key(s, "class_threshold", c.nms.class_threshold);
      read_key(s, "choose_threshold", c.nms.choose_threshold);
    }
    if (j.contains("eval")) {
      section = "eval";
      const auto& s = j.at(section);
      check_keys(s, section, {"majority", "max_plots"});
      read_key(s, "majority", c.eval.majority);
      read_key(s, "max_plots", c.eval.max_plots);
    }
    if (j.contains("paths")) {
      section = "paths";
      const auto& s = j.at(section);
      check_keys(s, section, {"trackml_dir", "trackml_events", "out"});
      read_key(s, "trackml_dir", c.paths.trackml_dir);
      read_key(s, "trackml_events", c.paths.trackml_events);
      read_key(s, "out", c.paths.out);
    }
    std::uint64_t seed = 0;
    read_key(j, "seed", seed);
    c.apply_seed(seed);
  } catch (const json::exception& e) {
    throw ConfigError(section + ": " + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("config ") + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace conftrack
