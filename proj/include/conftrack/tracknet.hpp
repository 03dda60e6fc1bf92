#pragma once

// Message-passing network over hit graphs: T iterations of
//   Δx_i = h(s_i)
//   e_ij = f([x_j - x_i + Δx_i, s_j])
//   s_i <- s_i + g([max_j e_ij, s_i])
// followed by the classification, box-regression and tracking heads.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "conftrack/angles.hpp"
#include "conftrack/ellipse.hpp"
#include "conftrack/error.hpp"
#include "conftrack/graph.hpp"
#include "conftrack/kinematics.hpp"
#include "conftrack/neural.hpp"
#include "json.hpp"

namespace conftrack {

struct ModelConfig {
  int T = 4;
  std::size_t hidden = 64;
  std::size_t f_hidden_layers = 2;
  std::size_t classifier_hidden_layers = 3;
  std::size_t localization_hidden_layers = 3;
  std::size_t tracking_hidden_layers = 2;
  bool auto_registration = true;
  bool two_logit_classifier = false;
  std::array<double, 3> loss_weights{1.0, 1.0, 1.0};     // alpha, beta, gamma
  std::array<double, 2> tracking_scales{1.0, 1e-3};      // c_pT [GeV], c_epsT [m]
  std::array<double, 3> feature_scales{10.0, 1.0, 1e3};  // applied to (c0, c1, c2)
  BoxScales box_scales;
  std::uint64_t seed = 0;

  void validate() const {
    if (T < 1) throw ConfigError("model: T must be >= 1");
    if (hidden == 0) throw ConfigError("model: hidden width must be positive");
    for (double s : tracking_scales) {
      if (!(s > 0.0)) throw ConfigError("model: tracking scales must be positive");
    }
    for (double w : loss_weights) {
      if (!(w >= 0.0)) throw ConfigError("model: loss weights must be non-negative");
    }
    if (!(box_scales.eta_m > 0 && box_scales.phi_m > 0 && box_scales.a_m > 0 && box_scales.b_m > 0 &&
          box_scales.theta_m > 0)) {
      throw ConfigError("model: box scales must be positive");
    }
  }

  MlpSpec f_spec() const { return MlpSpec::make(4, hidden, f_hidden_layers, 4); }
  MlpSpec g_spec() const { return MlpSpec::make(6, hidden, 1, 2); }
  MlpSpec h_spec() const { return MlpSpec::make(2, hidden, 1, 2); }
  MlpSpec classifier_spec() const {
    return two_logit_classifier ? MlpSpec::make(2, hidden, classifier_hidden_layers, 2)
                                : MlpSpec::make(2, hidden, classifier_hidden_layers, 1, Activation::kSigmoid);
  }
  MlpSpec localization_spec() const { return MlpSpec::make(2, hidden, localization_hidden_layers, 5); }
  MlpSpec tracking_spec() const { return MlpSpec::make(5, hidden, tracking_hidden_layers, 2); }
};

struct VertexOutputs {
  std::vector<double> class_prob;
  std::vector<EncodedBox> boxes;
  std::vector<std::array<double, 2>> final_state;
};

/// Tape handles of one forward pass.
struct ForwardVars {
  Var prob;   // (n x 1)
  Var box;    // (n x 5)
  Var state;  // (n x 2), s after the last iteration
};

/// Per-cluster tracking-branch input: scaled parabola coefficients of the
/// cluster's hits in conformal space (zero when the fit is impossible).
struct ClusterFeatures {
  Tensor2 fit;  // (k x 3)
  std::vector<bool> fit_ok;
};

inline ClusterFeatures cluster_fit_features(const Graph& g, const std::vector<std::vector<std::size_t>>& clusters,
                                            const std::array<double, 3>& scales) {
  ClusterFeatures out{Tensor2(clusters.size(), 3), std::vector<bool>(clusters.size(), false)};
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    if (clusters[k].size() < 3) continue;
    std::vector<PointXY> xy;
    for (auto i : clusters[k]) xy.push_back({g.vertices[i].x, g.vertices[i].y});
    try {
      const auto c = estimate_track(xy, g.field_B).fit.coeffs;
      out.fit(k, 0) = c.c0 * scales[0];
      out.fit(k, 1) = c.c1 * scales[1];
      out.fit(k, 2) = c.c2 * scales[2];
      out.fit_ok[k] = true;
    } catch (const FitError&) {
    } catch (const DomainError&) {
    }
  }
  return out;
}

class Model {
 public:
  Model() = default;

  /// Randomly initialized from config.seed.
  explicit Model(ModelConfig cfg) : config_(std::move(cfg)) {
    build();
    std::mt19937_64 rng(config_.seed);
    for (auto* m : mlps()) m->initialize(rng);
  }

  /// Every weight and bias zero.
  static Model zeros(ModelConfig cfg) {
    Model m;
    m.config_ = std::move(cfg);
    m.build();
    return m;
  }

  const ModelConfig& config() const { return config_; }
  bool initialized() const { return !f_.empty(); }

  std::vector<Mlp>& f() { return f_; }
  std::vector<Mlp>& g() { return g_; }
  std::vector<Mlp>& h() { return h_; }
  Mlp& classifier() { return classifier_; }
  Mlp& localization() { return localization_; }
  Mlp& tracking() { return tracking_; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto* m : mlps()) {
      for (auto* p : m->parameters()) out.push_back(p);
    }
    return out;
  }

  /// Message passing and per-vertex heads, recorded on the tape.
  ForwardVars forward(Tape& t, const Graph& graph) {
    if (!initialized()) throw StateError("gnn_forward: model is not initialized");
    const std::size_t n = graph.vertices.size();
    if (n == 0) throw ShapeError("gnn_forward: graph has no vertices");

    // directed messages: every undirected edge feeds both endpoints
    std::vector<std::size_t> dst, src;
    dst.reserve(2 * graph.edges.size());
    src.reserve(2 * graph.edges.size());
    for (const auto& e : graph.edges) {
      if (e.i >= n || e.j >= n || e.i == e.j) {
        throw IndexError("gnn_forward: bad edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) + ")");
      }
      dst.push_back(e.i);
      src.push_back(e.j);
      dst.push_back(e.j);
      src.push_back(e.i);
    }
    Tensor2 rel(dst.size(), 2);
    for (std::size_t k = 0; k < dst.size(); ++k) {
      const auto& a = graph.vertices[dst[k]];
      const auto& b = graph.vertices[src[k]];
      rel(k, 0) = b.eta - a.eta;
      rel(k, 1) = delta_phi(b.phi, a.phi);
    }
    Tensor2 s0(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      s0(i, 0) = graph.vertices[i].state[0];
      s0(i, 1) = graph.vertices[i].state[1];
    }

    const Var relv = t.constant(std::move(rel));
    Var s = t.constant(std::move(s0));
    for (int it = 0; it < config_.T; ++it) {
      Var dx_edge = relv;
      if (config_.auto_registration) {
        const Var dx = h_[it].forward(t, s);
        dx_edge = ops::add(relv, ops::gather_rows(dx, dst));
      }
      const Var msg_in = ops::concat_cols(dx_edge, ops::gather_rows(s, src));
      const Var msg = f_[it].forward(t, msg_in);
      const Var agg = ops::max_aggregate(msg, dst, n);
      s = ops::add(s, g_[it].forward(t, ops::concat_cols(agg, s)));
    }

    Var prob = classifier_.forward(t, s);
    if (config_.two_logit_classifier) {
      // softmax over (noise, track) logits: P(track) = sigmoid(z1 - z0)
      prob = ops::sigmoid(ops::sub(ops::slice_cols(prob, 1, 2), ops::slice_cols(prob, 0, 1)));
    }
    return {prob, localization_.forward(t, s), s};
  }

  /// Tracking branch over vertex clusters, in physical units (p_T, ε_T).
  Var track_params(Tape& t, const Graph& graph, Var state, const std::vector<std::vector<std::size_t>>& clusters,
                   std::vector<bool>* fit_ok = nullptr) {
    const ClusterFeatures feat = cluster_fit_features(graph, clusters, config_.feature_scales);
    if (fit_ok) *fit_ok = feat.fit_ok;
    std::vector<std::size_t> members, seg;
    for (std::size_t k = 0; k < clusters.size(); ++k) {
      for (auto i : clusters[k]) {
        members.push_back(i);
        seg.push_back(k);
      }
    }
    const Var pooled = ops::max_aggregate(ops::gather_rows(state, members), seg, clusters.size());
    const Var in = ops::concat_cols(t.constant(feat.fit), pooled);
    const Var out = tracking_.forward(t, in);
    return ops::scale_cols(out, {config_.tracking_scales[0], config_.tracking_scales[1]});
  }

 private:
  void build() {
    config_.validate();
    f_.clear();
    g_.clear();
    h_.clear();
    for (int it = 0; it < config_.T; ++it) {
      const std::string k = std::to_string(it + 1);
      h_.emplace_back(config_.h_spec(), "h" + k);
      f_.emplace_back(config_.f_spec(), "f" + k);
      g_.emplace_back(config_.g_spec(), "g" + k);
    }
    classifier_ = Mlp(config_.classifier_spec(), "classifier");
    localization_ = Mlp(config_.localization_spec(), "localization");
    tracking_ = Mlp(config_.tracking_spec(), "tracking");
  }

  std::vector<Mlp*> mlps() {
    std::vector<Mlp*> out;
    for (int it = 0; it < config_.T && it < static_cast<int>(f_.size()); ++it) {
      out.push_back(&h_[it]);
      out.push_back(&f_[it]);
      out.push_back(&g_[it]);
    }
    if (initialized()) {
      out.push_back(&classifier_);
      out.push_back(&localization_);
      out.push_back(&tracking_);
    }
    return out;
  }

  ModelConfig config_;
  std::vector<Mlp> f_, g_, h_;
  Mlp classifier_, localization_, tracking_;
};

inline VertexOutputs read_outputs(const Tape& t, const ForwardVars& fv) {
  const Tensor2& P = t.value(fv.prob);
  const Tensor2& B = t.value(fv.box);
  const Tensor2& S = t.value(fv.state);
  VertexOutputs out;
  for (std::size_t i = 0; i < P.rows; ++i) {
    out.class_prob.push_back(P(i, 0));
    out.boxes.push_back({B(i, 0), B(i, 1), B(i, 2), B(i, 3), B(i, 4)});
    out.final_state.push_back({S(i, 0), S(i, 1)});
  }
  return out;
}

inline VertexOutputs gnn_forward(Model& m, const Graph& g) {
  Tape t;
  return read_outputs(t, m.forward(t, g));
}

/// Tracking predictions (p_T, ε_T) for given clusters of an already
/// evaluated graph.
inline std::vector<std::array<double, 2>> predict_cluster_params(Model& m, const Graph& g,
                                                                 const VertexOutputs& out,
                                                                 const std::vector<std::vector<std::size_t>>& clusters,
                                                                 std::vector<bool>* fit_ok = nullptr) {
  if (out.final_state.size() != g.vertices.size()) {
    throw ShapeError("predict_cluster_params: " + std::to_string(out.final_state.size()) + " states for " +
                     std::to_string(g.vertices.size()) + " vertices");
  }
  Tape t;
  Tensor2 S(g.vertices.size(), 2);
  for (std::size_t i = 0; i < S.rows; ++i) {
    S(i, 0) = out.final_state[i][0];
    S(i, 1) = out.final_state[i][1];
  }
  const Var p = m.track_params(t, g, t.constant(std::move(S)), clusters, fit_ok);
  std::vector<std::array<double, 2>> res;
  for (std::size_t k = 0; k < clusters.size(); ++k) res.push_back({t.value(p)(k, 0), t.value(p)(k, 1)});
  return res;
}

// ---- losses and training ----

struct TrainingTargets {
  std::vector<double> y;     // 1 track, 0 noise
  Tensor2 boxes;             // (n x 5) encoded truth boxes
  std::vector<double> mask;  // 1 where a box target exists
  std::vector<std::vector<std::size_t>> clusters;
  Tensor2 cluster_truth;  // (k x 2) truth (p_T, ε_T)
};

inline TrainingTargets make_targets(const Graph& g, const BoxScales& scales) {
  TrainingTargets tg;
  tg.y = class_targets(g);
  tg.boxes = Tensor2(g.vertices.size(), 5);
  tg.mask.assign(g.vertices.size(), 0.0);
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    const auto& v = g.vertices[i];
    if (!v.is_track() || !v.target) continue;
    const auto enc = encode_box(*v.target, v.coords(), scales).to_array();
    for (std::size_t k = 0; k < 5; ++k) tg.boxes(i, k) = enc[k];
    tg.mask[i] = 1.0;
  }
  const auto all = truth_clusters(g);
  std::vector<std::array<double, 2>> truth;
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (all[k].empty()) continue;
    tg.clusters.push_back(all[k]);
    truth.push_back({g.tracks[k].pT, g.tracks[k].epsT});
  }
  tg.cluster_truth = Tensor2(truth.size(), 2);
  for (std::size_t k = 0; k < truth.size(); ++k) {
    tg.cluster_truth(k, 0) = truth[k][0];
    tg.cluster_truth(k, 1) = truth[k][1];
  }
  return tg;
}

struct LossVars {
  Var classification, localization, tracking, total;
};

struct LossBreakdown {
  double classification = 0.0;
  double localization = 0.0;
  double tracking = 0.0;
  double total = 0.0;
};

/// l_total = α l_c + β l_loc + γ l_t on one graph.
inline LossVars total_loss(Tape& t, Model& m, const Graph& g, const ForwardVars& fv, const TrainingTargets& tg) {
  const auto& w = m.config().loss_weights;
  LossVars l;
  l.classification = bce_loss(fv.prob, tg.y);
  l.localization = huber_loss(fv.box, tg.boxes, tg.mask);
  if (tg.clusters.empty()) {
    l.tracking = t.constant(Tensor2(1, 1));
  } else {
    l.tracking = mse_tracking_loss(m.track_params(t, g, fv.state, tg.clusters), tg.cluster_truth,
                                   m.config().tracking_scales);
  }
  const std::vector<Var> terms{l.classification, l.localization, l.tracking};
  l.total = ops::weighted_sum(terms, w);
  return l;
}

inline LossBreakdown read_losses(const Tape& t, const LossVars& l) {
  return {t.value(l.classification).data[0], t.value(l.localization).data[0], t.value(l.tracking).data[0],
          t.value(l.total).data[0]};
}

struct TrainConfig {
  int epochs = 30;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;
  LossBreakdown mean;
};

struct TrainResult {
  std::vector<EpochStats> history;
  AdamState optimizer;
};

/// One Adam step per graph; graph order reshuffled every epoch from a stream
/// seeded by cfg.seed. History holds per-epoch means of the step losses.
inline TrainResult train(Model& m, std::span<const Graph> dataset, const TrainConfig& cfg,
                         const std::function<void(const EpochStats&)>& on_epoch = {},
                         AdamState initial_state = {}) {
  if (dataset.empty()) throw ConfigError("train: empty dataset");
  if (cfg.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!m.initialized()) throw StateError("train: model is not initialized");
  std::vector<TrainingTargets> targets;
  targets.reserve(dataset.size());
  for (const auto& g : dataset) targets.push_back(make_targets(g, m.config().box_scales));

  TrainResult res;
  res.optimizer = std::move(initial_state);
  const auto params = m.parameters();
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    LossBreakdown sum;
    for (std::size_t k : order) {
      const Graph& g = dataset[k];
      const auto context = [&](const std::string& what) {
        return "train: " + what + " at epoch " + std::to_string(epoch) + ", graph " + std::to_string(g.event_id);
      };
      for (auto* p : params) p->zero_grad();
      Tape t;
      LossBreakdown l;
      try {
        const ForwardVars fv = m.forward(t, g);
        const LossVars lv = total_loss(t, m, g, fv, targets[k]);
        l = read_losses(t, lv);
        t.backward(lv.total);
      } catch (const NumericError& e) {
        throw NumericError(context(e.what()));
      }
      const std::array<std::pair<const char*, double>, 4> parts{
          {{"classification", l.classification}, {"localization", l.localization}, {"tracking", l.tracking},
           {"total", l.total}}};
      for (const auto& [name, v] : parts) {
        if (!std::isfinite(v)) throw NumericError(context(std::string("non-finite ") + name + " loss"));
      }
      adam_step(cfg.adam, res.optimizer, params);
      sum.classification += l.classification;
      sum.localization += l.localization;
      sum.tracking += l.tracking;
      sum.total += l.total;
    }
    const double n = static_cast<double>(dataset.size());
    EpochStats st{epoch, {sum.classification / n, sum.localization / n, sum.tracking / n, sum.total / n}};
    res.history.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return res;
}

/// Loss of one graph without updating anything.
inline LossBreakdown evaluate_loss(Model& m, const Graph& g) {
  Tape t;
  const ForwardVars fv = m.forward(t, g);
  return read_losses(t, total_loss(t, m, g, fv, make_targets(g, m.config().box_scales)));
}

struct Inference {
  VertexOutputs outputs;
  std::vector<std::optional<Ellipse5>> ellipses;  // decoded where classified as track
};

/// Forward pass plus box decoding for vertices with class_prob >= threshold.
/// A threshold of 1 or more selects no vertex.
inline Inference infer(Model& m, const Graph& g, double threshold = 0.5) {
  Inference res;
  res.outputs = gnn_forward(m, g);
  res.ellipses.resize(g.vertices.size());
  if (threshold >= 1.0) return res;
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    if (res.outputs.class_prob[i] >= threshold) {
      res.ellipses[i] = decode_box(res.outputs.boxes[i], g.vertices[i].coords(), m.config().box_scales);
    }
  }
  return res;
}

// ---- checkpoints ----

inline constexpr const char* kCheckpointFormat = "tracknet-v1";

inline nlohmann::json to_json(const BoxScales& s) {
  return {{"eta_m", s.eta_m}, {"phi_m", s.phi_m}, {"a_m", s.a_m},
          {"b_m", s.b_m},     {"theta_m", s.theta_m}, {"delta_theta", s.delta_theta}};
}

inline BoxScales box_scales_from_json(const nlohmann::json& j, BoxScales s = {}) {
  s.eta_m = j.value("eta_m", s.eta_m);
  s.phi_m = j.value("phi_m", s.phi_m);
  s.a_m = j.value("a_m", s.a_m);
  s.b_m = j.value("b_m", s.b_m);
  s.theta_m = j.value("theta_m", s.theta_m);
  s.delta_theta = j.value("delta_theta", s.delta_theta);
  return s;
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"T", c.T},
          {"hidden", c.hidden},
          {"f_hidden_layers", c.f_hidden_layers},
          {"classifier_hidden_layers", c.classifier_hidden_layers},
          {"localization_hidden_layers", c.localization_hidden_layers},
          {"tracking_hidden_layers", c.tracking_hidden_layers},
          {"auto_registration", c.auto_registration},
          {"two_logit_classifier", c.two_logit_classifier},
          {"loss_weights", c.loss_weights},
          {"tracking_scales", c.tracking_scales},
          {"feature_scales", c.feature_scales},
          {"box_scales", to_json(c.box_scales)},
          {"seed", c.seed}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{
      "T", "hidden", "f_hidden_layers", "classifier_hidden_layers", "localization_hidden_layers",
      "tracking_hidden_layers", "auto_registration", "two_logit_classifier", "loss_weights", "tracking_scales",
      "feature_scales", "box_scales", "seed"};
  if (!j.is_object()) throw ConfigError("model: expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("model: unknown key '" + k + "'");
  }
  ModelConfig c;
  try {
    c.T = j.value("T", c.T);
    c.hidden = j.value("hidden", c.hidden);
    c.f_hidden_layers = j.value("f_hidden_layers", c.f_hidden_layers);
    c.classifier_hidden_layers = j.value("classifier_hidden_layers", c.classifier_hidden_layers);
    c.localization_hidden_layers = j.value("localization_hidden_layers", c.localization_hidden_layers);
    c.tracking_hidden_layers = j.value("tracking_hidden_layers", c.tracking_hidden_layers);
    c.auto_registration = j.value("auto_registration", c.auto_registration);
    c.two_logit_classifier = j.value("two_logit_classifier", c.two_logit_classifier);
    c.loss_weights = j.value("loss_weights", c.loss_weights);
    c.tracking_scales = j.value("tracking_scales", c.tracking_scales);
    c.feature_scales = j.value("feature_scales", c.feature_scales);
    if (j.contains("box_scales")) c.box_scales = box_scales_from_json(j.at("box_scales"));
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json tensor_to_json(const Tensor2& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < t.cols; ++j) row.push_back(t(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Tensor2 tensor_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols, const std::string& what) {
  if (!j.is_array() || j.size() != rows) {
    throw ShapeError(what + ": expected " + Tensor2::shape_string(rows, cols) + " array");
  }
  Tensor2 t(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw ShapeError(what + ": row " + std::to_string(i) + " does not match " + Tensor2::shape_string(rows, cols));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw ParseError(what + ": non-numeric entry");
      t(i, c) = j[i][c].get<double>();
    }
  }
  return t;
}

struct Checkpoint {
  Model model;
  AdamState optimizer;
  int epoch = 0;
  std::uint64_t seed = 0;
  nlohmann::json config_echo;
};

inline nlohmann::json checkpoint_to_json(Model& m, const AdamState& opt, int epoch, std::uint64_t seed,
                                         const nlohmann::json& config_echo = nullptr) {
  nlohmann::json params = nlohmann::json::object();
  const auto ps = m.parameters();
  for (auto* p : ps) params[p->name] = tensor_to_json(p->value);
  nlohmann::json optimizer{{"step", opt.step}};
  if (!opt.m.empty()) {
    nlohmann::json mj = nlohmann::json::object(), vj = nlohmann::json::object();
    for (std::size_t k = 0; k < ps.size(); ++k) {
      mj[ps[k]->name] = tensor_to_json(opt.m[k]);
      vj[ps[k]->name] = tensor_to_json(opt.v[k]);
    }
    optimizer["m"] = std::move(mj);
    optimizer["v"] = std::move(vj);
  }
  return {{"format", kCheckpointFormat}, {"model", to_json(m.config())}, {"config", config_echo},
          {"parameters", std::move(params)}, {"optimizer", std::move(optimizer)}, {"epoch", epoch},
          {"seed", seed}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", std::string()) != kCheckpointFormat) {
    throw ParseError(std::string("checkpoint: expected format ") + kCheckpointFormat);
  }
  Checkpoint c;
  c.model = Model::zeros(model_config_from_json(j.at("model")));
  c.epoch = j.value("epoch", 0);
  c.seed = j.value("seed", std::uint64_t{0});
  c.config_echo = j.value("config", nlohmann::json());
  const auto& pj = j.at("parameters");
  auto ps = c.model.parameters();
  if (pj.size() != ps.size()) {
    throw ShapeError("checkpoint: " + std::to_string(pj.size()) + " parameter tensors, config implies " +
                     std::to_string(ps.size()));
  }
  for (auto* p : ps) {
    if (!pj.contains(p->name)) throw ShapeError("checkpoint: missing parameter " + p->name);
    p->value = tensor_from_json(pj.at(p->name), p->value.rows, p->value.cols, "checkpoint " + p->name);
  }
  const auto& oj = j.at("optimizer");
  c.optimizer.step = oj.value("step", std::int64_t{0});
  if (oj.contains("m")) {
    for (auto* p : ps) {
      c.optimizer.m.push_back(tensor_from_json(oj.at("m").at(p->name), p->value.rows, p->value.cols, "adam m"));
      c.optimizer.v.push_back(tensor_from_json(oj.at("v").at(p->name), p->value.rows, p->value.cols, "adam v"));
    }
  }
  return c;
}

inline void save_checkpoint(const std::string& path, Model& m, const AdamState& opt, int epoch, std::uint64_t seed,
                            const nlohmann::json& config_echo = nullptr) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << checkpoint_to_json(m, opt, epoch, seed, config_echo).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
    return checkpoint_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace conftrack
