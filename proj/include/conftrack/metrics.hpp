#pragma once

// Evaluation of predicted track instances against truth events.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "conftrack/error.hpp"
#include "conftrack/event.hpp"
#include "conftrack/graph.hpp"
#include "conftrack/postprocess.hpp"

namespace conftrack {

/// Inference result for one event. Vectors indexed by vertex are aligned with
/// hit_ids; candidate members are vertex indices.
struct EventPrediction {
  std::int64_t event_id = 0;
  std::vector<std::int64_t> hit_ids;
  std::vector<double> class_prob;
  std::vector<std::optional<Ellipse5>> vertex_ellipses;
  std::vector<TrackCandidate> candidates;
  std::vector<int> assignment;  // candidate index per vertex, kUnassigned otherwise
};

struct Metrics {
  double accuracy = 0.0;
  std::optional<double> auc;  // undefined with a single class
  double efficiency = 0.0;
  double purity = 0.0;
  bool no_candidates = false;
  double pT_rel_rms = 0.0;
  double epsT_abs_rms = 0.0;
  std::size_t n_events = 0;
  std::size_t n_hits = 0;
  std::size_t n_tracks = 0;
  std::size_t n_candidates = 0;
  std::size_t n_matched_tracks = 0;
  std::size_t n_matched_candidates = 0;
  std::size_t n_resolution_pairs = 0;
};

struct EvalOptions {
  double majority = 0.5;  // a candidate matches a track holding more than this fraction of its hits
  double class_threshold = 0.5;
};

/// Area under the ROC curve by the rank-sum statistic; ties count one half.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: score/label count mismatch");
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0, n_pos = 0.0, n_neg = 0.0;
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t e = k;
    while (e + 1 < idx.size() && scores[idx[e + 1]] == scores[idx[k]]) ++e;
    const double avg_rank = 0.5 * static_cast<double>(k + e) + 1.0;
    for (std::size_t m = k; m <= e; ++m) {
      if (labels[idx[m]]) {
        rank_sum += avg_rank;
        n_pos += 1.0;
      } else {
        n_neg += 1.0;
      }
    }
    k = e + 1;
  }
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

/// Majority-rule matching and hit-level classification scores. Predictions and
/// truth are paired by event id; both sides must cover the same ids.
inline Metrics evaluate(std::span<const EventPrediction> predictions, std::span<const Event> truth,
                        const EvalOptions& opt = {}) {
  std::map<std::int64_t, const EventPrediction*> pred_by_id;
  std::map<std::int64_t, const Event*> truth_by_id;
  for (const auto& p : predictions) {
    if (!pred_by_id.emplace(p.event_id, &p).second) {
      throw ConsistencyError("evaluate: duplicate prediction for event " + std::to_string(p.event_id));
    }
  }
  for (const auto& e : truth) {
    if (!truth_by_id.emplace(e.event_id, &e).second) {
      throw ConsistencyError("evaluate: duplicate truth event " + std::to_string(e.event_id));
    }
  }
  for (const auto& [id, p] : pred_by_id) {
    if (!truth_by_id.count(id)) throw ConsistencyError("evaluate: no truth for event " + std::to_string(id));
  }
  for (const auto& [id, e] : truth_by_id) {
    if (!pred_by_id.count(id)) throw ConsistencyError("evaluate: no prediction for event " + std::to_string(id));
  }

  Metrics m;
  std::vector<double> scores;
  std::vector<int> labels;
  double correct = 0.0, sq_pt = 0.0, sq_eps = 0.0;
  for (const auto& [id, ev] : truth_by_id) {
    const EventPrediction& p = *pred_by_id.at(id);
    const std::size_t n = p.hit_ids.size();
    if (p.class_prob.size() != n || p.assignment.size() != n) {
      throw ConsistencyError("evaluate: event " + std::to_string(id) + " has misaligned prediction arrays");
    }
    std::unordered_map<std::int64_t, const Hit*> hits;
    for (const auto& h : ev->hits) hits[h.hit_id] = &h;
    if (hits.size() != n) {
      throw ConsistencyError("evaluate: event " + std::to_string(id) + " has " + std::to_string(hits.size()) +
                             " truth hits but " + std::to_string(n) + " predicted vertices");
    }
    std::unordered_map<std::int64_t, std::map<int, std::size_t>> votes;  // particle -> candidate -> hits
    for (std::size_t i = 0; i < n; ++i) {
      auto it = hits.find(p.hit_ids[i]);
      if (it == hits.end()) {
        throw ConsistencyError("evaluate: event " + std::to_string(id) + " predicts unknown hit " +
                               std::to_string(p.hit_ids[i]));
      }
      const bool is_track = !it->second->is_noise();
      scores.push_back(p.class_prob[i]);
      labels.push_back(is_track ? 1 : 0);
      correct += (p.class_prob[i] >= opt.class_threshold) == is_track;
      const int c = p.assignment[i];
      if (c != kUnassigned && (c < 0 || static_cast<std::size_t>(c) >= p.candidates.size())) {
        throw ConsistencyError("evaluate: event " + std::to_string(id) + " assigns to missing candidate " +
                               std::to_string(c));
      }
      if (is_track && c != kUnassigned) ++votes[it->second->particle_id][c];
    }
    std::vector<bool> cand_matched(p.candidates.size(), false);
    for (const auto& t : ev->tracks) {
      ++m.n_tracks;
      const double need = opt.majority * static_cast<double>(t.hit_ids.size());
      for (const auto& [c, count] : votes[t.particle_id]) {
        if (static_cast<double>(count) > need) {
          ++m.n_matched_tracks;
          cand_matched[c] = true;
          if (const auto& par = p.candidates[c].params) {
            const double r = ((*par)[0] - t.params.pT) / t.params.pT;
            const double d = (*par)[1] - t.params.epsT;
            sq_pt += r * r;
            sq_eps += d * d;
            ++m.n_resolution_pairs;
          }
          break;
        }
      }
    }
    m.n_candidates += p.candidates.size();
    m.n_matched_candidates += static_cast<std::size_t>(std::count(cand_matched.begin(), cand_matched.end(), true));
    m.n_hits += n;
    ++m.n_events;
  }
  m.accuracy = m.n_hits ? correct / static_cast<double>(m.n_hits) : 0.0;
  m.auc = roc_auc(scores, labels);
  m.efficiency = m.n_tracks ? static_cast<double>(m.n_matched_tracks) / static_cast<double>(m.n_tracks) : 0.0;
  m.no_candidates = m.n_candidates == 0;
  m.purity = m.n_candidates ? static_cast<double>(m.n_matched_candidates) / static_cast<double>(m.n_candidates) : 0.0;
  if (m.n_resolution_pairs) {
    m.pT_rel_rms = std::sqrt(sq_pt / static_cast<double>(m.n_resolution_pairs));
    m.epsT_abs_rms = std::sqrt(sq_eps / static_cast<double>(m.n_resolution_pairs));
  }
  return m;
}

/// Prediction built from truth alone: one candidate per truth track carrying
/// its padded truth ellipse and parameters, every track hit assigned to it.
inline EventPrediction identity_prediction(const Event& e, const TruthEllipseOptions& opt = {}) {
  EventPrediction p;
  p.event_id = e.event_id;
  const auto ellipses = truth_ellipses(e, opt);
  std::unordered_map<std::int64_t, int> cand_of;
  for (std::size_t k = 0; k < e.tracks.size(); ++k) {
    TrackCandidate c;
    c.ellipse = ellipses[k].second;
    c.confidence = 1.0;
    c.params = std::array<double, 2>{e.tracks[k].params.pT, e.tracks[k].params.epsT};
    cand_of[e.tracks[k].particle_id] = static_cast<int>(k);
    p.candidates.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < e.hits.size(); ++i) {
    const Hit& h = e.hits[i];
    p.hit_ids.push_back(h.hit_id);
    p.class_prob.push_back(h.is_noise() ? 0.0 : 1.0);
    const int c = h.is_noise() ? kUnassigned : cand_of.at(h.particle_id);
    p.assignment.push_back(c);
    p.vertex_ellipses.push_back(h.is_noise() ? std::nullopt : std::optional<Ellipse5>(p.candidates[c].ellipse));
    if (c != kUnassigned) p.candidates[c].members.push_back(i);
  }
  return p;
}

}  // namespace conftrack
