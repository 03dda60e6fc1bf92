#pragma once

// Per-vertex ellipses -> track instances: IoU-seeded NMS averaging, hit
// assignment by containment, and the IoU threshold choice.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conftrack/angles.hpp"
#include "conftrack/ellipse.hpp"
#include "conftrack/error.hpp"

namespace conftrack {

struct TrackCandidate {
  Ellipse5 ellipse;
  double confidence = 0.0;
  std::vector<std::size_t> members;  // indices into the merged input
  std::optional<std::array<double, 2>> params;  // (p_T, ε_T)
};

inline constexpr double kDefaultIouThreshold = 0.5;

/// Optional re-weighting of a member's score before ordering; receives the
/// input index and the raw score.
using RescoreFn = std::function<double(std::size_t, double)>;

/// Mean of member ellipses: arithmetic η, a, b; φ averaged on the circle;
/// θ averaged on the circle of period π.
inline Ellipse5 average_ellipses(std::span<const Ellipse5> es) {
  if (es.empty()) throw DomainError("average_ellipses: no ellipses");
  const double n = static_cast<double>(es.size());
  Ellipse5 out{0.0, 0.0, 0.0, 0.0, 0.0};
  double dphi = 0.0, s2 = 0.0, c2 = 0.0;
  for (const auto& e : es) {
    out.eta_c += e.eta_c;
    out.a += e.a;
    out.b += e.b;
    dphi += delta_phi(e.phi_c, es[0].phi_c);
    s2 += std::sin(2.0 * e.theta);
    c2 += std::cos(2.0 * e.theta);
  }
  out.eta_c /= n;
  out.a /= n;
  out.b /= n;
  out.phi_c = wrap_phi(es[0].phi_c + dphi / n);
  out.theta = std::hypot(s2, c2) > 1e-12 * n ? 0.5 * std::atan2(s2, c2) : es[0].theta;
  return canonicalize(out);
}

/// Greedy NMS averaging. The highest-scoring unassigned ellipse seeds a group
/// that takes every unassigned ellipse with IoU(seed, e) > iou_threshold.
/// Equal scores are visited in input order. Candidates come out by descending
/// confidence (mean member score).
inline std::vector<TrackCandidate> merge_ellipses(std::span<const Ellipse5> ellipses, std::span<const double> scores,
                                                  double iou_threshold = kDefaultIouThreshold,
                                                  const RescoreFn& rescore = {}) {
  if (ellipses.size() != scores.size()) {
    throw ShapeError("merge_ellipses: " + std::to_string(ellipses.size()) + " ellipses vs " +
                     std::to_string(scores.size()) + " scores");
  }
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw DomainError("merge_ellipses: threshold must be in (0, 1)");
  std::vector<double> s(scores.begin(), scores.end());
  if (rescore) {
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = rescore(i, s[i]);
  }
  std::vector<std::size_t> order(ellipses.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });

  std::vector<bool> taken(ellipses.size(), false);
  std::vector<TrackCandidate> out;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t seed = order[oi];
    if (taken[seed]) continue;
    TrackCandidate c;
    c.members.push_back(seed);
    taken[seed] = true;
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t k = order[oj];
      if (!taken[k] && ellipse_iou(ellipses[seed], ellipses[k]) > iou_threshold) {
        c.members.push_back(k);
        taken[k] = true;
      }
    }
    std::vector<Ellipse5> group;
    double conf = 0.0;
    for (auto k : c.members) {
      group.push_back(ellipses[k]);
      conf += s[k];
    }
    c.ellipse = average_ellipses(group);
    c.confidence = conf / static_cast<double>(c.members.size());
    out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TrackCandidate& x, const TrackCandidate& y) { return x.confidence > y.confidence; });
  return out;
}

inline constexpr int kUnassigned = -1;

/// Candidate index for each vertex with class_prob >= class_threshold: the
/// highest-confidence candidate whose ellipse contains it, else kUnassigned.
inline std::vector<int> assign_hits(std::span<const TrackCandidate> candidates, std::span<const EtaPhi> vertices,
                                    std::span<const double> class_prob, double class_threshold = 0.5) {
  if (vertices.size() != class_prob.size()) throw ShapeError("assign_hits: vertex/probability count mismatch");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return candidates[x].confidence > candidates[y].confidence; });
  std::vector<int> out(vertices.size(), kUnassigned);
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (!(class_prob[i] >= class_threshold)) continue;
    for (auto k : order) {
      if (point_in_ellipse(candidates[k].ellipse, vertices[i])) {
        out[i] = static_cast<int>(k);
        break;
      }
    }
  }
  return out;
}

struct IouPair {
  double iou = 0.0;
  bool same_track = false;
};

struct ThresholdChoice {
  double threshold = kDefaultIouThreshold;
  double balanced_accuracy = 0.0;
  bool separable = false;
  double interval_lo = 0.0;  // optimal interval [lo, hi)
  double interval_hi = 1.0;
};

/// Balanced accuracy of "same track iff IoU > t".
inline double balanced_accuracy(std::span<const IouPair> pairs, double t) {
  double tp = 0, pos = 0, tn = 0, neg = 0;
  for (const auto& p : pairs) {
    if (p.same_track) {
      pos += 1;
      tp += p.iou > t;
    } else {
      neg += 1;
      tn += !(p.iou > t);
    }
  }
  if (pos == 0 || neg == 0) throw DomainError("balanced_accuracy: needs pairs of both classes");
  return 0.5 * (tp / pos + tn / neg);
}

/// Threshold in [0, 1] maximizing balanced accuracy. The accuracy is constant
/// between consecutive distinct IoU values; adjacent optimal pieces are joined
/// and the midpoint of the widest optimal interval is returned.
inline ThresholdChoice choose_threshold(std::span<const IouPair> pairs) {
  bool has_pos = false, has_neg = false;
  for (const auto& p : pairs) (p.same_track ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw DomainError("choose_threshold: needs pairs of both classes");

  std::vector<double> cuts{0.0};
  for (const auto& p : pairs) {
    if (p.iou > 0.0 && p.iou < 1.0) cuts.push_back(p.iou);
  }
  cuts.push_back(1.0);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  // piece k is [cuts[k], cuts[k + 1])
  std::vector<double> ba;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) ba.push_back(balanced_accuracy(pairs, cuts[k]));
  const double best = *std::max_element(ba.begin(), ba.end());

  ThresholdChoice out;
  out.balanced_accuracy = best;
  out.separable = best == 1.0;
  double best_width = -1.0;
  for (std::size_t k = 0; k < ba.size();) {
    if (ba[k] != best) {
      ++k;
      continue;
    }
    std::size_t e = k;
    while (e + 1 < ba.size() && ba[e + 1] == best) ++e;
    const double lo = cuts[k], hi = cuts[e + 1];
    if (hi - lo > best_width) {
      best_width = hi - lo;
      out.interval_lo = lo;
      out.interval_hi = hi;
    }
    k = e + 1;
  }
  out.threshold = 0.5 * (out.interval_lo + out.interval_hi);
  return out;
}

}  // namespace conftrack
