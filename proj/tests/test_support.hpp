#pragma once

// Test-only oracles and generators. Nothing here calls into the code paths it
// is used to check.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "conftrack/kinematics.hpp"

namespace conftrack::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

/// Points on the exact circle (a, b, R), starting just past the point of closest
/// approach to the origin and stepping along the arc at the given path lengths.
inline std::vector<PointXY> sample_circle_arc(double a, double b, double R,
                                              const std::vector<double>& arc_lengths,
                                              int sense = 1) {
  const double start = std::atan2(-b, -a);
  std::vector<PointXY> out;
  for (double s : arc_lengths) {
    const double psi = start + sense * s / R;
    out.push_back({a + R * std::cos(psi), b + R * std::sin(psi)});
  }
  return out;
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(lo + (hi - lo) * i / (n - 1));
  return out;
}

}  // namespace conftrack::testing

#include <algorithm>
#include <map>
#include <span>

#include "conftrack/dbscan.hpp"

namespace conftrack::testing {

/// Exhaustive DBSCAN reference: core points from full O(n^2) neighborhoods,
/// clusters as connected components of the core graph ordered by their lowest
/// core index, border points attached to the earliest such component.
inline std::vector<int> brute_force_dbscan(std::span<const EtaPhi> pts, double eps, int min_pts) {
  const std::size_t n = pts.size();
  auto dist = [](EtaPhi p, EtaPhi q) {
    double d = std::fmod(std::abs(p.phi - q.phi), kTwoPi);
    d = std::min(d, kTwoPi - d);
    return std::sqrt((p.eta - q.eta) * (p.eta - q.eta) + d * d);
  };
  std::vector<std::vector<std::size_t>> nb(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (dist(pts[i], pts[j]) <= eps) nb[i].push_back(j);
    }
  }
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) core[i] = nb[i].size() >= static_cast<std::size_t>(min_pts);

  std::vector<int> comp(n, -1);
  int n_comp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || comp[i] >= 0) continue;
    std::vector<std::size_t> stack{i};
    comp[i] = n_comp;
    while (!stack.empty()) {
      const auto k = stack.back();
      stack.pop_back();
      for (auto j : nb[k]) {
        if (core[j] && comp[j] < 0) {
          comp[j] = n_comp;
          stack.push_back(j);
        }
      }
    }
    ++n_comp;
  }
  std::vector<int> label(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      label[i] = comp[i];
      continue;
    }
    int best = -1;
    for (auto j : nb[i]) {
      if (core[j] && (best < 0 || comp[j] < best)) best = comp[j];
    }
    label[i] = best;
  }
  return label;
}

/// Relabels clusters by order of first appearance so partitions compare with ==.
inline std::vector<int> canonical_partition(const std::vector<int>& labels) {
  std::map<int, int> remap;
  std::vector<int> out;
  for (int l : labels) {
    if (l < 0) {
      out.push_back(-1);
      continue;
    }
    auto [it, inserted] = remap.emplace(l, static_cast<int>(remap.size()));
    out.push_back(it->second);
  }
  return out;
}

}  // namespace conftrack::testing
