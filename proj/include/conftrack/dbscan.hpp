#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "conftrack/angles.hpp"
#include "conftrack/ellipse.hpp"
#include "conftrack/error.hpp"

namespace conftrack {

struct DbscanParams {
  double eps = 0.05;
  int min_pts = 2;
};

inline constexpr int kUnclustered = -1;

/// Euclidean distance in (η, φ) with φ measured along the short arc.
inline double eta_phi_distance(EtaPhi p1, EtaPhi p2) {
  return std::hypot(p1.eta - p2.eta, delta_phi(p1.phi, p2.phi));
}

namespace detail {

// Uniform grid over (η, φ) with cells at least eps wide; φ cells wrap.
class EtaPhiGrid {
 public:
  EtaPhiGrid(std::span<const EtaPhi> pts, double eps) : pts_(pts), eps_(eps) {
    n_phi_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(kTwoPi / eps)));
    phi_width_ = kTwoPi / static_cast<double>(n_phi_);
    for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(eta_cell(i), phi_cell(i))].push_back(i);
  }

  /// Indices within eps of point i (inclusive, i itself included), ascending.
  void neighbors(std::size_t i, std::vector<std::size_t>& out) const {
    out.clear();
    const std::int64_t ie = eta_cell(i), ip = phi_cell(i);
    std::int64_t phi_cells[3] = {ip - 1, ip, ip + 1};
    const int n_distinct = n_phi_ >= 3 ? 3 : static_cast<int>(n_phi_);
    for (int k = 0; k < 3; ++k) phi_cells[k] = ((phi_cells[k] % n_phi_) + n_phi_) % n_phi_;
    if (n_distinct < 3) {
      phi_cells[0] = 0;
      phi_cells[1] = 1;
    }
    for (std::int64_t de = -1; de <= 1; ++de) {
      for (int k = 0; k < n_distinct; ++k) {
        auto it = cells_.find(key(ie + de, phi_cells[k]));
        if (it == cells_.end()) continue;
        for (std::size_t j : it->second) {
          if (eta_phi_distance(pts_[i], pts_[j]) <= eps_) out.push_back(j);
        }
      }
    }
    std::sort(out.begin(), out.end());
  }

 private:
  std::int64_t eta_cell(std::size_t i) const {
    return static_cast<std::int64_t>(std::floor(pts_[i].eta / eps_));
  }
  std::int64_t phi_cell(std::size_t i) const {
    const auto c = static_cast<std::int64_t>(std::floor(wrap_phi(pts_[i].phi) / phi_width_));
    return std::min(c, n_phi_ - 1);
  }
  static std::int64_t key(std::int64_t ie, std::int64_t ip) { return ie * 1000003 + ip; }

  std::span<const EtaPhi> pts_;
  double eps_;
  std::int64_t n_phi_;
  double phi_width_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

}  // namespace detail

/// Density-based clustering in η–φ. A point is core when at least min_pts
/// points (itself included) lie within eps. Points are scanned in ascending
/// index order, so a border point reachable from several clusters joins the
/// one created first. Returns one label per point; kUnclustered for noise.
inline std::vector<int> dbscan(std::span<const EtaPhi> points, const DbscanParams& p) {
  if (!(p.eps > 0.0)) throw DomainError("dbscan: eps must be positive");
  if (p.min_pts < 1) throw DomainError("dbscan: min_pts must be >= 1");
  for (const auto& q : points) {
    if (!std::isfinite(q.eta) || !std::isfinite(q.phi)) {
      throw DomainError("dbscan: non-finite coordinate");
    }
  }

  constexpr int kUnvisited = -2;
  const std::size_t n = points.size();
  const auto min_pts = static_cast<std::size_t>(p.min_pts);
  std::vector<int> label(n, kUnvisited);
  detail::EtaPhiGrid grid(points, p.eps);
  std::vector<std::size_t> nbrs, queue;
  int next_cluster = 0;

  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    grid.neighbors(i, nbrs);
    if (nbrs.size() < min_pts) {
      label[i] = kUnclustered;
      continue;
    }
    const int c = next_cluster++;
    label[i] = c;
    queue.assign(nbrs.begin(), nbrs.end());
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t j = queue[head];
      if (label[j] == kUnclustered) {
        label[j] = c;  // border point previously seen as noise
        continue;
      }
      if (label[j] != kUnvisited) continue;
      label[j] = c;
      grid.neighbors(j, nbrs);
      if (nbrs.size() >= min_pts) queue.insert(queue.end(), nbrs.begin(), nbrs.end());
    }
  }
  return label;
}

}  // namespace conftrack
