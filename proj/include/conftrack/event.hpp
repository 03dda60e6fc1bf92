#pragma once

// Events: hits with truth links, per-particle truth tracks, the synthetic
// cylinder-detector generator and an invariant checker.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "conftrack/angles.hpp"
#include "conftrack/error.hpp"
#include "conftrack/kinematics.hpp"

namespace conftrack {

struct Hit {
  std::int64_t hit_id = 0;
  double x = 0.0, y = 0.0, z = 0.0;
  double r = 0.0;
  double eta = 0.0;
  double phi = 0.0;
  int layer = 0;
  int volume = 0;
  std::int64_t particle_id = 0;  // 0 = noise

  bool is_noise() const { return particle_id == 0; }
};

/// Builds a hit and fills the derived r, η, φ from the position.
inline Hit make_hit(std::int64_t hit_id, double x, double y, double z, int layer, int volume,
                    std::int64_t particle_id) {
  Hit h;
  h.hit_id = hit_id;
  h.x = x;
  h.y = y;
  h.z = z;
  h.r = std::hypot(x, y);
  h.eta = eta_of(x, y, z);
  h.phi = phi_of(x, y);
  h.layer = layer;
  h.volume = volume;
  h.particle_id = particle_id;
  return h;
}

struct TruthTrack {
  std::int64_t particle_id = 0;
  TrackParams params;
  CircleTrack circle;
  std::vector<std::int64_t> hit_ids;
};

struct Event {
  std::int64_t event_id = 0;
  std::vector<Hit> hits;
  std::vector<TruthTrack> tracks;
  double field_B = 2.0;
};

/// Idealized barrel: concentric cylinders around the beamline.
struct DetectorConfig {
  std::vector<double> layer_radii{0.032, 0.072, 0.116, 0.172};
  double z_halflength = 0.5;
  double field_B = 2.0;
};

struct GenConfig {
  int n_tracks = 10;
  std::pair<double, double> pt_range{2.0, 10.0};
  std::pair<double, double> eps_range{0.0, 5e-4};
  std::pair<double, double> eta_range{-1.5, 1.5};
  double noise_fraction = 0.1;  // noise / (noise + signal) hits
  double hit_smearing_sigma = 1e-5;
  std::uint64_t seed = 0;
};

/// Volume id stamped on synthetic hits (the TrackML pixel barrel).
inline constexpr int kSyntheticVolume = 8;

/// Largest |δ|/R² the generator accepts for the parabola approximation.
inline constexpr double kMaxDisplacementRatio = 0.01;

/// Rotation sense of a charged track in a field along +z: +1 counter-clockwise.
inline int rotation_sense(int charge) { return charge > 0 ? -1 : 1; }

/// Circle of radius R whose point of closest approach to the origin lies at
/// signed distance d0 along the left normal of the direction phi0.
inline CircleTrack circle_from_perigee(double R, double d0, double phi0, int charge) {
  const double nx = -std::sin(phi0), ny = std::cos(phi0);
  const double offset = d0 + rotation_sense(charge) * R;
  return {offset * nx, offset * ny, R, charge};
}

/// Circle through `vertex` with momentum direction phi0.
inline CircleTrack circle_through(PointXY vertex, double R, double phi0, int charge) {
  const double nx = -std::sin(phi0), ny = std::cos(phi0);
  const int sense = rotation_sense(charge);
  return {vertex.x + sense * R * nx, vertex.y + sense * R * ny, R, charge};
}

/// Distance of closest approach of the circle to the beamline.
inline double impact_parameter(const CircleTrack& c) {
  return std::abs(std::hypot(c.a, c.b) - c.R);
}

/// First crossing of the track with the cylinder of radius `layer_radius`,
/// travelling from the point of closest approach in the direction phi0. The
/// z coordinate follows the straight-line relation z = s·sinh(η) with s the
/// transverse arc length from the point of closest approach.
inline std::optional<std::array<double, 3>> intersect_helix_layer(const CircleTrack& c,
                                                                  double phi0, double eta,
                                                                  double layer_radius) {
  if (!(layer_radius > 0.0)) throw DomainError("intersect_helix_layer: radius must be positive");
  const double d = std::hypot(c.a, c.b);
  if (!(d > 0.0)) return std::nullopt;
  if (layer_radius > d + c.R || layer_radius < std::abs(d - c.R)) return std::nullopt;

  const double ux = c.a / d, uy = c.b / d;
  const double l = (d * d + layer_radius * layer_radius - c.R * c.R) / (2.0 * d);
  const double h = std::sqrt(std::max(0.0, layer_radius * layer_radius - l * l));
  const std::array<PointXY, 2> cand{PointXY{l * ux - h * uy, l * uy + h * ux},
                                    PointXY{l * ux + h * uy, l * uy - h * ux}};

  const PointXY pca{c.a - c.R * ux, c.b - c.R * uy};
  const double cross = std::cos(phi0) * (c.b - pca.y) - std::sin(phi0) * (c.a - pca.x);
  const double sense = cross >= 0.0 ? 1.0 : -1.0;
  const double start = std::atan2(pca.y - c.b, pca.x - c.a);

  double best = INFINITY;
  PointXY hit{};
  for (const auto& p : cand) {
    const double turn = wrap_phi(sense * (std::atan2(p.y - c.b, p.x - c.a) - start));
    if (turn < best) {
      best = turn;
      hit = p;
    }
  }
  const double s = c.R * best;
  return std::array<double, 3>{hit.x, hit.y, s * std::sinh(eta)};
}

inline void validate(const DetectorConfig& det) {
  if (det.layer_radii.empty()) throw ConfigError("detector: no layers");
  for (std::size_t i = 0; i < det.layer_radii.size(); ++i) {
    if (!(det.layer_radii[i] > 0.0)) throw ConfigError("detector: layer radii must be positive");
    if (i > 0 && !(det.layer_radii[i] > det.layer_radii[i - 1])) {
      throw ConfigError("detector: layer radii must be strictly increasing");
    }
  }
  if (!(det.z_halflength > 0.0)) throw ConfigError("detector: z_halflength must be positive");
  if (!(det.field_B > 0.0)) throw ConfigError("detector: field_B must be positive");
}

inline void validate(const GenConfig& gen, const DetectorConfig& det) {
  if (gen.n_tracks < 0) throw ConfigError("generator: n_tracks must be >= 0");
  auto ordered = [](const std::pair<double, double>& r) { return r.first <= r.second; };
  if (!ordered(gen.pt_range) || !(gen.pt_range.first > 0.0)) {
    throw ConfigError("generator: pt_range must be ordered and positive");
  }
  if (!ordered(gen.eps_range) || gen.eps_range.first < 0.0) {
    throw ConfigError("generator: eps_range must be ordered and non-negative");
  }
  if (!ordered(gen.eta_range)) throw ConfigError("generator: eta_range must be ordered");
  if (!(gen.noise_fraction >= 0.0 && gen.noise_fraction < 1.0)) {
    throw ConfigError("generator: noise_fraction must lie in [0, 1)");
  }
  if (!(gen.hit_smearing_sigma >= 0.0)) throw ConfigError("generator: negative smearing");
  const double r_min = radius_from_pt(det.field_B, gen.pt_range.first);
  const double e = gen.eps_range.second;
  const double ratio = (2.0 * r_min * e + e * e) / (r_min * r_min);
  if (ratio > kMaxDisplacementRatio) {
    throw ConfigError("generator: eps_range/pt_range allow |delta|/R^2 = " + std::to_string(ratio) +
                      " > " + std::to_string(kMaxDisplacementRatio));
  }
}

namespace detail {
inline std::mt19937_64 event_rng(std::uint64_t seed, std::int64_t event_id) {
  const auto id = static_cast<std::uint64_t>(event_id);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32)};
  return std::mt19937_64(seq);
}
}  // namespace detail

/// Deterministic synthetic event: tracks leave one hit per reachable layer,
/// noise hits are uniform in (φ, η, layer).
inline Event generate_event(const DetectorConfig& det, const GenConfig& gen,
                            std::int64_t event_id = 0) {
  validate(det);
  validate(gen, det);
  auto rng = detail::event_rng(gen.seed, event_id);
  auto uni = [&rng](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  std::normal_distribution<double> smear(0.0, 1.0);

  Event ev;
  ev.event_id = event_id;
  ev.field_B = det.field_B;
  std::int64_t next_id = 1;

  for (int k = 0; k < gen.n_tracks; ++k) {
    const std::int64_t pid = k + 1;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw ConfigError("generator: tracks never reach the detector");
      const double pT = uni(gen.pt_range.first, gen.pt_range.second);
      const double R = radius_from_pt(det.field_B, pT);
      const double eps = uni(gen.eps_range.first, gen.eps_range.second);
      const double d0 = (rng() & 1) ? eps : -eps;
      const double phi0 = uni(0.0, kTwoPi);
      const double eta = uni(gen.eta_range.first, gen.eta_range.second);
      const int charge = (rng() & 1) ? 1 : -1;
      const CircleTrack circle = circle_from_perigee(R, d0, phi0, charge);

      std::vector<Hit> hits;
      for (std::size_t l = 0; l < det.layer_radii.size(); ++l) {
        const auto pos = intersect_helix_layer(circle, phi0, eta, det.layer_radii[l]);
        if (!pos || std::abs((*pos)[2]) > det.z_halflength) continue;
        double x = (*pos)[0], y = (*pos)[1], z = (*pos)[2];
        if (gen.hit_smearing_sigma > 0.0) {
          x += gen.hit_smearing_sigma * smear(rng);
          y += gen.hit_smearing_sigma * smear(rng);
          z += gen.hit_smearing_sigma * smear(rng);
        }
        hits.push_back(make_hit(0, x, y, z, static_cast<int>(l), kSyntheticVolume, pid));
      }
      if (hits.empty()) continue;

      TruthTrack track;
      track.particle_id = pid;
      track.circle = circle;
      track.params = {pt_from_radius(det.field_B, R), impact_parameter(circle), circle.a, circle.b};
      for (auto& h : hits) {
        h.hit_id = next_id++;
        track.hit_ids.push_back(h.hit_id);
        ev.hits.push_back(h);
      }
      ev.tracks.push_back(std::move(track));
      break;
    }
  }

  const auto n_signal = static_cast<double>(ev.hits.size());
  const auto n_noise = static_cast<std::int64_t>(
      std::llround(n_signal * gen.noise_fraction / (1.0 - gen.noise_fraction)));
  std::uniform_int_distribution<int> pick_layer(0, static_cast<int>(det.layer_radii.size()) - 1);
  for (std::int64_t i = 0; i < n_noise; ++i) {
    const int layer = pick_layer(rng);
    const double phi = uni(0.0, kTwoPi);
    const double eta = uni(gen.eta_range.first, gen.eta_range.second);
    const double r = det.layer_radii[static_cast<std::size_t>(layer)];
    ev.hits.push_back(make_hit(next_id++, r * std::cos(phi), r * std::sin(phi), r * std::sinh(eta),
                               layer, kSyntheticVolume, 0));
  }
  return ev;
}

/// Checks the Event invariants; throws ConsistencyError naming the first violation.
inline void validate_event(const Event& e) {
  std::unordered_map<std::int64_t, const Hit*> by_id;
  for (const auto& h : e.hits) {
    if (!by_id.emplace(h.hit_id, &h).second) {
      throw ConsistencyError("duplicate hit_id " + std::to_string(h.hit_id));
    }
    const double r = std::hypot(h.x, h.y);
    if (std::abs(h.r - r) > 1e-12 * std::max(1.0, r)) {
      throw ConsistencyError("hit " + std::to_string(h.hit_id) + ": cached r inconsistent");
    }
    if (!(r > 0.0) || std::abs(h.eta - std::asinh(h.z / r)) > 1e-9 ||
        std::abs(delta_phi(h.phi, std::atan2(h.y, h.x))) > 1e-9 || h.phi < 0.0 || h.phi >= kTwoPi) {
      throw ConsistencyError("hit " + std::to_string(h.hit_id) + ": eta/phi inconsistent");
    }
    if (h.layer < 0) throw ConsistencyError("hit " + std::to_string(h.hit_id) + ": negative layer");
  }
  std::unordered_set<std::int64_t> referenced;
  std::unordered_set<std::int64_t> pids;
  for (const auto& t : e.tracks) {
    if (t.particle_id <= 0) throw ConsistencyError("track with non-positive particle_id");
    if (!pids.insert(t.particle_id).second) {
      throw ConsistencyError("duplicate track " + std::to_string(t.particle_id));
    }
    if (t.hit_ids.empty()) {
      throw ConsistencyError("track " + std::to_string(t.particle_id) + " has no hits");
    }
    for (auto id : t.hit_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw ConsistencyError("track " + std::to_string(t.particle_id) + " references missing hit " +
                               std::to_string(id));
      }
      if (it->second->particle_id != t.particle_id) {
        throw ConsistencyError("hit " + std::to_string(id) + " listed under the wrong particle");
      }
      if (!referenced.insert(id).second) {
        throw ConsistencyError("hit " + std::to_string(id) + " referenced twice");
      }
    }
  }
  for (const auto& h : e.hits) {
    if (!h.is_noise() && !referenced.count(h.hit_id)) {
      throw ConsistencyError("hit " + std::to_string(h.hit_id) + " not referenced by its track");
    }
  }
}

}  // namespace conftrack
