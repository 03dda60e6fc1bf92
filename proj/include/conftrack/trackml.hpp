#pragma once

// TrackML CSV ingestion (hits / truth / particles) and the volume + p_T
// selection. TrackML lengths are millimeters; everything leaving this header is
// in meters.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "conftrack/error.hpp"
#include "conftrack/event.hpp"
#include "conftrack/kinematics.hpp"

namespace conftrack {

inline constexpr std::string_view kHitsHeader = "hit_id,x,y,z,volume_id,layer_id,module_id";
inline constexpr std::string_view kTruthHeader = "hit_id,particle_id,tx,ty,tz,tpx,tpy,tpz,weight";
inline constexpr std::string_view kParticlesHeader = "particle_id,vx,vy,vz,px,py,pz,q,nhits";

/// TrackML pixel volumes (endcap, barrel, endcap).
inline const std::set<int> kPixelVolumes{7, 8, 9};

inline constexpr double kMillimeter = 1e-3;

namespace detail {

class CsvReader {
 public:
  CsvReader(const std::string& path, std::string_view header) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open " + path);
    std::string line;
    if (!next_line(line)) throw ParseError(path + ": missing header", 1);
    if (line != header) {
      throw ParseError(path + ": expected header \"" + std::string(header) + "\"", 1);
    }
  }

  /// Splits the next data row into exactly `n` fields. Returns false at EOF.
  bool row(std::vector<std::string_view>& fields, std::size_t n) {
    while (next_line(buffer_)) {
      if (buffer_.empty()) continue;
      fields.clear();
      std::string_view rest(buffer_);
      while (true) {
        const auto pos = rest.find(',');
        fields.push_back(rest.substr(0, pos));
        if (pos == std::string_view::npos) break;
        rest.remove_prefix(pos + 1);
      }
      if (fields.size() != n) {
        fail("expected " + std::to_string(n) + " fields, got " + std::to_string(fields.size()));
      }
      return true;
    }
    return false;
  }

  template <typename T>
  T parse(std::string_view field, const char* name) const {
    T value{};
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || first == last) {
      fail(std::string("bad ") + name + " value \"" + std::string(field) + "\"");
    }
    return value;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_ + ": " + what, line_); }
  std::size_t line() const { return line_; }

 private:
  bool next_line(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::string path_;
  std::ifstream in_;
  std::string buffer_;
  std::size_t line_ = 0;
};

}  // namespace detail

/// Joins the three TrackML files of one event. Truth circles are built from the
/// production vertex, momentum direction and charge in the field `field_B`.
inline Event read_trackml_event(const std::string& hits_path, const std::string& truth_path,
                                const std::string& particles_path, std::int64_t event_id = 0,
                                double field_B = 2.0) {
  Event ev;
  ev.event_id = event_id;
  ev.field_B = field_B;
  std::vector<std::string_view> f;

  {
    detail::CsvReader csv(hits_path, kHitsHeader);
    while (csv.row(f, 7)) {
      const auto id = csv.parse<std::int64_t>(f[0], "hit_id");
      const double x = csv.parse<double>(f[1], "x") * kMillimeter;
      const double y = csv.parse<double>(f[2], "y") * kMillimeter;
      const double z = csv.parse<double>(f[3], "z") * kMillimeter;
      const int volume = csv.parse<int>(f[4], "volume_id");
      const int layer = csv.parse<int>(f[5], "layer_id");
      csv.parse<std::int64_t>(f[6], "module_id");
      if (!(std::hypot(x, y) > 0.0)) csv.fail("hit on the beamline");
      ev.hits.push_back(make_hit(id, x, y, z, layer, volume, 0));
    }
  }

  std::unordered_map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < ev.hits.size(); ++i) {
    if (!index.emplace(ev.hits[i].hit_id, i).second) {
      throw ConsistencyError(hits_path + ": duplicate hit_id " + std::to_string(ev.hits[i].hit_id));
    }
  }

  std::unordered_set<std::int64_t> seen;
  {
    detail::CsvReader csv(truth_path, kTruthHeader);
    while (csv.row(f, 9)) {
      const auto id = csv.parse<std::int64_t>(f[0], "hit_id");
      const auto pid = csv.parse<std::int64_t>(f[1], "particle_id");
      for (int k = 2; k < 9; ++k) csv.parse<double>(f[static_cast<std::size_t>(k)], "truth");
      auto it = index.find(id);
      if (it == index.end()) {
        throw ConsistencyError(truth_path + ": hit_id " + std::to_string(id) +
                               " (line " + std::to_string(csv.line()) + ") not present in hits");
      }
      if (!seen.insert(id).second) csv.fail("duplicate hit_id " + std::to_string(id));
      ev.hits[it->second].particle_id = pid;
    }
  }
  for (const auto& h : ev.hits) {
    if (!seen.count(h.hit_id)) {
      throw ConsistencyError(hits_path + ": hit_id " + std::to_string(h.hit_id) + " has no truth row");
    }
  }

  struct Particle {
    double vx, vy, px, py;
    int q;
    std::size_t line;
  };
  std::unordered_map<std::int64_t, Particle> particles;
  {
    detail::CsvReader csv(particles_path, kParticlesHeader);
    while (csv.row(f, 9)) {
      const auto pid = csv.parse<std::int64_t>(f[0], "particle_id");
      Particle p{};
      p.vx = csv.parse<double>(f[1], "vx") * kMillimeter;
      p.vy = csv.parse<double>(f[2], "vy") * kMillimeter;
      csv.parse<double>(f[3], "vz");
      p.px = csv.parse<double>(f[4], "px");
      p.py = csv.parse<double>(f[5], "py");
      csv.parse<double>(f[6], "pz");
      p.q = csv.parse<int>(f[7], "q");
      csv.parse<int>(f[8], "nhits");
      p.line = csv.line();
      particles[pid] = p;
    }
  }

  std::map<std::int64_t, std::vector<std::int64_t>> members;
  for (const auto& h : ev.hits) {
    if (!h.is_noise()) members[h.particle_id].push_back(h.hit_id);
  }
  for (auto& [pid, ids] : members) {
    auto it = particles.find(pid);
    if (it == particles.end()) {
      throw ConsistencyError(particles_path + ": particle " + std::to_string(pid) + " missing");
    }
    const Particle& p = it->second;
    TruthTrack t;
    t.particle_id = pid;
    t.hit_ids = std::move(ids);
    t.params.pT = std::hypot(p.px, p.py);
    if (!(t.params.pT > 0.0) || p.q == 0) {
      throw ParseError(particles_path + ": particle " + std::to_string(pid) +
                           " needs nonzero charge and transverse momentum",
                       p.line);
    }
    const double R = radius_from_pt(field_B, t.params.pT);
    t.circle = circle_through({p.vx, p.vy}, R, std::atan2(p.py, p.px), p.q > 0 ? 1 : -1);
    t.params.epsT = impact_parameter(t.circle);
    t.params.a = t.circle.a;
    t.params.b = t.circle.b;
    ev.tracks.push_back(std::move(t));
  }
  return ev;
}

/// Keeps hits in `volumes` (all volumes when unset) whose particle has
/// p_T >= pt_min; noise hits are only filtered by volume. Tracks left without
/// hits are dropped.
inline Event apply_selection(const Event& e, double pt_min,
                             const std::optional<std::set<int>>& volumes = std::nullopt) {
  std::unordered_map<std::int64_t, double> pt;
  for (const auto& t : e.tracks) pt[t.particle_id] = t.params.pT;

  Event out;
  out.event_id = e.event_id;
  out.field_B = e.field_B;
  std::unordered_set<std::int64_t> kept;
  for (const auto& h : e.hits) {
    if (volumes && !volumes->count(h.volume)) continue;
    if (!h.is_noise()) {
      auto it = pt.find(h.particle_id);
      if (it == pt.end() || it->second < pt_min) continue;
    }
    kept.insert(h.hit_id);
    out.hits.push_back(h);
  }
  for (const auto& t : e.tracks) {
    TruthTrack copy = t;
    copy.hit_ids.clear();
    for (auto id : t.hit_ids) {
      if (kept.count(id)) copy.hit_ids.push_back(id);
    }
    if (!copy.hit_ids.empty()) out.tracks.push_back(std::move(copy));
  }
  return out;
}

}  // namespace conftrack
