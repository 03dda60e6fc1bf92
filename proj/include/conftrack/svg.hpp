#pragma once

// η–φ event display: one marker per hit, one outline per ellipse.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "conftrack/angles.hpp"
#include "conftrack/ellipse.hpp"
#include "conftrack/error.hpp"
#include "conftrack/event.hpp"

namespace conftrack {

struct SvgOptions {
  double plot_width = 720.0;  // px for the η span
  double margin = 60.0;
  double marker_radius = 2.5;
  double pad = 0.05;  // data units around the hits
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  return s == "-0.000" ? "0.000" : s;
}

inline const char* particle_color(std::int64_t pid) {
  static constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                             "#8c564b", "#e377c2", "#bcbd22", "#17becf", "#393b79"};
  const auto k = static_cast<std::uint64_t>(pid) * 0x9e3779b97f4a7c15ull;
  return kPalette[(k >> 32) % 10];
}

}  // namespace detail

/// SVG text of the event with η horizontal and φ vertical (increasing
/// upward), equal scale on both axes. Hits are colored by particle, noise in
/// gray. Output depends only on the inputs.
inline std::string render_event_svg(const Event& e, std::span<const Ellipse5> ellipses, const SvgOptions& opt = {}) {
  double eta_lo = -2.0, eta_hi = 2.0, phi_lo = 0.0, phi_hi = kTwoPi;
  if (!e.hits.empty()) {
    eta_lo = phi_lo = 1e300;
    eta_hi = phi_hi = -1e300;
    for (const auto& h : e.hits) {
      eta_lo = std::min(eta_lo, h.eta);
      eta_hi = std::max(eta_hi, h.eta);
      phi_lo = std::min(phi_lo, h.phi);
      phi_hi = std::max(phi_hi, h.phi);
    }
    for (const auto& el : ellipses) {
      eta_lo = std::min(eta_lo, el.eta_c - el.a);
      eta_hi = std::max(eta_hi, el.eta_c + el.a);
      phi_lo = std::min(phi_lo, el.phi_c - el.a);
      phi_hi = std::max(phi_hi, el.phi_c + el.a);
    }
    eta_lo -= opt.pad;
    eta_hi += opt.pad;
    phi_lo -= opt.pad;
    phi_hi += opt.pad;
  }
  const double scale = opt.plot_width / (eta_hi - eta_lo);
  const double plot_h = (phi_hi - phi_lo) * scale;
  const double W = opt.plot_width + 2.0 * opt.margin, H = plot_h + 2.0 * opt.margin;
  auto X = [&](double eta) { return opt.margin + (eta - eta_lo) * scale; };
  auto Y = [&](double phi) { return opt.margin + (phi_hi - phi) * scale; };
  using detail::fmt;

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W) + "\" height=\"" + fmt(H) + "\" viewBox=\"0 0 " +
       fmt(W) + " " + fmt(H) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fmt(W) + "\" height=\"" + fmt(H) + "\" fill=\"white\"/>\n";
  s += "<g id=\"axes\" stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
  s += "<rect x=\"" + fmt(opt.margin) + "\" y=\"" + fmt(opt.margin) + "\" width=\"" + fmt(opt.plot_width) +
       "\" height=\"" + fmt(plot_h) + "\"/>\n";
  s += "</g>\n<g id=\"labels\" font-family=\"sans-serif\" font-size=\"14\" fill=\"black\">\n";
  s += "<text x=\"" + fmt(opt.margin + opt.plot_width / 2.0) + "\" y=\"" + fmt(H - 15.0) +
       "\" text-anchor=\"middle\">η</text>\n";
  s += "<text x=\"15\" y=\"" + fmt(opt.margin + plot_h / 2.0) + "\" text-anchor=\"middle\">φ</text>\n";
  s += "<text x=\"" + fmt(opt.margin) + "\" y=\"" + fmt(H - opt.margin + 18.0) + "\" font-size=\"11\">" +
       fmt(eta_lo) + "</text>\n";
  s += "<text x=\"" + fmt(opt.margin + opt.plot_width) + "\" y=\"" + fmt(H - opt.margin + 18.0) +
       "\" font-size=\"11\" text-anchor=\"end\">" + fmt(eta_hi) + "</text>\n";
  s += "<text x=\"" + fmt(opt.margin - 5.0) + "\" y=\"" + fmt(H - opt.margin) +
       "\" font-size=\"11\" text-anchor=\"end\">" + fmt(phi_lo) + "</text>\n";
  s += "<text x=\"" + fmt(opt.margin - 5.0) + "\" y=\"" + fmt(opt.margin + 10.0) +
       "\" font-size=\"11\" text-anchor=\"end\">" + fmt(phi_hi) + "</text>\n";
  s += "</g>\n<g id=\"ellipses\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\">\n";
  for (const auto& el : ellipses) {
    const double cx = X(el.eta_c), cy = Y(el.phi_c);
    // θ is measured from +η toward +φ; φ grows upward on screen
    s += "<ellipse cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" rx=\"" + fmt(el.a * scale) + "\" ry=\"" +
         fmt(el.b * scale) + "\" transform=\"rotate(" + fmt(-el.theta * 180.0 / kPi) + " " + fmt(cx) + " " +
         fmt(cy) + ")\"/>\n";
  }
  s += "</g>\n<g id=\"hits\" stroke=\"none\">\n";
  for (const auto& h : e.hits) {
    s += "<circle cx=\"" + fmt(X(h.eta)) + "\" cy=\"" + fmt(Y(h.phi)) + "\" r=\"" + fmt(opt.marker_radius) +
         "\" fill=\"" + (h.is_noise() ? std::string("#999999") : std::string(detail::particle_color(h.particle_id))) +
         "\"/>\n";
  }
  s += "</g>\n</svg>\n";
  return s;
}

inline void write_event_svg(const std::string& path, const Event& e, std::span<const Ellipse5> ellipses,
                            const SvgOptions& opt = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << render_event_svg(e, ellipses, opt);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace conftrack
