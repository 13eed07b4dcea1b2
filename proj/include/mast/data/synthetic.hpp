#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "mast/data/clip.hpp"
#include "mast/random.hpp"

namespace mast::data {

enum class Difficulty { easy, hard };

struct SyntheticOptions {
  std::size_t frames = 30;
  std::size_t height = 64;
  std::size_t width = 64;
  Difficulty difficulty = Difficulty::easy;
  double max_speed = 2.0;  // pixels per frame, at the polyp center
};

/// Per-frame analytic state of one polyp.
struct EllipseState {
  double cx = 0.0, cy = 0.0;
  double a = 0.0, b = 0.0;  // semi-axes
  double angle = 0.0;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
    return u * u + v * v <= 1.0;
  }
  /// Radial coordinate (0 at the center, 1 on the rim).
  double radius(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
    return std::sqrt(u * u + v * v);
  }
};

struct SyntheticClip {
  VideoClip clip;
  std::vector<std::vector<EllipseState>> trajectory;  // [frame][polyp]
};

namespace detail {

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Lattice value noise with smooth interpolation, periodic over the lattice.
class ValueNoise {
 public:
  ValueNoise(Rng& rng, std::size_t cells) : cells_(cells), lattice_(cells * cells) {
    for (auto& v : lattice_) v = rng.uniform();
  }
  double operator()(double u, double v) const {  // u, v in [0, 1)
    const double x = u * static_cast<double>(cells_), y = v * static_cast<double>(cells_);
    const auto x0 = static_cast<std::size_t>(std::floor(x)) % cells_, y0 = static_cast<std::size_t>(std::floor(y)) % cells_;
    const std::size_t x1 = (x0 + 1) % cells_, y1 = (y0 + 1) % cells_;
    const double fx = smoothstep(x - std::floor(x)), fy = smoothstep(y - std::floor(y));
    const double top = lattice_[y0 * cells_ + x0] * (1 - fx) + lattice_[y0 * cells_ + x1] * fx;
    const double bot = lattice_[y1 * cells_ + x0] * (1 - fx) + lattice_[y1 * cells_ + x1] * fx;
    return top * (1 - fy) + bot * fy;
  }

 private:
  std::size_t cells_;
  std::vector<double> lattice_;
};

inline double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace detail

/// Mucosa-like textured background with one or two moving, deforming
/// elliptical polyps. Deterministic in `seed`. Pixel values are multiples of
/// 1/255 so an 8-bit export is lossless.
inline SyntheticClip generate_synthetic_clip(std::uint64_t seed, const SyntheticOptions& opt, const std::string& id = "") {
  if (opt.height < 16 || opt.width < 16) throw DataError("synthetic clips need extents of at least 16 pixels");
  if (opt.frames == 0) throw DataError("synthetic clip needs at least one frame");
  if (!(opt.max_speed > 0.0)) throw DataError("max_speed must be positive");
  const Rng root(seed);
  Rng bg_rng = root.substream("background");
  Rng shape_rng = root.substream("polyps");
  Rng motion_rng = root.substream("motion");
  Rng noise_rng = root.substream("sensor");

  const double h = static_cast<double>(opt.height), w = static_cast<double>(opt.width);
  const double scale = std::min(h, w) / 64.0;

  detail::ValueNoise coarse(bg_rng, 4), fine(bg_rng, 11);
  const std::array<double, 3> tissue{bg_rng.uniform(0.72, 0.86), bg_rng.uniform(0.36, 0.48), bg_rng.uniform(0.30, 0.42)};
  const double vignette = bg_rng.uniform(0.25, 0.45);

  const std::size_t count = 1 + shape_rng.index(2);
  struct Polyp {
    EllipseState s;
    double vx, vy;
    double phase_a, phase_b, freq, spin;
    std::array<double, 3> color;
  };
  std::vector<Polyp> polyps;
  for (std::size_t k = 0; k < count; ++k) {
    Polyp p;
    p.s.a = shape_rng.uniform(5.0, 10.0) * scale;
    p.s.b = shape_rng.uniform(5.0, 10.0) * scale;
    p.s.angle = shape_rng.uniform(0.0, std::numbers::pi);
    const double margin = 1.15 * std::max(p.s.a, p.s.b) + 1.0;
    p.s.cx = shape_rng.uniform(margin, w - margin);
    p.s.cy = shape_rng.uniform(margin, h - margin);
    const double heading = shape_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double speed = shape_rng.uniform(0.3, 1.0) * opt.max_speed;
    p.vx = speed * std::cos(heading);
    p.vy = speed * std::sin(heading);
    p.phase_a = shape_rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.phase_b = shape_rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.freq = shape_rng.uniform(0.15, 0.35);
    p.spin = shape_rng.uniform(-0.05, 0.05);
    if (opt.difficulty == Difficulty::easy) {
      p.color = {shape_rng.uniform(0.88, 0.98), shape_rng.uniform(0.62, 0.78), shape_rng.uniform(0.45, 0.6)};
    } else {
      p.color = {tissue[0] + shape_rng.uniform(0.04, 0.08), tissue[1] + shape_rng.uniform(0.06, 0.12), tissue[2] + shape_rng.uniform(0.02, 0.06)};
    }
    polyps.push_back(p);
  }
  const double blend = opt.difficulty == Difficulty::easy ? 1.0 : 0.6;

  SyntheticClip out;
  out.clip.id = id;
  const std::size_t hw = opt.height * opt.width;
  for (std::size_t t = 0; t < opt.frames; ++t) {
    std::vector<EllipseState> states;
    for (auto& p : polyps) {
      EllipseState s = p.s;
      s.a = p.s.a * (1.0 + 0.1 * std::sin(p.freq * static_cast<double>(t) + p.phase_a));
      s.b = p.s.b * (1.0 + 0.1 * std::sin(p.freq * static_cast<double>(t) + p.phase_b));
      s.angle = p.s.angle + p.spin * static_cast<double>(t);
      states.push_back(s);
    }
    out.trajectory.push_back(states);

    std::vector<double> img(3 * hw), mask(hw, 0.0);
    const double drift_x = 0.004 * static_cast<double>(t), drift_y = 0.003 * static_cast<double>(t);
    for (std::size_t y = 0; y < opt.height; ++y)
      for (std::size_t x = 0; x < opt.width; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        const double u = px / w + drift_x, v = py / h + drift_y;
        const double n = 0.65 * coarse(u - std::floor(u), v - std::floor(v)) + 0.35 * fine(u - std::floor(u), v - std::floor(v));
        const double r2 = ((px / w - 0.5) * (px / w - 0.5) + (py / h - 0.5) * (py / h - 0.5)) * 2.0;
        const double shade = (0.7 + 0.45 * n) * (1.0 - vignette * r2);
        std::array<double, 3> c{tissue[0] * shade, tissue[1] * shade, tissue[2] * shade};
        bool inside = false;
        for (std::size_t k = 0; k < polyps.size(); ++k) {
          const auto& s = states[k];
          if (!s.contains(px, py)) continue;
          inside = true;
          const double r = s.radius(px, py);
          const double dome = 0.75 + 0.3 * std::sqrt(std::max(0.0, 1.0 - r * r));
          const double alpha = blend * (opt.difficulty == Difficulty::hard ? 1.0 - 0.5 * r * r : 1.0);
          for (int ch = 0; ch < 3; ++ch) c[ch] = (1.0 - alpha) * c[ch] + alpha * polyps[k].color[ch] * dome * (0.85 + 0.3 * n);
        }
        mask[y * opt.width + x] = inside ? 1.0 : 0.0;
        const double grain = opt.difficulty == Difficulty::hard ? 0.04 : 0.02;
        for (int ch = 0; ch < 3; ++ch) {
          img[ch * hw + y * opt.width + x] = detail::quantize(c[ch] + grain * (noise_rng.uniform() - 0.5));
        }
      }
    out.clip.frames.emplace_back(Shape{3, opt.height, opt.width}, std::move(img));
    out.clip.masks.emplace_back(Shape{1, opt.height, opt.width}, std::move(mask));

    // random-walk velocity, speed capped, reflected at the borders
    for (auto& p : polyps) {
      p.vx += motion_rng.normal() * 0.4 * opt.max_speed;
      p.vy += motion_rng.normal() * 0.4 * opt.max_speed;
      const double sp = std::hypot(p.vx, p.vy);
      if (sp > opt.max_speed) {
        p.vx *= opt.max_speed / sp;
        p.vy *= opt.max_speed / sp;
      }
      const double margin = 1.15 * std::max(p.s.a, p.s.b) + 1.0;
      auto reflect = [](double& pos, double& vel, double lo, double hi) {
        pos += vel;
        if (pos < lo) {
          pos = 2 * lo - pos;
          vel = -vel;
        } else if (pos > hi) {
          pos = 2 * hi - pos;
          vel = -vel;
        }
      };
      reflect(p.s.cx, p.vx, margin, w - margin);
      reflect(p.s.cy, p.vy, margin, h - margin);
    }
  }
  return out;
}

inline std::vector<VideoClip> generate_synthetic_dataset(std::uint64_t seed, std::size_t clips, const SyntheticOptions& opt,
                                                         const std::string& prefix = "clip") {
  std::vector<VideoClip> out;
  const Rng root(seed);
  for (std::size_t i = 0; i < clips; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%s%03zu", prefix.c_str(), i);
    const std::uint64_t clip_seed = root.substream(i).next_u64();
    auto c = generate_synthetic_clip(clip_seed, opt, name);
    if (opt.difficulty == Difficulty::hard || i % 4 != 3) {
      out.push_back(std::move(c.clip));
    } else {
      // every fourth clip of an easy set is rendered in the hard style
      SyntheticOptions hard = opt;
      hard.difficulty = Difficulty::hard;
      out.push_back(generate_synthetic_clip(clip_seed, hard, name).clip);
    }
  }
  return out;
}

}  // namespace mast::data
