#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mast/tensor.hpp"

namespace mast::metrics {

inline constexpr double kEps = std::numeric_limits<double>::epsilon();
inline constexpr std::size_t kThresholds = 256;

/// Row-major h x w map; predictions in [0, 1], ground truth in {0, 1}.
struct Map {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> v;

  Map() = default;
  Map(std::size_t h_, std::size_t w_, std::vector<double> values) : h(h_), w(w_), v(std::move(values)) {
    if (h == 0 || w == 0 || v.size() != h * w) throw DimensionError("map buffer does not match " + std::to_string(h) + "x" + std::to_string(w));
  }
  /// Any tensor whose trailing two extents are h x w and the rest are 1.
  static Map from_tensor(const Tensor& t) {
    if (t.rank() < 2 || t.numel() != t.dim(t.rank() - 2) * t.dim(t.rank() - 1)) {
      throw DimensionError("expected a single-plane map, got " + shape_str(t.shape()));
    }
    return Map(t.dim(t.rank() - 2), t.dim(t.rank() - 1), t.values());
  }
  std::size_t size() const { return v.size(); }
  double operator()(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

inline void require_same(const Map& a, const Map& b, const char* what) {
  if (a.h != b.h || a.w != b.w) {
    throw DimensionError(std::string(what) + ": maps are " + std::to_string(a.h) + "x" + std::to_string(a.w) + " and " +
                         std::to_string(b.h) + "x" + std::to_string(b.w));
  }
}

/// pred > threshold -> 1, else 0.
inline Map binarize(const Map& pred, double threshold) {
  Map out = pred;
  for (auto& x : out.v) x = x > threshold ? 1.0 : 0.0;
  return out;
}

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t predicted() const { return tp + fp; }
  std::size_t positives() const { return tp + fn; }
};

/// Confusion counts of a binary prediction against a binary ground truth.
inline Counts count(const Map& pred_bin, const Map& gt) {
  require_same(pred_bin, gt, "count");
  Counts c;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool p = pred_bin.v[i] > 0.5, g = gt.v[i] > 0.5;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// 2|P & G| / (|P| + |G|); 1 when both are empty.
inline double dice(const Map& pred_bin, const Map& gt) {
  const auto c = count(pred_bin, gt);
  const std::size_t denom = c.predicted() + c.positives();
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

/// |P & G| / |G|; no value for an empty ground truth.
inline std::optional<double> sensitivity(const Map& pred_bin, const Map& gt) {
  const auto c = count(pred_bin, gt);
  if (c.positives() == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.positives());
}

inline std::optional<double> recall(const Map& pred_bin, const Map& gt) { return sensitivity(pred_bin, gt); }

/// |P & G| / |P|; no value for an empty prediction.
inline std::optional<double> precision(const Map& pred_bin, const Map& gt) {
  const auto c = count(pred_bin, gt);
  if (c.predicted() == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.predicted());
}

inline double mean(const Map& m) {
  double s = 0.0;
  for (double x : m.v) s += x;
  return s / static_cast<double>(m.size());
}

/// min(2 mean(pred), 1)
inline double adaptive_threshold(const Map& pred) { return std::min(2.0 * mean(pred), 1.0); }

/// (1 + b2) P R / (b2 P + R) of a binary prediction; 1 when both maps are
/// empty, 0 when nothing is predicted correctly.
inline double f_measure(const Map& pred_bin, const Map& gt, double beta_sq) {
  const auto c = count(pred_bin, gt);
  if (c.predicted() == 0 && c.positives() == 0) return 1.0;
  if (c.tp == 0) return 0.0;
  const double p = static_cast<double>(c.tp) / static_cast<double>(c.predicted());
  const double r = static_cast<double>(c.tp) / static_cast<double>(c.positives());
  return (1.0 + beta_sq) * p * r / (beta_sq * p + r);
}

/// F-measure after binarizing at the adaptive threshold.
inline double f_measure_mean(const Map& pred, const Map& gt, double beta_sq = 0.3) {
  require_same(pred, gt, "f_measure_mean");
  return f_measure(binarize(pred, adaptive_threshold(pred)), gt, beta_sq);
}

namespace detail {

// 7x7 Gaussian, sigma 5, normalized; taps below eps * max are dropped.
inline std::array<double, 49> gaussian7(double sigma) {
  std::array<double, 49> k{};
  double mx = 0.0;
  for (int y = -3; y <= 3; ++y)
    for (int x = -3; x <= 3; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      k[(y + 3) * 7 + (x + 3)] = v;
      mx = std::max(mx, v);
    }
  double s = 0.0;
  for (auto& v : k) {
    if (v < kEps * mx) v = 0.0;
    s += v;
  }
  for (auto& v : k) v /= s;
  return k;
}

}  // namespace detail

/// Weighted F-measure. Errors on background pixels are replaced by the error
/// of their nearest foreground pixel (ties: lowest raster index), smoothed by
/// a 7x7 Gaussian (sigma 5, zero padding), capped on the foreground by the
/// raw error and weighted on the background by 2 - exp(ln(0.5) / 5 * dist).
/// No value for an empty ground truth.
inline std::optional<double> f_measure_weighted(const Map& pred, const Map& gt, double beta_sq = 1.0) {
  require_same(pred, gt, "f_measure_weighted");
  const std::size_t h = gt.h, w = gt.w, n = gt.size();
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < n; ++i)
    if (gt.v[i] > 0.5) fg.push_back(i);
  if (fg.empty()) return std::nullopt;

  std::vector<double> err(n), et(n), dist(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) err[i] = std::abs(pred.v[i] - gt.v[i]);
  for (std::size_t i = 0; i < n; ++i) {
    if (gt.v[i] > 0.5) {
      et[i] = err[i];
      continue;
    }
    const long y = static_cast<long>(i / w), x = static_cast<long>(i % w);
    long best_d2 = std::numeric_limits<long>::max();
    std::size_t best = 0;
    for (std::size_t j : fg) {
      const long dy = static_cast<long>(j / w) - y, dx = static_cast<long>(j % w) - x;
      const long d2 = dy * dy + dx * dx;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = j;
      }
    }
    et[i] = err[best];
    dist[i] = std::sqrt(static_cast<double>(best_d2));
  }

  static const auto kernel = detail::gaussian7(5.0);
  std::vector<double> ea(n, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int ky = -3; ky <= 3; ++ky)
        for (int kx = -3; kx <= 3; ++kx) {
          const long sy = static_cast<long>(y) + ky, sx = static_cast<long>(x) + kx;
          if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
          s += kernel[(3 - ky) * 7 + (3 - kx)] * et[sy * w + sx];
        }
      ea[y * w + x] = s;
    }

  double tpw = static_cast<double>(fg.size()), fpw = 0.0, ew_fg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool g = gt.v[i] > 0.5;
    const double min_e = g && ea[i] < err[i] ? ea[i] : err[i];
    const double b = g ? 1.0 : 2.0 - std::exp(std::log(0.5) / 5.0 * dist[i]);
    const double ew = min_e * b;
    if (g) ew_fg += ew;
    else fpw += ew;
  }
  tpw -= ew_fg;
  const double r = 1.0 - ew_fg / static_cast<double>(fg.size());
  const double p = tpw / (tpw + fpw + kEps);
  const double q = (1.0 + beta_sq) * r * p / (r + beta_sq * p + kEps);
  return std::clamp(q, 0.0, 1.0);
}

namespace detail {

struct Block {
  std::vector<double> pred, gt;
};

inline double block_ssim(const Block& b) {
  const std::size_t n = b.pred.size();
  if (n == 0) return 0.0;
  double x = 0.0, y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x += b.pred[i];
    y += b.gt[i];
  }
  x /= static_cast<double>(n);
  y /= static_cast<double>(n);
  double sx = 0.0, sy = 0.0, sxy = 0.0;
  if (n > 1) {
    for (std::size_t i = 0; i < n; ++i) {
      sx += (b.pred[i] - x) * (b.pred[i] - x);
      sy += (b.gt[i] - y) * (b.gt[i] - y);
      sxy += (b.pred[i] - x) * (b.gt[i] - y);
    }
    const double d = static_cast<double>(n - 1);
    sx /= d;
    sy /= d;
    sxy /= d;
  }
  const double alpha = 4.0 * x * y * sxy;
  const double beta = (x * x + y * y) * (sx + sy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

// 2 mu / (mu^2 + 1 + sigma) over the selected pixels, sigma with ddof 1.
inline double s_object(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  double mu = 0.0;
  for (double v : values) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mu) * (v - mu);
  const double sigma = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
  return 2.0 * mu / (mu * mu + 1.0 + sigma + kEps);
}

}  // namespace detail

inline double s_object_term(const Map& pred, const Map& gt) {
  std::vector<double> fg, bg;
  double u = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.v[i] > 0.5) {
      fg.push_back(pred.v[i]);
      u += 1.0;
    } else {
      bg.push_back(1.0 - pred.v[i]);
    }
  }
  u /= static_cast<double>(gt.size());
  return u * detail::s_object(fg) + (1.0 - u) * detail::s_object(bg);
}

/// Ground-truth centroid as 1-based split coordinates (x, y), rounded half
/// to even; the image center when the map is empty.
inline std::pair<std::size_t, std::size_t> centroid_split(const Map& gt) {
  double sy = 0.0, sx = 0.0, cnt = 0.0;
  for (std::size_t y = 0; y < gt.h; ++y)
    for (std::size_t x = 0; x < gt.w; ++x)
      if (gt(y, x) > 0.5) {
        sy += static_cast<double>(y);
        sx += static_cast<double>(x);
        cnt += 1.0;
      }
  if (cnt == 0.0) {
    return {static_cast<std::size_t>(std::nearbyint(gt.w / 2.0)) + 1, static_cast<std::size_t>(std::nearbyint(gt.h / 2.0)) + 1};
  }
  return {static_cast<std::size_t>(std::nearbyint(sx / cnt)) + 1, static_cast<std::size_t>(std::nearbyint(sy / cnt)) + 1};
}

inline double s_region_term(const Map& pred, const Map& gt) {
  auto [cx, cy] = centroid_split(gt);
  cx = std::min(cx, gt.w);
  cy = std::min(cy, gt.h);
  std::array<detail::Block, 4> blocks;  // LT, RT, LB, RB
  for (std::size_t y = 0; y < gt.h; ++y)
    for (std::size_t x = 0; x < gt.w; ++x) {
      auto& b = blocks[(y < cy ? 0 : 2) + (x < cx ? 0 : 1)];
      b.pred.push_back(pred(y, x));
      b.gt.push_back(gt(y, x));
    }
  const double area = static_cast<double>(gt.size());
  const double w1 = static_cast<double>(cx * cy) / area;
  const double w2 = static_cast<double>(cy * (gt.w - cx)) / area;
  const double w3 = static_cast<double>((gt.h - cy) * cx) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * detail::block_ssim(blocks[0]) + w2 * detail::block_ssim(blocks[1]) + w3 * detail::block_ssim(blocks[2]) +
         w4 * detail::block_ssim(blocks[3]);
}

/// Structure measure alpha * S_object + (1 - alpha) * S_region, floored at 0.
inline double s_measure(const Map& pred, const Map& gt, double alpha = 0.5) {
  require_same(pred, gt, "s_measure");
  const double y = mean(gt);
  if (y == 0.0) return 1.0 - mean(pred);
  if (y == 1.0) return mean(pred);
  const double s = alpha * s_object_term(pred, gt) + (1.0 - alpha) * s_region_term(pred, gt);
  return std::max(0.0, s);
}

/// Enhanced alignment of a binary prediction, averaged over the h * w pixels.
inline double e_measure_binary(const Map& pred_bin, const Map& gt) {
  const auto c = count(pred_bin, gt);
  const double n = static_cast<double>(gt.size());
  const double pred_fg = static_cast<double>(c.predicted());
  if (c.positives() == 0) return (n - pred_fg) / n;
  if (c.positives() == gt.size()) return pred_fg / n;
  const double mp = pred_fg / n, mg = static_cast<double>(c.positives()) / n;
  // (pred value, gt value, pixel count) for the four joint cases
  const std::array<std::array<double, 3>, 4> parts{{{1.0 - mp, 1.0 - mg, static_cast<double>(c.tp)},
                                                    {1.0 - mp, -mg, static_cast<double>(c.fp)},
                                                    {-mp, 1.0 - mg, static_cast<double>(c.fn)},
                                                    {-mp, -mg, static_cast<double>(c.tn)}}};
  double sum = 0.0;
  for (const auto& [a, b, k] : parts) {
    if (k == 0.0) continue;
    const double xi = 2.0 * a * b / (a * a + b * b + kEps);
    sum += (1.0 + xi) * (1.0 + xi) / 4.0 * k;
  }
  return sum / n;
}

inline double threshold_value(std::size_t t) { return static_cast<double>(t) / 255.0; }

/// Mean of the enhanced-alignment measure over thresholds 0/255 .. 255/255.
inline double e_measure_mean(const Map& pred, const Map& gt) {
  require_same(pred, gt, "e_measure_mean");
  double s = 0.0;
  for (std::size_t t = 0; t < kThresholds; ++t) s += e_measure_binary(binarize(pred, threshold_value(t)), gt);
  return s / static_cast<double>(kThresholds);
}

/// Threshold sweep. Precision is 1 when nothing is predicted and the ground
/// truth is empty, 0 when nothing is predicted otherwise; recall is 1 for an
/// empty ground truth.
struct Curves {
  std::array<double, kThresholds> precision{};
  std::array<double, kThresholds> recall{};
  std::array<double, kThresholds> f{};
  std::array<double, kThresholds> e{};
};

inline Curves curve(const Map& pred, const Map& gt, double beta_sq = 0.3) {
  require_same(pred, gt, "curve");
  Curves out;
  for (std::size_t t = 0; t < kThresholds; ++t) {
    const auto bin = binarize(pred, threshold_value(t));
    const auto c = count(bin, gt);
    const double p = c.predicted() == 0 ? (c.positives() == 0 ? 1.0 : 0.0)
                                        : static_cast<double>(c.tp) / static_cast<double>(c.predicted());
    const double r = c.positives() == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.positives());
    out.precision[t] = p;
    out.recall[t] = r;
    out.f[t] = p + r == 0.0 ? 0.0 : (1.0 + beta_sq) * p * r / (beta_sq * p + r);
    out.e[t] = e_measure_binary(bin, gt);
  }
  return out;
}

/// Pointwise mean of per-pair curves.
inline Curves curves(const std::vector<Map>& preds, const std::vector<Map>& gts, double beta_sq = 0.3) {
  if (preds.size() != gts.size()) throw DimensionError("curves: prediction and ground-truth counts differ");
  Curves acc;
  if (preds.empty()) return acc;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto c = curve(preds[i], gts[i], beta_sq);
    for (std::size_t t = 0; t < kThresholds; ++t) {
      acc.precision[t] += c.precision[t];
      acc.recall[t] += c.recall[t];
      acc.f[t] += c.f[t];
      acc.e[t] += c.e[t];
    }
  }
  const double k = static_cast<double>(preds.size());
  for (std::size_t t = 0; t < kThresholds; ++t) {
    acc.precision[t] /= k;
    acc.recall[t] /= k;
    acc.f[t] /= k;
    acc.e[t] /= k;
  }
  return acc;
}

inline void write_curves_csv(std::ostream& os, const Curves& c) {
  os.precision(17);
  os << "threshold,precision,recall,f,e\n";
  for (std::size_t t = 0; t < kThresholds; ++t) {
    os << t << ',' << c.precision[t] << ',' << c.recall[t] << ',' << c.f[t] << ',' << c.e[t] << '\n';
  }
}

struct MetricOptions {
  double dice_threshold = 0.5;
  bool dice_adaptive = false;  // binarize Dice/Sen. at the adaptive threshold instead
  double beta_sq_mean = 0.3;
  double beta_sq_weighted = 1.0;
  double alpha = 0.5;
};

struct FrameMetrics {
  std::string clip;
  std::size_t frame = 0;
  double dice = 0.0;
  double f_mean = 0.0;
  std::optional<double> f_weighted;
  std::optional<double> sensitivity;
  double s_measure = 0.0;
  double e_mean = 0.0;
};

inline FrameMetrics evaluate_frame(const Map& pred, const Map& gt, const MetricOptions& opt = {}) {
  require_same(pred, gt, "evaluate_frame");
  const auto bin = binarize(pred, opt.dice_adaptive ? adaptive_threshold(pred) : opt.dice_threshold);
  FrameMetrics m;
  m.dice = dice(bin, gt);
  m.f_mean = f_measure_mean(pred, gt, opt.beta_sq_mean);
  m.f_weighted = f_measure_weighted(pred, gt, opt.beta_sq_weighted);
  m.sensitivity = sensitivity(bin, gt);
  m.s_measure = s_measure(pred, gt, opt.alpha);
  m.e_mean = e_measure_mean(pred, gt);
  return m;
}

/// Frame-averaged metrics. Frames with an undefined value are excluded from
/// that metric's mean and counted in the matching skip field.
struct MetricReport {
  std::size_t frames = 0;
  double dice = 0.0;
  double f_mean = 0.0;
  double f_weighted = 0.0;
  double sensitivity = 0.0;
  double s_measure = 0.0;
  double e_mean = 0.0;
  std::size_t f_weighted_skipped = 0;
  std::size_t sensitivity_skipped = 0;
  std::vector<FrameMetrics> per_frame;
  Curves curves;
};

inline MetricReport aggregate(std::vector<FrameMetrics> frames) {
  MetricReport r;
  r.frames = frames.size();
  std::size_t nw = 0, ns = 0;
  for (const auto& f : frames) {
    r.dice += f.dice;
    r.f_mean += f.f_mean;
    r.s_measure += f.s_measure;
    r.e_mean += f.e_mean;
    if (f.f_weighted) {
      r.f_weighted += *f.f_weighted;
      ++nw;
    } else {
      ++r.f_weighted_skipped;
    }
    if (f.sensitivity) {
      r.sensitivity += *f.sensitivity;
      ++ns;
    } else {
      ++r.sensitivity_skipped;
    }
  }
  if (r.frames > 0) {
    const double k = static_cast<double>(r.frames);
    r.dice /= k;
    r.f_mean /= k;
    r.s_measure /= k;
    r.e_mean /= k;
  }
  if (nw > 0) r.f_weighted /= static_cast<double>(nw);
  if (ns > 0) r.sensitivity /= static_cast<double>(ns);
  r.per_frame = std::move(frames);
  return r;
}

/// Per-frame metrics of one clip plus their means and the averaged curves.
inline MetricReport evaluate_sequence(const std::vector<Map>& preds, const std::vector<Map>& gts, const std::string& clip = "",
                                      const MetricOptions& opt = {}) {
  if (preds.size() != gts.size()) throw DimensionError("evaluate_sequence: prediction and ground-truth counts differ");
  std::vector<FrameMetrics> frames;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto m = evaluate_frame(preds[i], gts[i], opt);
    m.clip = clip;
    m.frame = i;
    frames.push_back(std::move(m));
  }
  auto r = aggregate(std::move(frames));
  r.curves = curves(preds, gts, opt.beta_sq_mean);
  return r;
}

inline void write_frame_csv_header(std::ostream& os) {
  os << "clip_id,frame_idx,dice,f_mean,f_weighted,sensitivity,s_measure,e_mean\n";
}

inline void write_frame_csv_row(std::ostream& os, const FrameMetrics& m) {
  os.precision(17);
  os << m.clip << ',' << m.frame << ',' << m.dice << ',' << m.f_mean << ',';
  if (m.f_weighted) os << *m.f_weighted; else os << "skip";
  os << ',';
  if (m.sensitivity) os << *m.sensitivity; else os << "skip";
  os << ',' << m.s_measure << ',' << m.e_mean << '\n';
}

}  // namespace mast::metrics
