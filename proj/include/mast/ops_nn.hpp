#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mast/autograd.hpp"
#include "mast/detail/gemm.hpp"
#include "mast/ops_shape.hpp"

namespace mast {

/// Exp-normalizes along `axis` (max-subtracted).
inline Tensor softmax(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
  std::size_t outer, inner;
  detail::axis_split(a.shape(), axis, outer, inner);
  const std::size_t len = a.shape()[axis];
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double mx = x[base];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, x[base + l * inner]);
      double s = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        double e = std::exp(x[base + l * inner] - mx);
        out[base + l * inner] = e;
        s += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= s;
    }
  }
  Tensor r(a.shape(), std::move(out));
  return detail::finish(r, {a}, [a, r, outer, inner, len](std::span<const double> g) mutable {
    auto y = r.data();
    std::vector<double> ga(g.size());
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        double dot = 0.0;
        for (std::size_t l = 0; l < len; ++l) dot += g[base + l * inner] * y[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t k = base + l * inner;
          ga[k] = y[k] * (g[k] - dot);
        }
      }
    }
    a.accumulate_grad(ga);
  }, "softmax");
}

enum class PaddingMode { zero, replicate };

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  PaddingMode padding_mode = PaddingMode::zero;
};

namespace detail {

/// Source index for a padded coordinate, or -1 for a zero pad.
inline long padded_index(long i, long n, PaddingMode mode) {
  if (i >= 0 && i < n) return i;
  if (mode == PaddingMode::zero) return -1;
  return std::clamp(i, 0L, n - 1);
}

struct ConvGeometry {
  std::size_t n, c, h, w, o, kh, kw, ho, wo;
  Conv2dOptions opt;
  bool pointwise() const {
    return kh == 1 && kw == 1 && opt.stride == 1 && opt.padding == 0;
  }
};

// For every (c, ky, kx, oy, ox) row of the column matrix: source offset into
// one image plane stack, or -1.
inline std::vector<long> im2col_index(const ConvGeometry& g) {
  std::vector<long> idx(g.c * g.kh * g.kw * g.ho * g.wo);
  std::size_t k = 0;
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx)
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          long sy = padded_index(static_cast<long>(oy * g.opt.stride + ky * g.opt.dilation) - static_cast<long>(g.opt.padding),
                                 static_cast<long>(g.h), g.opt.padding_mode);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            long sx = padded_index(static_cast<long>(ox * g.opt.stride + kx * g.opt.dilation) - static_cast<long>(g.opt.padding),
                                   static_cast<long>(g.w), g.opt.padding_mode);
            idx[k++] = (sy < 0 || sx < 0) ? -1 : static_cast<long>(ch * g.h * g.w) + sy * static_cast<long>(g.w) + sx;
          }
        }
  return idx;
}

}  // namespace detail

/// x: N x C x H x W, kernel: O x C x KH x KW, bias: O (optional).
inline Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Conv2dOptions opt = {}) {
  if (x.rank() != 4 || kernel.rank() != 4 || kernel.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d: incompatible input " + shape_str(x.shape()) + " and kernel " + shape_str(kernel.shape()));
  }
  if (opt.stride == 0 || opt.dilation == 0) throw DimensionError("conv2d: stride and dilation must be positive");
  detail::ConvGeometry geo{x.dim(0), x.dim(1), x.dim(2), x.dim(3), kernel.dim(0), kernel.dim(2), kernel.dim(3), 0, 0, opt};
  const std::size_t span_h = opt.dilation * (geo.kh - 1) + 1, span_w = opt.dilation * (geo.kw - 1) + 1;
  if (span_h > geo.h + 2 * opt.padding || span_w > geo.w + 2 * opt.padding) {
    throw DimensionError("conv2d: kernel window larger than padded input " + shape_str(x.shape()));
  }
  geo.ho = (geo.h + 2 * opt.padding - span_h) / opt.stride + 1;
  geo.wo = (geo.w + 2 * opt.padding - span_w) / opt.stride + 1;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != geo.o)) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " + std::to_string(geo.o) + " outputs");
  }
  const std::size_t ckk = geo.c * geo.kh * geo.kw, hw_out = geo.ho * geo.wo, plane = geo.c * geo.h * geo.w;
  std::vector<long> index;
  std::vector<double> cols;
  if (!geo.pointwise()) {
    index = detail::im2col_index(geo);
    cols.resize(geo.n * ckk * hw_out);
  }
  std::vector<double> out(geo.n * geo.o * hw_out);
  auto xd = x.data();
  for (std::size_t b = 0; b < geo.n; ++b) {
    const double* col_ptr;
    if (geo.pointwise()) {
      col_ptr = xd.data() + b * plane;
    } else {
      double* cb = cols.data() + b * ckk * hw_out;
      const double* src = xd.data() + b * plane;
      for (std::size_t k = 0; k < index.size(); ++k) cb[k] = index[k] < 0 ? 0.0 : src[index[k]];
      col_ptr = cb;
    }
    detail::gemm(kernel.data().data(), false, col_ptr, false, out.data() + b * geo.o * hw_out, geo.o, ckk, hw_out, false);
    if (bias.defined()) {
      auto bd = bias.data();
      for (std::size_t oc = 0; oc < geo.o; ++oc) {
        double* row = out.data() + (b * geo.o + oc) * hw_out;
        for (std::size_t p = 0; p < hw_out; ++p) row[p] += bd[oc];
      }
    }
  }
  detail::mac_counter() += geo.n * geo.o * ckk * hw_out;
  Tensor r({geo.n, geo.o, geo.ho, geo.wo}, std::move(out));
  std::vector<Tensor> inputs{x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  return detail::finish(r, std::move(inputs),
                        [x, kernel, bias, geo, index = std::move(index), cols = std::move(cols), ckk, hw_out,
                         plane](std::span<const double> g) mutable {
    auto xd = x.data();
    if (kernel.requires_grad()) {
      std::vector<double> gk(geo.o * ckk, 0.0);
      for (std::size_t b = 0; b < geo.n; ++b) {
        const double* col_ptr = geo.pointwise() ? xd.data() + b * plane : cols.data() + b * ckk * hw_out;
        detail::gemm(g.data() + b * geo.o * hw_out, false, col_ptr, true, gk.data(), geo.o, hw_out, ckk, true);
      }
      kernel.accumulate_grad(gk);
    }
    if (bias.defined() && bias.requires_grad()) {
      std::vector<double> gb(geo.o, 0.0);
      for (std::size_t b = 0; b < geo.n; ++b)
        for (std::size_t oc = 0; oc < geo.o; ++oc) {
          const double* row = g.data() + (b * geo.o + oc) * hw_out;
          double s = 0.0;
          for (std::size_t p = 0; p < hw_out; ++p) s += row[p];
          gb[oc] += s;
        }
      bias.accumulate_grad(gb);
    }
    if (x.requires_grad()) {
      std::vector<double> gx(x.numel(), 0.0);
      std::vector<double> gcol(ckk * hw_out);
      for (std::size_t b = 0; b < geo.n; ++b) {
        double* dst = gx.data() + b * plane;
        if (geo.pointwise()) {
          detail::gemm(kernel.data().data(), true, g.data() + b * geo.o * hw_out, false, dst, ckk, geo.o, hw_out, false);
          continue;
        }
        detail::gemm(kernel.data().data(), true, g.data() + b * geo.o * hw_out, false, gcol.data(), ckk, geo.o, hw_out, false);
        for (std::size_t k = 0; k < index.size(); ++k)
          if (index[k] >= 0) dst[index[k]] += gcol[k];
      }
      x.accumulate_grad(gx);
    }
  }, "conv2d");
}

inline Tensor conv2d(const Tensor& x, const Tensor& kernel, Conv2dOptions opt = {}) { return conv2d(x, kernel, Tensor{}, opt); }

/// Stride-1 box average with "same" output extents (odd windows).
inline Tensor avgpool2d(const Tensor& x, std::size_t window, PaddingMode mode = PaddingMode::replicate) {
  if (x.rank() != 4) throw DimensionError("avgpool2d expects N x C x H x W, got " + shape_str(x.shape()));
  if (window == 0 || window % 2 == 0) throw DimensionError("avgpool2d: window must be odd, got " + std::to_string(window));
  const std::size_t pad = window / 2;
  const std::size_t n = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (window > h + 2 * pad || window > w + 2 * pad) throw DimensionError("avgpool2d: window larger than padded input");
  const double area = static_cast<double>(window * window);
  const double inv = 1.0 / area;
  // taps[y * window] = source rows for output row y (or -1), same for columns
  auto taps = [&](std::size_t len) {
    std::vector<long> t(len * window);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t k = 0; k < window; ++k)
        t[i * window + k] = detail::padded_index(static_cast<long>(i + k) - static_cast<long>(pad), static_cast<long>(len), mode);
    return t;
  };
  auto ty = taps(h), tx = taps(w);
  std::vector<double> out(x.numel(), 0.0);
  auto xd = x.data();
  for (std::size_t p = 0; p < n; ++p) {
    const double* src = xd.data() + p * h * w;
    double* dst = out.data() + p * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (std::size_t ky = 0; ky < window; ++ky) {
          long sy = ty[y * window + ky];
          if (sy < 0) continue;
          for (std::size_t kx = 0; kx < window; ++kx) {
            long sx = tx[xx * window + kx];
            if (sx >= 0) s += src[sy * static_cast<long>(w) + sx];
          }
        }
        dst[y * w + xx] = s / area;
      }
  }
  Tensor r(x.shape(), std::move(out));
  return detail::finish(r, {x}, [x, ty, tx, n, h, w, window, inv](std::span<const double> g) mutable {
    std::vector<double> gx(x.numel(), 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      const double* gsrc = g.data() + p * h * w;
      double* dst = gx.data() + p * h * w;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) {
          const double v = gsrc[y * w + xx] * inv;
          for (std::size_t ky = 0; ky < window; ++ky) {
            long sy = ty[y * window + ky];
            if (sy < 0) continue;
            for (std::size_t kx = 0; kx < window; ++kx) {
              long sx = tx[xx * window + kx];
              if (sx >= 0) dst[sy * static_cast<long>(w) + sx] += v;
            }
          }
        }
    }
    x.accumulate_grad(gx);
  }, "avgpool2d");
}

namespace detail {
struct LinearTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};
// Half-pixel centers, edge-clamped (align_corners = false).
inline LinearTaps bilinear_taps(std::size_t in, std::size_t out) {
  LinearTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = std::max((static_cast<double>(i) + 0.5) * ratio - 0.5, 0.0);
    auto lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    t.lo[i] = lo;
    t.hi[i] = std::min(lo + 1, in - 1);
    t.frac[i] = src - static_cast<double>(lo);
  }
  return t;
}
}  // namespace detail

/// Bilinear resampling of N x C x H x W to N x C x out_h x out_w (also
/// handles shrinking).
inline Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 4) throw DimensionError("upsample_bilinear expects N x C x H x W, got " + shape_str(x.shape()));
  if (out_h == 0 || out_w == 0) throw DimensionError("upsample_bilinear: zero output extent");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h == out_h && w == out_w) {
    return detail::finish(x.clone(), {x}, [x](std::span<const double> g) mutable { x.accumulate_grad(g); }, "upsample_bilinear");
  }
  auto ty = detail::bilinear_taps(h, out_h);
  auto tx = detail::bilinear_taps(w, out_w);
  std::vector<double> out(planes * out_h * out_w);
  auto xd = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xd.data() + p * h * w;
    double* dst = out.data() + p * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const double fy = ty.frac[y];
      const double* r0 = src + ty.lo[y] * w;
      const double* r1 = src + ty.hi[y] * w;
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const double fx = tx.frac[xx];
        const double top = r0[tx.lo[xx]] * (1 - fx) + r0[tx.hi[xx]] * fx;
        const double bot = r1[tx.lo[xx]] * (1 - fx) + r1[tx.hi[xx]] * fx;
        dst[y * out_w + xx] = top * (1 - fy) + bot * fy;
      }
    }
  }
  Tensor r({x.dim(0), x.dim(1), out_h, out_w}, std::move(out));
  return detail::finish(r, {x}, [x, ty, tx, planes, h, w, out_h, out_w](std::span<const double> g) mutable {
    std::vector<double> gx(x.numel(), 0.0);
    for (std::size_t p = 0; p < planes; ++p) {
      double* dst = gx.data() + p * h * w;
      const double* gs = g.data() + p * out_h * out_w;
      for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = ty.frac[y];
        double* r0 = dst + ty.lo[y] * w;
        double* r1 = dst + ty.hi[y] * w;
        for (std::size_t xx = 0; xx < out_w; ++xx) {
          const double fx = tx.frac[xx];
          const double v = gs[y * out_w + xx];
          r0[tx.lo[xx]] += v * (1 - fy) * (1 - fx);
          r0[tx.hi[xx]] += v * (1 - fy) * fx;
          r1[tx.lo[xx]] += v * fy * (1 - fx);
          r1[tx.hi[xx]] += v * fy * fx;
        }
      }
    }
    x.accumulate_grad(gx);
  }, "upsample_bilinear");
}

/// Normalizes each row of x (T x C) over C, then scales by gamma and shifts by beta.
inline Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6) {
  if (x.rank() != 2 || gamma.shape() != Shape{x.dim(1)} || beta.shape() != Shape{x.dim(1)}) {
    throw DimensionError("layernorm: bad shapes x " + shape_str(x.shape()) + " gamma " + shape_str(gamma.shape()));
  }
  const std::size_t t = x.dim(0), c = x.dim(1);
  std::vector<double> out(t * c), xhat(t * c), inv_std(t);
  auto xd = x.data(), gd = gamma.data(), bd = beta.data();
  for (std::size_t i = 0; i < t; ++i) {
    const double* row = xd.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (row[j] - mu) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gd[j] + bd[j];
    }
  }
  Tensor r({t, c}, std::move(out));
  return detail::finish(r, {x, gamma, beta},
                        [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), t, c](std::span<const double> g) mutable {
    auto gd = gamma.data();
    if (gamma.requires_grad() || beta.requires_grad()) {
      std::vector<double> gg(c, 0.0), gb(c, 0.0);
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          gg[j] += g[i * c + j] * xhat[i * c + j];
          gb[j] += g[i * c + j];
        }
      if (gamma.requires_grad()) gamma.accumulate_grad(gg);
      if (beta.requires_grad()) beta.accumulate_grad(gb);
    }
    if (x.requires_grad()) {
      std::vector<double> gx(t * c);
      for (std::size_t i = 0; i < t; ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          const double d = g[i * c + j] * gd[j];
          m1 += d;
          m2 += d * xhat[i * c + j];
        }
        m1 /= static_cast<double>(c);
        m2 /= static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) {
          const double d = g[i * c + j] * gd[j];
          gx[i * c + j] = inv_std[i] * (d - m1 - xhat[i * c + j] * m2);
        }
      }
      x.accumulate_grad(gx);
    }
  }, "layernorm");
}

/// x (N x C x H x W) times a per-pixel map (N x 1 x H x W), broadcast over C.
inline Tensor mul_spatial(const Tensor& x, const Tensor& map) {
  if (x.rank() != 4 || map.rank() != 4 || map.dim(0) != x.dim(0) || map.dim(1) != 1 || map.dim(2) != x.dim(2) ||
      map.dim(3) != x.dim(3)) {
    throw DimensionError("mul_spatial: map " + shape_str(map.shape()) + " incompatible with " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(x.numel());
  auto xd = x.data(), md = map.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) out[(b * c + ch) * hw + p] = xd[(b * c + ch) * hw + p] * md[b * hw + p];
  Tensor r(x.shape(), std::move(out));
  return detail::finish(r, {x, map}, [x, map, n, c, hw](std::span<const double> g) mutable {
    auto xd = x.data(), md = map.data();
    if (x.requires_grad()) {
      std::vector<double> gx(x.numel());
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t p = 0; p < hw; ++p) gx[(b * c + ch) * hw + p] = g[(b * c + ch) * hw + p] * md[b * hw + p];
      x.accumulate_grad(gx);
    }
    if (map.requires_grad()) {
      std::vector<double> gm(map.numel(), 0.0);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t p = 0; p < hw; ++p) gm[b * hw + p] += g[(b * c + ch) * hw + p] * xd[(b * c + ch) * hw + p];
      map.accumulate_grad(gm);
    }
  }, "mul_spatial");
}

}  // namespace mast
