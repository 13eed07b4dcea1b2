#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mast/autograd.hpp"

namespace mast {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class F>
Tensor map_unary(const Tensor& a, F f) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return Tensor(a.shape(), std::move(out));
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  Tensor r(a.shape(), std::move(out));
  return detail::finish(r, {a, b}, [a, b](std::span<const double> g) mutable {
    if (a.requires_grad()) a.accumulate_grad(g);
    if (b.requires_grad()) b.accumulate_grad(g);
  }, "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  Tensor r(a.shape(), std::move(out));
  return detail::finish(r, {a, b}, [a, b](std::span<const double> g) mutable {
    if (a.requires_grad()) a.accumulate_grad(g);
    if (b.requires_grad()) {
      std::vector<double> ng(g.begin(), g.end());
      for (auto& v : ng) v = -v;
      b.accumulate_grad(ng);
    }
  }, "sub");
}

/// Elementwise (Hadamard) product of equally shaped tensors.
inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "hadamard");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  Tensor r(a.shape(), std::move(out));
  return detail::finish(r, {a, b}, [a, b](std::span<const double> g) mutable {
    auto x = a.data(), y = b.data();
    if (a.requires_grad()) {
      std::vector<double> ga(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * y[i];
      a.accumulate_grad(ga);
    }
    if (b.requires_grad()) {
      std::vector<double> gb(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * x[i];
      b.accumulate_grad(gb);
    }
  }, "hadamard");
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "div");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
  Tensor r(a.shape(), std::move(out));
  return detail::finish(r, {a, b}, [a, b](std::span<const double> g) mutable {
    auto x = a.data(), y = b.data();
    if (a.requires_grad()) {
      std::vector<double> ga(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] / y[i];
      a.accumulate_grad(ga);
    }
    if (b.requires_grad()) {
      std::vector<double> gb(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] = -g[i] * x[i] / (y[i] * y[i]);
      b.accumulate_grad(gb);
    }
  }, "div");
}

/// s * a + c
inline Tensor affine(const Tensor& a, double s, double c = 0.0) {
  Tensor r = detail::map_unary(a, [s, c](double v) { return s * v + c; });
  return detail::finish(r, {a}, [a, s](std::span<const double> g) mutable {
    std::vector<double> ga(g.begin(), g.end());
    for (auto& v : ga) v *= s;
    a.accumulate_grad(ga);
  }, "affine");
}

inline Tensor scale(const Tensor& a, double s) { return affine(a, s, 0.0); }
inline Tensor one_minus(const Tensor& a) { return affine(a, -1.0, 1.0); }

inline Tensor sigmoid(const Tensor& a) {
  Tensor r = detail::map_unary(a, [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    double e = std::exp(v);
    return e / (1.0 + e);
  });
  return detail::finish(r, {a}, [a, r](std::span<const double> g) mutable {
    auto y = r.data();
    std::vector<double> ga(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * y[i] * (1.0 - y[i]);
    a.accumulate_grad(ga);
  }, "sigmoid");
}

inline Tensor relu(const Tensor& a) {
  Tensor r = detail::map_unary(a, [](double v) { return v > 0.0 ? v : 0.0; });
  return detail::finish(r, {a}, [a](std::span<const double> g) mutable {
    auto x = a.data();
    std::vector<double> ga(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = x[i] > 0.0 ? g[i] : 0.0;
    a.accumulate_grad(ga);
  }, "relu");
}

/// Exact (erf) form.
inline Tensor gelu(const Tensor& a) {
  Tensor r = detail::map_unary(a, [](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); });
  return detail::finish(r, {a}, [a](std::span<const double> g) mutable {
    auto x = a.data();
    std::vector<double> ga(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
      const double pdf = std::exp(-0.5 * v * v) * 0.5 * M_2_SQRTPI * M_SQRT1_2;
      ga[i] = g[i] * (cdf + v * pdf);
    }
    a.accumulate_grad(ga);
  }, "gelu");
}

/// Per-element binary cross-entropy of sigmoid(logits) against `target`,
/// evaluated in the overflow-free form max(x,0) - x*y + log1p(exp(-|x|)).
/// The target is treated as a constant.
inline Tensor bce_with_logits(const Tensor& logits, const Tensor& target) {
  detail::require_same_shape(logits, target, "bce_with_logits");
  std::vector<double> out(logits.numel());
  auto x = logits.data(), y = target.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(x[i], 0.0) - x[i] * y[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  Tensor r(logits.shape(), std::move(out));
  return detail::finish(r, {logits}, [logits, target](std::span<const double> g) mutable {
    auto x = logits.data(), y = target.data();
    std::vector<double> ga(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      double s = x[i] >= 0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
      ga[i] = g[i] * (s - y[i]);
    }
    logits.accumulate_grad(ga);
  }, "bce_with_logits");
}

/// Sum of all elements, as a rank-0 tensor.
inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor r = Tensor::scalar(s);
  return detail::finish(r, {a}, [a](std::span<const double> g) mutable {
    a.accumulate_grad(std::vector<double>(a.numel(), g[0]));
  }, "sum");
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

}  // namespace mast
