#pragma once

#include <span>
#include <vector>

#include "mast/autograd.hpp"
#include "mast/detail/gemm.hpp"

namespace mast {

/// (m x k) * (k x n)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  detail::gemm(a.data().data(), false, b.data().data(), false, out.data(), m, k, n, false);
  detail::mac_counter() += m * k * n;
  Tensor r({m, n}, std::move(out));
  return detail::finish(r, {a, b}, [a, b, m, k, n](std::span<const double> g) mutable {
    if (a.requires_grad()) {
      std::vector<double> ga(m * k);
      detail::gemm(g.data(), false, b.data().data(), true, ga.data(), m, n, k, false);
      a.accumulate_grad(ga);
    }
    if (b.requires_grad()) {
      std::vector<double> gb(k * n);
      detail::gemm(a.data().data(), true, g.data(), false, gb.data(), k, m, n, false);
      b.accumulate_grad(gb);
    }
  }, "matmul");
}

/// Batched (B x m x k) * (B x k x n).
inline Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    detail::gemm(a.data().data() + i * m * k, false, b.data().data() + i * k * n, false, out.data() + i * m * n, m, k,
                 n, false);
  }
  detail::mac_counter() += batch * m * k * n;
  Tensor r({batch, m, n}, std::move(out));
  return detail::finish(r, {a, b}, [a, b, batch, m, k, n](std::span<const double> g) mutable {
    if (a.requires_grad()) {
      std::vector<double> ga(batch * m * k);
      for (std::size_t i = 0; i < batch; ++i) {
        detail::gemm(g.data() + i * m * n, false, b.data().data() + i * k * n, true, ga.data() + i * m * k, m, n, k,
                     false);
      }
      a.accumulate_grad(ga);
    }
    if (b.requires_grad()) {
      std::vector<double> gb(batch * k * n);
      for (std::size_t i = 0; i < batch; ++i) {
        detail::gemm(a.data().data() + i * m * k, true, g.data() + i * m * n, false, gb.data() + i * k * n, k, m, n,
                     false);
      }
      b.accumulate_grad(gb);
    }
  }, "bmm");
}

/// x (T x in) * w (in x out) + bias (out). `bias` may be undefined.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    throw DimensionError("linear: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  const std::size_t t = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw DimensionError("linear: bias shape " + shape_str(bias.shape()) + " does not match " + std::to_string(out_dim));
  }
  std::vector<double> out(t * out_dim);
  detail::gemm(x.data().data(), false, w.data().data(), false, out.data(), t, in, out_dim, false);
  if (bias.defined()) {
    auto b = bias.data();
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += b[j];
  }
  detail::mac_counter() += t * in * out_dim;
  Tensor r({t, out_dim}, std::move(out));
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return detail::finish(r, std::move(inputs), [x, w, bias, t, in, out_dim](std::span<const double> g) mutable {
    if (x.requires_grad()) {
      std::vector<double> gx(t * in);
      detail::gemm(g.data(), false, w.data().data(), true, gx.data(), t, out_dim, in, false);
      x.accumulate_grad(gx);
    }
    if (w.requires_grad()) {
      std::vector<double> gw(in * out_dim);
      detail::gemm(x.data().data(), true, g.data(), false, gw.data(), in, t, out_dim, false);
      w.accumulate_grad(gw);
    }
    if (bias.defined() && bias.requires_grad()) {
      std::vector<double> gb(out_dim, 0.0);
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[i * out_dim + j];
      bias.accumulate_grad(gb);
    }
  }, "linear");
}

}  // namespace mast
