#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mast/autograd.hpp"

namespace mast {

/// Same buffer, new extents (copying; there are no strided views).
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor r(std::move(shape), a.values());
  return detail::finish(r, {a}, [a](std::span<const double> g) mutable { a.accumulate_grad(g); }, "reshape");
}

namespace detail {

inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

/// For each output flat index, the input flat index it reads.
inline std::vector<std::size_t> permute_gather(const Shape& in_shape, const std::vector<std::size_t>& axes,
                                               Shape& out_shape) {
  const std::size_t rank = in_shape.size();
  auto in_strides = row_major_strides(in_shape);
  out_shape.resize(rank);
  std::vector<std::size_t> src_stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[axes[i]];
    src_stride[i] = in_strides[axes[i]];
  }
  std::vector<std::size_t> gather(shape_numel(in_shape));
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < gather.size(); ++flat) {
    gather[flat] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      src += src_stride[d];
      if (counter[d] < out_shape[d]) break;
      src -= src_stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  return gather;
}

}  // namespace detail

/// Output axis i is input axis axes[i].
inline Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  if (axes.size() != a.rank()) throw DimensionError("permute: axis list length differs from rank");
  std::vector<bool> seen(axes.size(), false);
  for (auto ax : axes) {
    if (ax >= axes.size() || seen[ax]) throw DimensionError("permute: invalid axis permutation");
    seen[ax] = true;
  }
  Shape out_shape;
  auto gather = detail::permute_gather(a.shape(), axes, out_shape);
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[gather[i]];
  Tensor r(std::move(out_shape), std::move(out));
  return detail::finish(r, {a}, [a, gather = std::move(gather)](std::span<const double> g) mutable {
    std::vector<double> ga(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) ga[gather[i]] = g[i];
    a.accumulate_grad(ga);
  }, "permute");
}

/// Swaps the last two axes.
inline Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(a.shape()));
  std::vector<std::size_t> axes(a.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  std::swap(axes[a.rank() - 1], axes[a.rank() - 2]);
  return permute(a, axes);
}

namespace detail {
// outer x axis x inner decomposition around `axis`
inline void axis_split(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace detail

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const auto& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range for " + shape_str(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == ref[i];
    if (!ok) throw DimensionError("concat: side extents differ: " + shape_str(ref) + " vs " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  std::size_t outer, inner;
  detail::axis_split(out_shape, axis, outer, inner);
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t row = p.shape()[axis] * inner;
    auto x = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * row), row,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    }
    offset += row;
  }
  Tensor r(out_shape, std::move(out));
  return detail::finish(r, parts, [parts, outer, inner, out_row, axis](std::span<const double> g) mutable {
    std::size_t offset = 0;
    for (auto& p : parts) {
      const std::size_t row = p.shape()[axis] * inner;
      if (p.requires_grad()) {
        std::vector<double> gp(p.numel());
        for (std::size_t o = 0; o < outer; ++o) {
          std::copy_n(g.begin() + static_cast<std::ptrdiff_t>(o * out_row + offset), row,
                      gp.begin() + static_cast<std::ptrdiff_t>(o * row));
        }
        p.accumulate_grad(gp);
      }
      offset += row;
    }
  }, "concat");
}

inline Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) { return concat(std::vector<Tensor>{a, b}, axis); }

/// Elements [begin, end) along `axis`.
inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.rank()) throw DimensionError("slice: axis out of range for " + shape_str(a.shape()));
  if (begin >= end || end > a.shape()[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                         shape_str(a.shape()) + " axis " + std::to_string(axis));
  }
  std::size_t outer, inner;
  detail::axis_split(a.shape(), axis, outer, inner);
  const std::size_t in_row = a.shape()[axis] * inner;
  const std::size_t row = (end - begin) * inner;
  const std::size_t off = begin * inner;
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  std::vector<double> out(outer * row);
  auto x = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * in_row + off), row,
                out.begin() + static_cast<std::ptrdiff_t>(o * row));
  }
  Tensor r(std::move(out_shape), std::move(out));
  return detail::finish(r, {a}, [a, outer, in_row, row, off](std::span<const double> g) mutable {
    std::vector<double> ga(a.numel(), 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(g.begin() + static_cast<std::ptrdiff_t>(o * row), row,
                  ga.begin() + static_cast<std::ptrdiff_t>(o * in_row + off));
    }
    a.accumulate_grad(ga);
  }, "slice");
}

/// Splits into [0, at) and [at, extent) along `axis`.
inline std::pair<Tensor, Tensor> split(const Tensor& a, std::size_t axis, std::size_t at) {
  if (axis >= a.rank()) throw DimensionError("split: axis out of range for " + shape_str(a.shape()));
  if (at == 0 || at >= a.shape()[axis]) {
    throw DimensionError("split: point " + std::to_string(at) + " outside (0, " + std::to_string(a.shape()[axis]) + ")");
  }
  return {slice(a, axis, 0, at), slice(a, axis, at, a.shape()[axis])};
}

}  // namespace mast
