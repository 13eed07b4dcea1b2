#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mast/errors.hpp"

namespace mast {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;
};

inline std::atomic<bool>& finite_checks_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

}  // namespace detail

/// Debug mode: scan every op output for NaN/Inf and throw NumericalError.
inline void set_finite_checks(bool enabled) { detail::finite_checks_flag().store(enabled); }
inline bool finite_checks_enabled() { return detail::finite_checks_flag().load(std::memory_order_relaxed); }

/// Dense row-major float64 array. Copies of a Tensor share storage; the
/// values are treated as immutable once an op has produced them, only the
/// gradient buffer changes during backward.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : impl_(std::make_shared<detail::TensorStorage>()) {
    for (auto e : shape) {
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                           " values but buffer has " + std::to_string(data.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) { return full(std::move(shape), 0.0, requires_grad); }
  static Tensor ones(Shape shape, bool requires_grad = false) { return full(std::move(shape), 1.0, requires_grad); }
  static Tensor scalar(double v, bool requires_grad = false) { return Tensor({}, {v}, requires_grad); }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> data;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) throw DimensionError("ragged rows");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(data));
  }
  static Tensor vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }
  static Tensor identity(std::size_t n) {
    auto t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.impl_->data[i * n + i] = 1.0;
    return t;
  }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= rank()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    return impl_->shape[axis];
  }

  std::span<const double> data() const { return impl_->data; }
  /// Direct write access; only for parameters and freshly built outputs.
  /// Constness applies to the handle, not the shared storage.
  std::span<double> mutable_data() const { return impl_->data; }
  std::vector<double> values() const { return impl_->data; }
  double item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }
  double operator[](std::size_t flat) const { return impl_->data[flat]; }
  double at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) throw DimensionError("index rank mismatch");
    std::size_t flat = 0;
    std::size_t i = 0;
    for (auto ix : index) {
      if (ix >= impl_->shape[i]) throw DimensionError("index out of range");
      flat = flat * impl_->shape[i] + ix;
      ++i;
    }
    return impl_->data[flat];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool v) const { impl_->requires_grad = v; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() const {
    ensure_grad();
    return impl_->grad;
  }
  void zero_grad() const { impl_->grad.clear(); }
  void accumulate_grad(std::span<const double> g) const {
    ensure_grad();
    auto& dst = impl_->grad;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

  /// Deep copy without gradient or tape history.
  Tensor clone(bool requires_grad = false) const { return Tensor(shape(), impl_->data, requires_grad); }
  Tensor detach() const { return clone(false); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  void ensure_grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  }

  std::shared_ptr<detail::TensorStorage> impl_;
};

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline void check_finite(const Tensor& t, const char* what) {
  if (!all_finite(t.data())) throw NumericalError(std::string("non-finite value produced by ") + what);
}

}  // namespace mast
