#pragma once

#include <cmath>
#include <vector>

#include "mast/decoder.hpp"
#include "mast/ops.hpp"

namespace mast {

struct WeightMapOptions {
  std::size_t window = 7;  // 15 at 352x352 inputs
  double strength = 5.0;
};

/// w = 1 + strength * |avgpool(y) - y|, replicate-padded. Equals 1 wherever
/// the mask is locally constant.
inline Tensor weight_map(const Tensor& mask, WeightMapOptions opt = {}) {
  Tensor y = mask.rank() == 4 ? mask.detach() : Tensor({1, 1, mask.shape()[mask.rank() - 2], mask.shape()[mask.rank() - 1]}, mask.values());
  Tensor pooled;
  {
    NoGradScope no_grad;
    pooled = avgpool2d(y, opt.window, PaddingMode::replicate);
  }
  std::vector<double> w(y.numel());
  auto p = pooled.data(), yd = y.data();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 + opt.strength * std::abs(p[i] - yd[i]);
  return Tensor(mask.shape(), std::move(w));
}

namespace detail {
inline Tensor as_constant_like(const Tensor& t, const Tensor& like) {
  if (t.numel() != like.numel()) {
    throw DimensionError("loss: " + shape_str(t.shape()) + " does not match prediction " + shape_str(like.shape()));
  }
  return Tensor(like.shape(), t.values());
}
}  // namespace detail

/// sum(w * bce(sigmoid(logits), y)) / sum(w)
inline Tensor weighted_bce(const Tensor& logits, const Tensor& mask, const Tensor& weights) {
  auto y = detail::as_constant_like(mask, logits);
  auto w = detail::as_constant_like(weights, logits);
  double wsum = 0.0;
  for (double v : w.data()) wsum += v;
  return scale(sum(hadamard(w, bce_with_logits(logits, y))), 1.0 / wsum);
}

inline constexpr double kIouSmoothing = 1.0;

/// 1 - (sum(w p y) + 1) / (sum(w (p + y - p y)) + 1), p = sigmoid(logits)
inline Tensor weighted_iou(const Tensor& logits, const Tensor& mask, const Tensor& weights) {
  auto y = detail::as_constant_like(mask, logits);
  auto w = detail::as_constant_like(weights, logits);
  auto p = sigmoid(logits);
  auto py = hadamard(p, y);
  auto inter = sum(hadamard(w, py));
  auto uni = sum(hadamard(w, sub(add(p, y), py)));
  auto ratio = div(affine(inter, 1.0, kIouSmoothing), affine(uni, 1.0, kIouSmoothing));
  return one_minus(ratio);
}

inline Tensor hybrid_loss(const Tensor& logits, const Tensor& mask, const Tensor& weights) {
  return add(weighted_bce(logits, mask, weights), weighted_iou(logits, mask, weights));
}

/// Sum over the four supervised maps of both frames, each frame against its
/// own mask.
inline Tensor total_loss(const PredictionSet& preds_a, const PredictionSet& preds_r, const Tensor& mask_a,
                         const Tensor& mask_r, WeightMapOptions opt = {}) {
  const auto w_a = weight_map(mask_a, opt);
  const auto w_r = weight_map(mask_r, opt);
  Tensor total;
  for (std::size_t i = 0; i < kSupervisedMaps; ++i) {
    for (int frame = 0; frame < 2; ++frame) {
      const auto& preds = frame == 0 ? preds_a : preds_r;
      auto term = hybrid_loss(preds.maps[i], frame == 0 ? mask_a : mask_r, frame == 0 ? w_a : w_r);
      total = total.defined() ? add(total, term) : term;
    }
  }
  return total;
}

}  // namespace mast
