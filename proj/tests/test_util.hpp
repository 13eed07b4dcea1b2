#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mast/mast.hpp"
#include "oracles.hpp"

namespace mast::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), grad);
}

inline double rel_err(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

struct GradSample {
  std::size_t tensor = 0;
  std::size_t index = 0;
};

/// Analytic gradients of f() w.r.t. `params` against central differences
/// at the listed entries. Returns the worst relative error.
inline double grad_check(const std::vector<Tensor>& params, const std::function<Tensor()>& f, const std::vector<GradSample>& at,
                         double h = 1e-3) {
  for (const auto& p : params) p.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    backward(f());
  }
  double worst = 0.0;
  NoGradScope no_grad;
  for (const auto& s : at) {
    const Tensor& p = params[s.tensor];
    const double analytic = p.has_grad() ? p.grad()[s.index] : 0.0;
    auto d = p.mutable_data();
    const double x0 = d[s.index];
    d[s.index] = x0 + h;
    const double up = f().item();
    d[s.index] = x0 - h;
    const double down = f().item();
    d[s.index] = x0;
    worst = std::max(worst, rel_err(analytic, (up - down) / (2 * h)));
  }
  return worst;
}

/// Every entry of every tensor.
inline double grad_check_all(const std::vector<Tensor>& params, const std::function<Tensor()>& f, double h = 1e-3) {
  std::vector<GradSample> at;
  for (std::size_t t = 0; t < params.size(); ++t)
    for (std::size_t i = 0; i < params[t].numel(); ++i) at.push_back({t, i});
  return grad_check(params, f, at, h);
}

/// `count` entries drawn uniformly over the concatenation of all tensors.
inline std::vector<GradSample> sample_entries(const std::vector<Tensor>& params, std::size_t count, Rng& rng) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.numel();
  std::vector<GradSample> out;
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t flat = rng.index(total);
    std::size_t t = 0;
    while (flat >= params[t].numel()) flat -= params[t++].numel();
    out.push_back({t, flat});
  }
  return out;
}

/// Mixture-attention weights with random projections and position table.
inline MixtureAttentionWeights random_attention_weights(Rng& rng, std::size_t c, std::size_t patch, std::size_t h, std::size_t w,
                                                        double scale = 0.3) {
  auto mw = make_mixture_attention(c, patch, h, w);
  for (Tensor* t : {&mw.embed.weight, &mw.embed.bias, &mw.position, &mw.unembed.weight, &mw.unembed.bias}) {
    for (auto& v : t->mutable_data()) v += rng.uniform(-scale, scale);
  }
  return mw;
}

/// 1 x C x H x W tensor -> [c][y][x].
inline std::vector<oracle::Grid> to_planes(const Tensor& f) {
  const std::size_t c = f.dim(1), h = f.dim(2), w = f.dim(3);
  std::vector<oracle::Grid> out;
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::vector<double> plane(f.data().begin() + ch * h * w, f.data().begin() + (ch + 1) * h * w);
    out.push_back(oracle::grid(h, w, plane));
  }
  return out;
}

inline oracle::AttentionInputs oracle_inputs(const Tensor& f_a, const Tensor& f_r, const MixtureAttentionWeights& mw, double lambda,
                                             std::size_t patch, bool literal) {
  const std::size_t c = f_a.dim(1);
  oracle::AttentionInputs in;
  in.f_a = to_planes(f_a);
  in.f_r = to_planes(f_r);
  in.w_embed = oracle::grid(c, c, mw.embed.weight.values());
  in.w_unembed = oracle::grid(c, c, mw.unembed.weight.values());
  in.b_embed = mw.embed.bias.values();
  in.b_unembed = mw.unembed.bias.values();
  in.position = oracle::grid(mw.position.dim(0), mw.position.dim(1), mw.position.values());
  in.patch = patch;
  in.lambda = lambda;
  in.literal = literal;
  return in;
}

/// Largest elementwise difference between a 1 x C x H x W tensor and planes.
inline double max_abs_diff(const Tensor& t, const std::vector<oracle::Grid>& planes) {
  const std::size_t h = t.dim(2), w = t.dim(3);
  double worst = 0.0;
  for (std::size_t c = 0; c < planes.size(); ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) worst = std::max(worst, std::abs(t[(c * h + y) * w + x] - planes[c][y][x]));
  return worst;
}

}  // namespace mast::testing
