#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mast/ops.hpp"
#include "mast/random.hpp"

namespace mast {

using ParamVisitor = std::function<void(const std::string& name, Tensor& param)>;

struct ConvParams {
  Tensor weight;  // out x in x k x k
  Tensor bias;    // out

  void visit(const std::string& prefix, const ParamVisitor& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

struct LinearParams {
  Tensor weight;  // in x out
  Tensor bias;    // out

  void visit(const std::string& prefix, const ParamVisitor& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

struct NormParams {
  Tensor gamma;
  Tensor beta;

  void visit(const std::string& prefix, const ParamVisitor& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }
};

// Every parameter draws from its own substream keyed by its name, so shared
// components initialize identically across ablation variants.

/// He-normal kernel (truncated at 2 sigma), zero bias.
inline ConvParams make_conv(const Rng& rng, const std::string& name, std::size_t in, std::size_t out, std::size_t k) {
  Rng r = rng.substream(name);
  const double std = std::sqrt(2.0 / static_cast<double>(in * k * k));
  std::vector<double> w(out * in * k * k);
  for (auto& v : w) v = r.truncated_normal(std);
  return {Tensor({out, in, k, k}, std::move(w), true), Tensor::zeros({out}, true)};
}

/// 1x1 convolution initialized to the identity map.
inline ConvParams make_identity_conv(std::size_t channels) {
  auto w = Tensor::zeros({channels, channels, 1, 1}, true);
  for (std::size_t i = 0; i < channels; ++i) w.mutable_data()[i * channels + i] = 1.0;
  return {w, Tensor::zeros({channels}, true)};
}

/// Truncated normal std 0.02, zero bias.
inline LinearParams make_linear(const Rng& rng, const std::string& name, std::size_t in, std::size_t out) {
  Rng r = rng.substream(name);
  std::vector<double> w(in * out);
  for (auto& v : w) v = r.truncated_normal(0.02);
  return {Tensor({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

inline NormParams make_norm(std::size_t channels) {
  return {Tensor::ones({channels}, true), Tensor::zeros({channels}, true)};
}

inline Tensor apply(const ConvParams& p, const Tensor& x, Conv2dOptions opt = {}) { return conv2d(x, p.weight, p.bias, opt); }

/// "same"-extent 3x3 convolution with the given dilation.
inline Tensor apply3x3(const ConvParams& p, const Tensor& x, std::size_t dilation = 1) {
  return conv2d(x, p.weight, p.bias, Conv2dOptions{1, dilation, dilation, PaddingMode::zero});
}

inline Tensor apply(const LinearParams& p, const Tensor& x) { return linear(x, p.weight, p.bias); }
inline Tensor apply(const NormParams& p, const Tensor& x) { return layernorm(x, p.gamma, p.beta); }

}  // namespace mast
