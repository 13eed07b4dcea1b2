#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "mast/model.hpp"

namespace mast::harness {

struct CostItem {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;  // one forward pass over a frame pair
};

struct ModelCost {
  std::vector<CostItem> items;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::uint64_t flops() const { return 2 * macs; }
};

namespace detail {

inline std::uint64_t conv_params(std::uint64_t in, std::uint64_t out, std::uint64_t k) { return out * in * k * k + out; }
inline std::uint64_t linear_params(std::uint64_t in, std::uint64_t out) { return in * out + out; }

}  // namespace detail

/// Closed-form parameter and multiply-accumulate counts of the configured
/// model. Only products are counted (convolutions, dense layers, attention
/// matmuls); normalization, activations, softmax and resampling are not.
inline ModelCost count_params_flops(const ModelConfig& cfg) {
  cfg.validate();
  using detail::conv_params;
  using detail::linear_params;
  using U = std::uint64_t;
  const auto& e = cfg.encoder;
  const U res = cfg.resolution, C = e.top_channels, W = cfg.decoder_width;
  const std::array<U, 3> ch{e.channels[0], e.channels[1], e.channels[2]};
  std::array<U, 3> ext{};
  for (std::size_t s = 0; s < 3; ++s) ext[s] = res >> (s + 1);

  ModelCost cost;
  auto add = [&](std::string name, U params, U macs) { cost.items.push_back({std::move(name), params, macs}); };

  // encoder, per frame
  U enc_params = 0, enc_macs = 0;
  U in = EncoderConfig::kInputChannels;
  for (std::size_t s = 0; s < 3; ++s) {
    const U c = ch[s], hw = ext[s] * ext[s], r = e.mlp_ratio;
    const U ws = std::min<U>({e.window, ext[s], ext[s]});
    const U t = ws * ws;
    enc_params += conv_params(in, c, 3) + 2 * c + 2 * c;
    enc_macs += c * in * 9 * hw;
    const U block_params = 4 * c + linear_params(c, 3 * c) + linear_params(c, c) + linear_params(c, r * c) + linear_params(r * c, c);
    const U block_macs = hw * (3 * c * c + c * c + 2 * r * c * c) + 2 * hw * t * c;
    enc_params += e.depth * block_params;
    enc_macs += e.depth * block_macs;
    in = c;
  }
  const U top_hw = ext[2] * ext[2];
  enc_params += 5 * conv_params(ch[2], C, 1) + 3 * conv_params(C, C, 3) + conv_params(4 * C, C, 1);
  enc_macs += top_hw * (5 * C * ch[2] + 3 * 9 * C * C + 4 * C * C);
  if (cfg.siamese) {
    add("encoder", enc_params, 2 * enc_macs);
  } else {
    add("encoder", enc_params, enc_macs);
    add("reference_encoder", enc_params, enc_macs);
  }

  if (cfg.mixture_attention) {
    const U p = cfg.patch_size(), l = p * p, d = (ext[2] / p) * (ext[2] / p) * C;
    add("mixture_attention", 2 * conv_params(C, C, 1) + l * d, 4 * C * C * top_hw + 7 * d * d * l);
  }

  const U mid_hw = ext[1] * ext[1], fine_hw = ext[0] * ext[0];
  U dec_params = conv_params(C, W, 1) + conv_params(ch[2], W, 1) + conv_params(ch[1], W, 1) + conv_params(2 * W, W, 3) +
                 conv_params(W, 1, 1);
  U dec_macs = top_hw * (C * W + ch[2] * W) + mid_hw * (ch[1] * W + 9 * 2 * W * W + W);
  const std::array<U, 3> feat_c{C, ch[1], ch[0]};
  const std::array<U, 3> feat_hw{top_hw, mid_hw, fine_hw};
  for (std::size_t s = 0; s < 3; ++s) {
    dec_params += conv_params(feat_c[s], W, 3) + conv_params(W, 1, 3);
    dec_macs += feat_hw[s] * 9 * (feat_c[s] * W + W);
  }
  add("decoder", dec_params, 2 * dec_macs);

  for (const auto& it : cost.items) {
    cost.params += it.params;
    cost.macs += it.macs;
  }
  return cost;
}

}  // namespace mast::harness
