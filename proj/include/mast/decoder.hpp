#pragma once

#include <array>
#include <string>
#include <vector>

#include "mast/encoder.hpp"
#include "mast/layers.hpp"

namespace mast {

inline constexpr std::size_t kSupervisedMaps = 4;

/// Four deeply-supervised logit maps for one frame. maps[0] is the finest
/// refinement (Y^(1)), maps[3] the coarse global map (Y^(4)); all at input
/// resolution (1 x 1 x H x W). `native` holds the same maps before the final
/// upsampling and `residuals[i]` the correction added by refinement stage i,
/// so native[i] == resize(native[i + 1]) + residuals[i].
struct PredictionSet {
  std::array<Tensor, kSupervisedMaps> maps;
  std::array<Tensor, kSupervisedMaps> native;
  std::array<Tensor, kSupervisedMaps - 1> residuals;
};

/// Neighbor fusion of (z, deepest side-out, middle side-out) into a coarse
/// map, then three reverse-attention refinement stages over (z, middle,
/// finest) features, coarse to fine.
struct DecoderParams {
  ConvParams reduce_z;
  ConvParams reduce_deep;
  ConvParams reduce_mid;
  ConvParams fuse;      // 3x3, 2D -> D
  ConvParams coarse;    // 1x1, D -> 1
  std::array<ConvParams, 3> refine1;  // 3x3, C_level -> D
  std::array<ConvParams, 3> refine2;  // 3x3, D -> 1

  void visit(const std::string& p, const ParamVisitor& f) {
    reduce_z.visit(p + ".reduce_z", f);
    reduce_deep.visit(p + ".reduce_deep", f);
    reduce_mid.visit(p + ".reduce_mid", f);
    fuse.visit(p + ".fuse", f);
    coarse.visit(p + ".coarse", f);
    for (std::size_t i = 0; i < 3; ++i) {
      refine1[i].visit(p + ".refine" + std::to_string(3 - i) + ".conv1", f);
      refine2[i].visit(p + ".refine" + std::to_string(3 - i) + ".conv2", f);
    }
  }
};

/// `level_channels` are the encoder stage widths (finest first); `z_channels`
/// the width of the attention output.
inline DecoderParams make_decoder(const Rng& rng, const std::string& name, const std::array<std::size_t, 3>& level_channels,
                                  std::size_t z_channels, std::size_t width) {
  DecoderParams d;
  d.reduce_z = make_conv(rng, name + ".reduce_z", z_channels, width, 1);
  d.reduce_deep = make_conv(rng, name + ".reduce_deep", level_channels[2], width, 1);
  d.reduce_mid = make_conv(rng, name + ".reduce_mid", level_channels[1], width, 1);
  d.fuse = make_conv(rng, name + ".fuse", 2 * width, width, 3);
  d.coarse = make_conv(rng, name + ".coarse", width, 1, 1);
  const std::array<std::size_t, 3> feature_channels{z_channels, level_channels[1], level_channels[0]};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string sp = name + ".refine" + std::to_string(3 - i);
    d.refine1[i] = make_conv(rng, sp + ".conv1", feature_channels[i], width, 3);
    d.refine2[i] = make_conv(rng, sp + ".conv2", width, 1, 3);
  }
  return d;
}

inline Tensor resize_to(const Tensor& map, const Tensor& like) { return upsample_bilinear(map, like.dim(2), like.dim(3)); }

/// Decodes one frame. `pyr.levels` must hold the three side-outs and `z` the
/// (mixture-attention) top features of the same frame.
inline PredictionSet decode(const PyramidFeatures& pyr, const Tensor& z, const DecoderParams& p, std::size_t out_h,
                            std::size_t out_w) {
  if (pyr.levels.size() != 3) {
    throw DimensionError("decode: expected 3 pyramid levels, got " + std::to_string(pyr.levels.size()));
  }
  const Tensor& fine = pyr.levels[0];
  const Tensor& mid = pyr.levels[1];
  const Tensor& deep = pyr.levels[2];
  if (z.dim(2) != deep.dim(2) || z.dim(3) != deep.dim(3)) {
    throw DimensionError("decode: top features " + shape_str(z.shape()) + " do not match deepest level " + shape_str(deep.shape()));
  }

  PredictionSet out;
  // neighbor fusion: multiply the two coarse inputs, lift to the middle
  // level, gate it, concatenate with the lifted z and project to one map
  auto zr = apply(p.reduce_z, z);
  auto dr = apply(p.reduce_deep, deep);
  auto mr = apply(p.reduce_mid, mid);
  auto gated = hadamard(resize_to(hadamard(zr, dr), mr), mr);
  auto fused = gelu(apply3x3(p.fuse, concat(gated, resize_to(zr, mr), 1)));
  out.native[3] = apply(p.coarse, fused);

  // reverse-attention refinement, coarse to fine
  const std::array<const Tensor*, 3> features{&z, &mid, &fine};
  for (std::size_t s = 0; s < 3; ++s) {
    const Tensor& feat = *features[s];
    const std::size_t level = 2 - s;  // writes native[2], native[1], native[0]
    auto prior = resize_to(out.native[level + 1], feat);
    auto reverse = one_minus(sigmoid(prior));
    auto h = gelu(apply3x3(p.refine1[s], mul_spatial(feat, reverse)));
    auto residual = apply3x3(p.refine2[s], h);
    out.residuals[level] = residual;
    out.native[level] = add(prior, residual);
  }
  for (std::size_t i = 0; i < kSupervisedMaps; ++i) out.maps[i] = upsample_bilinear(out.native[i], out_h, out_w);
  return out;
}

}  // namespace mast
