#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mast/layers.hpp"

namespace mast {

/// Anchor frame at t = T, reference frame at t = T - delta, with masks.
struct FramePair {
  Tensor anchor;          // 3 x H x W, values in [0, 1]
  Tensor reference;       // 3 x H x W
  Tensor anchor_mask;     // 1 x H x W, {0, 1}
  Tensor reference_mask;  // 1 x H x W
  std::size_t t_anchor = 0;
  std::size_t t_reference = 0;
};

/// Per-frame encoder output. Levels are 1 x C_i x H_i x W_i, finest first;
/// `top` is the texture-enhanced coarsest level (1 x C x H x W).
struct PyramidFeatures {
  std::vector<Tensor> levels;
  Tensor top;
};

struct EncoderConfig {
  std::array<std::size_t, 3> channels{16, 32, 64};
  std::size_t window = 4;
  std::size_t mlp_ratio = 2;
  std::size_t depth = 1;  // transformer blocks per stage
  std::size_t top_channels = 32;
  static constexpr std::size_t kInputChannels = 3;
  static constexpr std::size_t kTotalStride = 8;
};

struct TransformerBlockParams {
  NormParams norm1;
  LinearParams qkv;
  LinearParams proj;
  NormParams norm2;
  LinearParams fc1;
  LinearParams fc2;

  void visit(const std::string& p, const ParamVisitor& f) {
    norm1.visit(p + ".norm1", f);
    qkv.visit(p + ".qkv", f);
    proj.visit(p + ".proj", f);
    norm2.visit(p + ".norm2", f);
    fc1.visit(p + ".fc1", f);
    fc2.visit(p + ".fc2", f);
  }
};

struct EncoderStageParams {
  ConvParams merge;  // stride-2 patch merging
  NormParams merge_norm;
  std::vector<TransformerBlockParams> blocks;
  NormParams out_norm;

  void visit(const std::string& p, const ParamVisitor& f) {
    merge.visit(p + ".merge", f);
    merge_norm.visit(p + ".merge_norm", f);
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(p + ".block" + std::to_string(i), f);
    out_norm.visit(p + ".out_norm", f);
  }
};

/// Texture enhancement: four parallel branches (1x1; 1x1 -> 3x3 with
/// dilation 1, 3, 5), concatenated, fused by a 1x1, plus a 1x1 shortcut.
struct TemParams {
  ConvParams branch0;
  std::array<ConvParams, 3> reduce;
  std::array<ConvParams, 3> dilated;
  ConvParams fuse;
  ConvParams shortcut;
  static constexpr std::array<std::size_t, 3> kDilations{1, 3, 5};

  void visit(const std::string& p, const ParamVisitor& f) {
    branch0.visit(p + ".branch0", f);
    for (std::size_t i = 0; i < 3; ++i) {
      reduce[i].visit(p + ".reduce" + std::to_string(i + 1), f);
      dilated[i].visit(p + ".dilated" + std::to_string(i + 1), f);
    }
    fuse.visit(p + ".fuse", f);
    shortcut.visit(p + ".shortcut", f);
  }
};

struct EncoderParams {
  std::vector<EncoderStageParams> stages;
  TemParams tem;

  void visit(const std::string& p, const ParamVisitor& f) {
    for (std::size_t i = 0; i < stages.size(); ++i) stages[i].visit(p + ".stage" + std::to_string(i), f);
    tem.visit(p + ".tem", f);
  }
};

inline TemParams make_tem(const Rng& rng, const std::string& name, std::size_t in, std::size_t out) {
  TemParams t;
  t.branch0 = make_conv(rng, name + ".branch0", in, out, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    t.reduce[i] = make_conv(rng, name + ".reduce" + std::to_string(i + 1), in, out, 1);
    t.dilated[i] = make_conv(rng, name + ".dilated" + std::to_string(i + 1), out, out, 3);
  }
  t.fuse = make_conv(rng, name + ".fuse", 4 * out, out, 1);
  t.shortcut = make_conv(rng, name + ".shortcut", in, out, 1);
  return t;
}

inline EncoderParams make_encoder(const Rng& rng, const std::string& name, const EncoderConfig& cfg) {
  EncoderParams e;
  std::size_t in = EncoderConfig::kInputChannels;
  for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
    const std::string sp = name + ".stage" + std::to_string(s);
    const std::size_t c = cfg.channels[s];
    EncoderStageParams st;
    st.merge = make_conv(rng, sp + ".merge", in, c, 3);
    st.merge_norm = make_norm(c);
    for (std::size_t b = 0; b < cfg.depth; ++b) {
      const std::string bp = sp + ".block" + std::to_string(b);
      TransformerBlockParams blk;
      blk.norm1 = make_norm(c);
      blk.qkv = make_linear(rng, bp + ".qkv", c, 3 * c);
      blk.proj = make_linear(rng, bp + ".proj", c, c);
      blk.norm2 = make_norm(c);
      blk.fc1 = make_linear(rng, bp + ".fc1", c, cfg.mlp_ratio * c);
      blk.fc2 = make_linear(rng, bp + ".fc2", cfg.mlp_ratio * c, c);
      st.blocks.push_back(std::move(blk));
    }
    st.out_norm = make_norm(c);
    e.stages.push_back(std::move(st));
    in = c;
  }
  e.tem = make_tem(rng, name + ".tem", in, cfg.top_channels);
  return e;
}

/// Stacks (anchor, reference) into 2 x 3 x H x W; slot 0 is the anchor.
inline Tensor batch_form(const Tensor& anchor, const Tensor& reference) {
  if (anchor.shape() != reference.shape()) {
    throw DimensionError("batch_form: frame shapes differ " + shape_str(anchor.shape()) + " vs " + shape_str(reference.shape()));
  }
  Shape s = anchor.shape();
  s.insert(s.begin(), 1);
  return concat(reshape(anchor, s), reshape(reference, s), 0);
}

/// Inverse of batch_form on any 2 x ... tensor: (anchor slot, reference slot),
/// each keeping a leading extent of 1.
inline std::pair<Tensor, Tensor> batch_split(const Tensor& features) {
  if (features.rank() == 0 || features.dim(0) != 2) {
    throw DimensionError("batch_split: leading extent must be 2, got " + shape_str(features.shape()));
  }
  return split(features, 0, 1);
}

namespace detail {

// B x C x H x W -> (B * windows * ws * ws) x C, window-major token order.
inline Tensor to_window_tokens(const Tensor& x, std::size_t ws) {
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto t = reshape(x, {b, c, h / ws, ws, w / ws, ws});
  t = permute(t, {0, 2, 4, 3, 5, 1});
  return reshape(t, {b * h * w, c});
}

inline Tensor from_window_tokens(const Tensor& tokens, std::size_t b, std::size_t c, std::size_t h, std::size_t w,
                                 std::size_t ws) {
  auto t = reshape(tokens, {b, h / ws, w / ws, ws, ws, c});
  t = permute(t, {0, 5, 1, 3, 2, 4});
  return reshape(t, {b, c, h, w});
}

}  // namespace detail

/// Pre-norm block: windowed single-head self-attention then MLP, both
/// residual. `tokens` is (windows * ws^2) x C in window-major order.
inline Tensor transformer_block(const TransformerBlockParams& p, const Tensor& tokens, std::size_t window_tokens) {
  const std::size_t n = tokens.dim(0), c = tokens.dim(1), windows = n / window_tokens;
  auto h = apply(p.norm1, tokens);
  auto qkv = apply(p.qkv, h);
  auto q = reshape(slice(qkv, 1, 0, c), {windows, window_tokens, c});
  auto k = reshape(slice(qkv, 1, c, 2 * c), {windows, window_tokens, c});
  auto v = reshape(slice(qkv, 1, 2 * c, 3 * c), {windows, window_tokens, c});
  auto scores = scale(bmm(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(c)));
  auto att = softmax(scores, 2);
  auto mixed = reshape(bmm(att, v), {n, c});
  auto x = add(tokens, apply(p.proj, mixed));
  auto h2 = apply(p.norm2, x);
  return add(x, apply(p.fc2, gelu(apply(p.fc1, h2))));
}

inline std::size_t effective_window(std::size_t window, std::size_t h, std::size_t w) {
  std::size_t ws = std::min({window, h, w});
  if (h % ws != 0 || w % ws != 0) {
    throw DimensionError("window " + std::to_string(ws) + " does not tile a " + std::to_string(h) + "x" + std::to_string(w) + " map");
  }
  return ws;
}

/// Shared-weight pyramid transformer over a batch (B x 3 x H x W). Returns
/// one side-out per stage (B x C_i x H/2^(i+1) x W/2^(i+1)).
inline std::vector<Tensor> transformer_forward(const Tensor& batch, const EncoderParams& enc, const EncoderConfig& cfg) {
  if (batch.rank() != 4 || batch.dim(1) != EncoderConfig::kInputChannels) {
    throw DimensionError("transformer_forward expects B x 3 x H x W, got " + shape_str(batch.shape()));
  }
  if (batch.dim(2) % EncoderConfig::kTotalStride != 0 || batch.dim(3) % EncoderConfig::kTotalStride != 0) {
    throw DimensionError("input extents " + shape_str(batch.shape()) + " are not divisible by the total stride 8");
  }
  std::vector<Tensor> sides;
  Tensor x = batch;
  for (const auto& st : enc.stages) {
    auto y = apply(st.merge, x, Conv2dOptions{2, 1, 1, PaddingMode::zero});
    const std::size_t b = y.dim(0), c = y.dim(1), h = y.dim(2), w = y.dim(3);
    const std::size_t ws = effective_window(cfg.window, h, w);
    auto tokens = apply(st.merge_norm, detail::to_window_tokens(y, ws));
    for (const auto& blk : st.blocks) tokens = transformer_block(blk, tokens, ws * ws);
    tokens = apply(st.out_norm, tokens);
    x = detail::from_window_tokens(tokens, b, c, h, w, ws);
    sides.push_back(x);
  }
  return sides;
}

/// N x C_in x H x W -> N x C x H x W.
inline Tensor tem_forward(const Tensor& f, const TemParams& p) {
  std::vector<Tensor> branches;
  branches.push_back(apply(p.branch0, f));
  for (std::size_t i = 0; i < 3; ++i) {
    branches.push_back(apply3x3(p.dilated[i], apply(p.reduce[i], f), TemParams::kDilations[i]));
  }
  auto fused = apply(p.fuse, concat(branches, 1));
  return relu(add(fused, apply(p.shortcut, f)));
}

/// Encodes both frames through one weight-shared encoder:
/// batch_form -> transformer -> batch_split -> TEM.
inline std::pair<PyramidFeatures, PyramidFeatures> siamese_encode(const Tensor& anchor, const Tensor& reference,
                                                                   const EncoderParams& enc, const EncoderConfig& cfg) {
  auto sides = transformer_forward(batch_form(anchor, reference), enc, cfg);
  PyramidFeatures a, r;
  for (const auto& s : sides) {
    auto [fa, fr] = batch_split(s);
    a.levels.push_back(fa);
    r.levels.push_back(fr);
  }
  a.top = tem_forward(a.levels.back(), enc.tem);
  r.top = tem_forward(r.levels.back(), enc.tem);
  return {std::move(a), std::move(r)};
}

/// Single-frame encoding (used by the twin-encoder ablation).
inline PyramidFeatures encode_single(const Tensor& frame, const EncoderParams& enc, const EncoderConfig& cfg) {
  Shape s = frame.shape();
  s.insert(s.begin(), 1);
  PyramidFeatures out;
  out.levels = transformer_forward(reshape(frame, s), enc, cfg);
  out.top = tem_forward(out.levels.back(), enc.tem);
  return out;
}

}  // namespace mast
