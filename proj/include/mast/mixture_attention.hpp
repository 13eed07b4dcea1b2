#pragma once

#include <string>
#include <utility>

#include "mast/layers.hpp"

namespace mast {

/// Which attention block enhances the anchor's mutual embedding.
///  - transposed: E_a^(m) = E_a softmax(A_ar), the mirror image of
///    E_r^(m) = E_r softmax(A_ra); keeps the module symmetric under a <-> r.
///  - literal:    E_a^(m) = E_a softmax(A_ra), both mutual terms share A_ra.
enum class MutualPairing { transposed, literal };

/// P^2 x (N * C) patch embedding of a C x H x W map, N = HW / P^2.
/// Row p = py * P + px is the pixel position inside a patch; column
/// n * C + c is channel c of patch n (patches in raster order).
struct PatchEmbedding {
  Tensor matrix;
  std::size_t patch = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t patch_count() const { return (height / patch) * (width / patch); }
};

/// Joint attention A = [E_r, E_a]^T [E_a, E_r] and its four blocks.
/// `ar` is assembled as the transpose of `ra`.
struct AttentionBundle {
  Tensor ra;  // E_r^T E_a
  Tensor rr;  // E_r^T E_r
  Tensor aa;  // E_a^T E_a
  Tensor ar;  // E_a^T E_r

  /// [[ra, rr], [aa, ar]]
  Tensor full() const { return concat(concat(ra, rr, 1), concat(aa, ar, 1), 0); }
};

struct EnhancedEmbeddings {
  Tensor r_mutual;
  Tensor a_mutual;
  Tensor r_self;
  Tensor a_self;
};

struct MixtureAttentionWeights {
  ConvParams embed;    // C x C channel projection applied per patch
  Tensor position;     // P^2 x N*C, shared by both frames
  ConvParams unembed;  // 1x1 conv after the inverse patch layout

  void visit(const std::string& p, const ParamVisitor& f) {
    embed.visit(p + ".embed", f);
    f(p + ".position", position);
    unembed.visit(p + ".unembed", f);
  }
};

/// Both projections start as the identity, the position table at zero.
inline MixtureAttentionWeights make_mixture_attention(std::size_t channels, std::size_t patch, std::size_t height,
                                                      std::size_t width) {
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw DimensionError("patch size " + std::to_string(patch) + " does not divide " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  const std::size_t n = (height / patch) * (width / patch);
  return {make_identity_conv(channels), Tensor::zeros({patch * patch, n * channels}, true), make_identity_conv(channels)};
}

/// Pure layout: 1 x C x H x W -> P^2 x N*C.
inline Tensor patch_layout(const Tensor& f, std::size_t patch) {
  if (f.rank() != 4 || f.dim(0) != 1) throw DimensionError("patch_layout expects 1 x C x H x W, got " + shape_str(f.shape()));
  const std::size_t c = f.dim(1), h = f.dim(2), w = f.dim(3);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw DimensionError("patch size " + std::to_string(patch) + " does not divide " + shape_str(f.shape()));
  }
  const std::size_t ny = h / patch, nx = w / patch;
  auto t = reshape(f, {c, ny, patch, nx, patch});
  t = permute(t, {2, 4, 1, 3, 0});
  return reshape(t, {patch * patch, ny * nx * c});
}

/// Exact inverse of patch_layout.
inline Tensor patch_layout_inverse(const Tensor& e, std::size_t patch, std::size_t channels, std::size_t height,
                                   std::size_t width) {
  const std::size_t ny = height / patch, nx = width / patch;
  if (e.shape() != Shape{patch * patch, ny * nx * channels}) {
    throw DimensionError("patch_layout_inverse: embedding " + shape_str(e.shape()) + " does not match the layout");
  }
  auto t = reshape(e, {patch, patch, ny, nx, channels});
  t = permute(t, {4, 2, 0, 3, 1});
  return reshape(t, {1, channels, height, width});
}

/// Per-patch channel projection, layout, then the position table.
inline PatchEmbedding embed(const Tensor& f, const MixtureAttentionWeights& w, std::size_t patch) {
  auto projected = apply(w.embed, f);
  auto m = patch_layout(projected, patch);
  if (m.shape() != w.position.shape()) {
    throw DimensionError("embed: position table " + shape_str(w.position.shape()) + " does not match embedding " +
                         shape_str(m.shape()));
  }
  return {add(m, w.position), patch, f.dim(1), f.dim(2), f.dim(3)};
}

inline AttentionBundle attention_matrix(const Tensor& e_a, const Tensor& e_r) {
  if (e_a.rank() != 2 || e_a.shape() != e_r.shape()) {
    throw DimensionError("attention_matrix: embeddings " + shape_str(e_a.shape()) + " and " + shape_str(e_r.shape()) +
                         " differ");
  }
  AttentionBundle b;
  b.ra = matmul(transpose(e_r), e_a);
  b.rr = matmul(transpose(e_r), e_r);
  b.aa = matmul(transpose(e_a), e_a);
  b.ar = transpose(b.ra);
  return b;
}

/// E * softmax_0(A): every output column is a convex combination of the
/// columns of E, weighted by the corresponding column of A.
inline Tensor attend(const Tensor& e, const Tensor& block) { return matmul(e, softmax(block, 0)); }

inline EnhancedEmbeddings enhance(const Tensor& e_a, const Tensor& e_r, const AttentionBundle& bundle,
                                  MutualPairing pairing = MutualPairing::transposed) {
  if (e_a.shape() != e_r.shape() || bundle.ra.dim(0) != e_a.dim(1)) {
    throw DimensionError("enhance: embeddings and attention blocks are inconsistent");
  }
  EnhancedEmbeddings out;
  out.r_mutual = attend(e_r, bundle.ra);
  out.a_self = attend(e_a, bundle.aa);
  out.a_mutual = attend(e_a, pairing == MutualPairing::literal ? bundle.ra : bundle.ar);
  out.r_self = attend(e_r, bundle.rr);
  return out;
}

/// z_a = lambda E_r^(m) + (1 - lambda) E_a^(s)
/// z_r = lambda E_a^(m) + (1 - lambda) E_r^(s)
inline std::pair<Tensor, Tensor> fuse(const EnhancedEmbeddings& enh, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("fuse: lambda must lie in [0, 1], got " + std::to_string(lambda));
  auto z_a = add(scale(enh.r_mutual, lambda), scale(enh.a_self, 1.0 - lambda));
  auto z_r = add(scale(enh.a_mutual, lambda), scale(enh.r_self, 1.0 - lambda));
  return {z_a, z_r};
}

/// Full module on a pair of 1 x C x H x W maps; returns maps of the same shape.
inline std::pair<Tensor, Tensor> mixture_attention(const Tensor& f_a, const Tensor& f_r, const MixtureAttentionWeights& w,
                                                   double lambda, std::size_t patch,
                                                   MutualPairing pairing = MutualPairing::transposed) {
  if (f_a.shape() != f_r.shape()) {
    throw DimensionError("mixture_attention: feature shapes differ " + shape_str(f_a.shape()) + " vs " + shape_str(f_r.shape()));
  }
  auto e_a = embed(f_a, w, patch);
  auto e_r = embed(f_r, w, patch);
  auto bundle = attention_matrix(e_a.matrix, e_r.matrix);
  auto enh = enhance(e_a.matrix, e_r.matrix, bundle, pairing);
  auto [z_a, z_r] = fuse(enh, lambda);
  const std::size_t c = f_a.dim(1), h = f_a.dim(2), wd = f_a.dim(3);
  auto map_a = apply(w.unembed, patch_layout_inverse(z_a, patch, c, h, wd));
  auto map_r = apply(w.unembed, patch_layout_inverse(z_r, patch, c, h, wd));
  return {map_a, map_r};
}

}  // namespace mast
