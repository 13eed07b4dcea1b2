#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mast/data/clip.hpp"
#include "mast/encoder.hpp"
#include "mast/random.hpp"

namespace mast::data {

struct SamplerConfig {
  std::size_t delta = 2;
  std::uint64_t seed = 0;
  bool shuffle = false;
  std::size_t batch_size = 1;

  void validate() const {
    if (delta < 1) throw ConfigError("delta must be at least 1");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  }
};

/// Clips too short for the configured interval.
struct SkipRecord {
  std::string clip;
  std::size_t frames = 0;
  std::size_t delta = 0;
};

/// (anchor = frame[T], reference = frame[T - delta]) for T in [delta, len).
/// Shuffled with `seed` when requested, otherwise in anchor order.
inline std::vector<FramePair> sample_pairs(const VideoClip& clip, const SamplerConfig& cfg, std::vector<SkipRecord>* skipped = nullptr) {
  cfg.validate();
  if (clip.frames.size() != clip.masks.size()) {
    throw DataError("clip " + clip.id + ": frame and mask counts differ");
  }
  std::vector<FramePair> out;
  if (clip.size() <= cfg.delta) {
    if (skipped) skipped->push_back({clip.id, clip.size(), cfg.delta});
    return out;
  }
  for (std::size_t t = cfg.delta; t < clip.size(); ++t) {
    out.push_back({clip.frames[t], clip.frames[t - cfg.delta], clip.masks[t], clip.masks[t - cfg.delta], t, t - cfg.delta});
  }
  if (cfg.shuffle) {
    Rng rng = Rng(cfg.seed).substream("shuffle:" + clip.id);
    rng.shuffle(out);
  }
  return out;
}

/// Location of a pair inside a dataset.
struct PairRef {
  std::size_t clip = 0;
  std::size_t anchor = 0;
};

/// All valid anchors of all clips, in clip then anchor order.
inline std::vector<PairRef> enumerate_pairs(const std::vector<VideoClip>& clips, std::size_t delta,
                                            std::vector<SkipRecord>* skipped = nullptr) {
  if (delta < 1) throw ConfigError("delta must be at least 1");
  std::vector<PairRef> out;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    if (clips[c].size() <= delta) {
      if (skipped) skipped->push_back({clips[c].id, clips[c].size(), delta});
      continue;
    }
    for (std::size_t t = delta; t < clips[c].size(); ++t) out.push_back({c, t});
  }
  return out;
}

inline FramePair make_pair(const std::vector<VideoClip>& clips, const PairRef& r, std::size_t delta) {
  const auto& c = clips[r.clip];
  return {c.frames[r.anchor], c.frames[r.anchor - delta], c.masks[r.anchor], c.masks[r.anchor - delta], r.anchor, r.anchor - delta};
}

/// Horizontal mirror of a C x H x W tensor.
inline Tensor flip_horizontal(const Tensor& t) {
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  std::vector<double> v(t.numel());
  auto d = t.data();
  for (std::size_t k = 0; k < c * h; ++k)
    for (std::size_t x = 0; x < w; ++x) v[k * w + x] = d[k * w + (w - 1 - x)];
  return Tensor(t.shape(), std::move(v));
}

inline FramePair flip_pair(const FramePair& p) {
  return {flip_horizontal(p.anchor), flip_horizontal(p.reference), flip_horizontal(p.anchor_mask),
          flip_horizontal(p.reference_mask), p.t_anchor, p.t_reference};
}

}  // namespace mast::data
