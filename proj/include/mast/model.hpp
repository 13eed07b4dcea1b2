#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mast/decoder.hpp"
#include "mast/encoder.hpp"
#include "mast/loss.hpp"
#include "mast/mixture_attention.hpp"
#include "mast/serialize.hpp"

namespace mast {

struct ModelConfig {
  std::size_t resolution = 64;
  EncoderConfig encoder;
  double lambda = 0.7;
  bool siamese = true;
  bool mixture_attention = true;
  MutualPairing pairing = MutualPairing::transposed;
  std::size_t patch = 0;  // 0: half the top extent when even, else 1
  std::size_t decoder_width = 16;
  std::uint64_t seed = 1;

  std::size_t top_extent() const { return resolution / EncoderConfig::kTotalStride; }

  std::size_t patch_size() const {
    if (patch != 0) return patch;
    const std::size_t top = top_extent();
    return top % 2 == 0 ? top / 2 : 1;
  }

  void validate() const {
    if (resolution == 0 || resolution % EncoderConfig::kTotalStride != 0) {
      throw ConfigError("resolution " + std::to_string(resolution) + " must be a positive multiple of 8");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
    const std::size_t p = patch_size();
    if (top_extent() % p != 0) {
      throw ConfigError("patch " + std::to_string(p) + " does not divide the top extent " + std::to_string(top_extent()));
    }
    if (decoder_width == 0 || encoder.top_channels == 0) throw ConfigError("layer widths must be positive");
  }
};

inline std::string to_string(MutualPairing p) { return p == MutualPairing::literal ? "literal" : "transposed"; }

inline MutualPairing parse_pairing(const std::string& s) {
  if (s == "transposed") return MutualPairing::transposed;
  if (s == "literal") return MutualPairing::literal;
  throw ConfigError("unknown pairing '" + s + "' (expected transposed|literal)");
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"resolution", c.resolution},
          {"stage_channels", c.encoder.channels},
          {"strides", {2, 2, 2}},
          {"window", c.encoder.window},
          {"mlp_ratio", c.encoder.mlp_ratio},
          {"depth", c.encoder.depth},
          {"C", c.encoder.top_channels},
          {"lambda", c.lambda},
          {"siamese", c.siamese},
          {"mixture_attention", c.mixture_attention},
          {"pairing", to_string(c.pairing)},
          {"patch", c.patch_size()},
          {"decoder_width", c.decoder_width},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.resolution = j.at("resolution").get<std::size_t>();
  c.encoder.channels = j.at("stage_channels").get<std::array<std::size_t, 3>>();
  c.encoder.window = j.at("window").get<std::size_t>();
  c.encoder.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
  c.encoder.depth = j.at("depth").get<std::size_t>();
  c.encoder.top_channels = j.at("C").get<std::size_t>();
  c.lambda = j.at("lambda").get<double>();
  c.siamese = j.at("siamese").get<bool>();
  c.mixture_attention = j.at("mixture_attention").get<bool>();
  c.pairing = parse_pairing(j.at("pairing").get<std::string>());
  c.patch = j.at("patch").get<std::size_t>();
  c.decoder_width = j.at("decoder_width").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

struct PairPrediction {
  PredictionSet anchor;
  PredictionSet reference;
};

/// Encoder (shared, or twin when `siamese` is off), optional mixture
/// attention, and one decoder applied to both frames.
class MastModel {
 public:
  explicit MastModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const Rng rng(cfg_.seed);
    encoder_ = make_encoder(rng, "encoder", cfg_.encoder);
    if (!cfg_.siamese) reference_encoder_ = make_encoder(rng, "reference_encoder", cfg_.encoder);
    if (cfg_.mixture_attention) {
      const std::size_t top = cfg_.top_extent();
      attention_ = make_mixture_attention(cfg_.encoder.top_channels, cfg_.patch_size(), top, top);
    }
    decoder_ = make_decoder(rng, "decoder", cfg_.encoder.channels, cfg_.encoder.top_channels, cfg_.decoder_width);
  }

  const ModelConfig& config() const { return cfg_; }

  /// Frames are 3 x H x W with H == W == resolution.
  PairPrediction forward(const Tensor& anchor, const Tensor& reference) const {
    const Shape expected{EncoderConfig::kInputChannels, cfg_.resolution, cfg_.resolution};
    if (anchor.shape() != expected || reference.shape() != expected) {
      throw DimensionError("forward: frames must be " + shape_str(expected) + ", got " + shape_str(anchor.shape()) +
                           " and " + shape_str(reference.shape()));
    }
    PyramidFeatures fa, fr;
    if (cfg_.siamese) {
      std::tie(fa, fr) = siamese_encode(anchor, reference, encoder_, cfg_.encoder);
    } else {
      fa = encode_single(anchor, encoder_, cfg_.encoder);
      fr = encode_single(reference, *reference_encoder_, cfg_.encoder);
    }
    Tensor za = fa.top, zr = fr.top;
    if (attention_) std::tie(za, zr) = mixture_attention(fa.top, fr.top, *attention_, cfg_.lambda, cfg_.patch_size(), cfg_.pairing);
    return {decode(fa, za, decoder_, cfg_.resolution, cfg_.resolution),
            decode(fr, zr, decoder_, cfg_.resolution, cfg_.resolution)};
  }

  Tensor loss(const FramePair& pair, WeightMapOptions opt = {}) const {
    auto pred = forward(pair.anchor, pair.reference);
    return total_loss(pred.anchor, pred.reference, pair.anchor_mask, pair.reference_mask, opt);
  }

  /// Parameters in a fixed order with dotted names.
  std::vector<std::pair<std::string, Tensor>> named_parameters() {
    std::vector<std::pair<std::string, Tensor>> out;
    visit([&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
    return out;
  }

  std::vector<Tensor> parameters() {
    std::vector<Tensor> out;
    visit([&](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    visit([&](const std::string&, Tensor& t) { n += t.numel(); });
    return n;
  }

  void visit(const ParamVisitor& f) {
    encoder_.visit("encoder", f);
    if (reference_encoder_) reference_encoder_->visit("reference_encoder", f);
    if (attention_) attention_->visit("attention", f);
    decoder_.visit("decoder", f);
  }

  /// Independent copy with its own parameter storage.
  MastModel clone() const {
    MastModel m = *this;
    m.visit([](const std::string&, Tensor& t) { t = t.clone(true); });
    return m;
  }

  /// Overwrites parameter values from `other` (same architecture).
  void copy_parameters_from(MastModel& other) {
    auto src = other.parameters();
    std::size_t i = 0;
    visit([&](const std::string& name, Tensor& t) {
      if (i >= src.size() || src[i].shape() != t.shape()) throw DimensionError("parameter mismatch at " + name);
      std::copy(src[i].data().begin(), src[i].data().end(), t.mutable_data().begin());
      ++i;
    });
  }

  void zero_grad() {
    visit([](const std::string&, Tensor& t) { t.zero_grad(); });
  }

  /// Writes every parameter as consecutive tensor records.
  void save_parameters(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    visit([&](const std::string&, Tensor& t) { write_tensor(os, t); });
    if (!os) throw DataError("write failed for " + path.string());
  }

  void load_parameters(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read " + path.string());
    visit([&](const std::string& name, Tensor& t) {
      auto loaded = read_tensor(is);
      if (loaded.shape() != t.shape()) {
        throw DataError("checkpoint tensor " + name + " has shape " + shape_str(loaded.shape()) + ", expected " +
                        shape_str(t.shape()));
      }
      std::copy(loaded.data().begin(), loaded.data().end(), t.mutable_data().begin());
    });
    if (is.peek() != std::char_traits<char>::eof()) throw DataError("trailing data in " + path.string());
  }

  nlohmann::json manifest() {
    nlohmann::json params = nlohmann::json::array();
    visit([&](const std::string& name, Tensor& t) { params.push_back({{"name", name}, {"shape", t.shape()}}); });
    return {{"config", to_json(cfg_)}, {"parameters", params}};
  }

 private:
  ModelConfig cfg_;
  EncoderParams encoder_;
  std::optional<EncoderParams> reference_encoder_;
  std::optional<MixtureAttentionWeights> attention_;
  DecoderParams decoder_;
};

}  // namespace mast
