#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace mast;
using namespace mast::testing;

namespace {

PyramidFeatures pyramid(Rng& rng, std::size_t top = 4, double lo = -1, double hi = 1, bool grad = false) {
  PyramidFeatures p;
  const std::array<std::size_t, 3> ch{16, 32, 64};
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t ext = top << (2 - s);
    p.levels.push_back(random_tensor(rng, {1, ch[s], ext, ext}, lo, hi, grad));
  }
  p.top = random_tensor(rng, {1, 32, top, top}, lo, hi, grad);
  return p;
}

Tensor square_mask(std::size_t size, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1) {
  auto m = Tensor::zeros({1, size, size});
  auto d = m.mutable_data();
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) d[y * size + x] = 1.0;
  return m;
}

// logits +-50 agreeing with the mask
Tensor perfect_logits(const Tensor& mask) {
  std::vector<double> v(mask.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask[i] > 0.5 ? 50.0 : -50.0;
  return Tensor({1, 1, mask.dim(1), mask.dim(2)}, v, true);
}

PredictionSet constant_set(const Tensor& logits) {
  PredictionSet s;
  for (auto& m : s.maps) m = logits;
  return s;
}

std::vector<Tensor> decoder_params(DecoderParams& d) {
  std::vector<Tensor> out;
  d.visit("d", [&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

}  // namespace

TEST(Decode, ZeroFeaturesZeroWeightsGiveZeroLogits) {
  auto d = make_decoder(Rng(1), "decoder", {16, 32, 64}, 32, 16);
  for (auto& t : decoder_params(d)) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
  PyramidFeatures p;
  for (std::size_t s = 0; s < 3; ++s) p.levels.push_back(Tensor::zeros({1, std::size_t{16} << s, std::size_t{32} >> s, std::size_t{32} >> s}));
  auto out = decode(p, Tensor::zeros({1, 32, 8, 8}), d, 64, 64);
  for (const auto& m : out.maps) {
    EXPECT_EQ(m.shape(), (Shape{1, 1, 64, 64}));
    for (double v : m.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Decode, FourMapsAtInputResolution) {
  Rng rng(2);
  auto d = make_decoder(Rng(3), "decoder", {16, 32, 64}, 32, 16);
  for (std::size_t top : {2, 4, 8}) {
    auto p = pyramid(rng, top);
    auto out = decode(p, p.top, d, 8 * top, 8 * top);
    ASSERT_EQ(out.maps.size(), 4u);
    for (const auto& m : out.maps) EXPECT_EQ(m.shape(), (Shape{1, 1, 8 * top, 8 * top}));
    EXPECT_EQ(out.native[3].shape(), (Shape{1, 1, 2 * top, 2 * top}));
    EXPECT_EQ(out.native[0].shape(), (Shape{1, 1, 4 * top, 4 * top}));
  }
}

TEST(Decode, Errors) {
  Rng rng(4);
  auto d = make_decoder(Rng(5), "decoder", {16, 32, 64}, 32, 16);
  auto p = pyramid(rng);
  auto short_pyr = p;
  short_pyr.levels.pop_back();
  EXPECT_THROW(decode(short_pyr, p.top, d, 32, 32), DimensionError);
  EXPECT_THROW(decode(p, Tensor::zeros({1, 32, 2, 2}), d, 32, 32), DimensionError);
}

TEST(Decode, RefinementTelescopes) {
  Rng rng(6);
  auto d = make_decoder(Rng(7), "decoder", {16, 32, 64}, 32, 16);
  auto p = pyramid(rng);
  auto out = decode(p, p.top, d, 32, 32);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& fine = out.native[i];
    auto prior = upsample_bilinear(out.native[i + 1], fine.dim(2), fine.dim(3));
    for (std::size_t k = 0; k < fine.numel(); ++k) EXPECT_NEAR(fine[k], prior[k] + out.residuals[i][k], 1e-12);
  }
}

TEST(Decode, SharedDecoderSwapsWithInputs) {
  Rng rng(8);
  auto d = make_decoder(Rng(9), "decoder", {16, 32, 64}, 32, 16);
  auto pa = pyramid(rng), pr = pyramid(rng);
  auto a1 = decode(pa, pa.top, d, 32, 32), r1 = decode(pr, pr.top, d, 32, 32);
  auto r2 = decode(pa, pa.top, d, 32, 32), a2 = decode(pr, pr.top, d, 32, 32);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a1.maps[i].values(), r2.maps[i].values());
    EXPECT_EQ(r1.maps[i].values(), a2.maps[i].values());
  }
}

TEST(Decode, GradientsMatchFiniteDifferences) {
  Rng rng(10);
  auto d = make_decoder(Rng(11), "decoder", {16, 32, 64}, 32, 16);
  auto p = pyramid(rng, 2, -1, 1, true);
  auto params = decoder_params(d);
  for (auto& l : p.levels) params.push_back(l);
  params.push_back(p.top);
  auto proj = random_tensor(rng, {1, 1, 16, 16}, -1, 1, false);
  auto f = [&] {
    auto out = decode(p, p.top, d, 16, 16);
    Tensor total = sum(hadamard(out.maps[0], proj));
    for (std::size_t i = 1; i < 4; ++i) total = add(total, sum(hadamard(out.maps[i], out.maps[i])));
    return total;
  };
  EXPECT_LT(grad_check(params, f, sample_entries(params, 200, rng)), 1e-4);
}

TEST(WeightMap, ConstantMaskGivesOnes) {
  for (double fill : {0.0, 1.0}) {
    auto w = weight_map(Tensor::full({1, 12, 12}, fill));
    for (double v : w.values()) EXPECT_EQ(v, 1.0);
  }
}

TEST(WeightMap, SingleForegroundPixel) {
  auto w = weight_map(square_mask(7, 3, 4, 3, 4));
  EXPECT_NEAR(w[3 * 7 + 3], 1.0 + 5.0 * (1.0 - 1.0 / 49.0), 1e-12);
  EXPECT_NEAR(w[3 * 7 + 3], 5.897959183673469, 1e-12);
}

TEST(WeightMap, MatchesDirectAverage) {
  Rng rng(12);
  const std::size_t n = 10;
  auto m = Tensor::zeros({1, n, n});
  auto d = m.mutable_data();
  for (auto& v : d) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  auto w = weight_map(m);
  auto clamp = [&](long v) { return static_cast<std::size_t>(std::clamp<long>(v, 0, n - 1)); };
  for (long y = 0; y < static_cast<long>(n); ++y)
    for (long x = 0; x < static_cast<long>(n); ++x) {
      double avg = 0;
      for (long dy = -3; dy <= 3; ++dy)
        for (long dx = -3; dx <= 3; ++dx) avg += m[clamp(y + dy) * n + clamp(x + dx)];
      avg /= 49.0;
      EXPECT_NEAR(w[y * n + x], 1.0 + 5.0 * std::abs(avg - m[y * n + x]), 1e-12);
    }
}

TEST(WeightMap, BoundedOneToSix) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = Tensor::zeros({1, 16, 16});
    for (auto& v : m.mutable_data()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    for (double v : weight_map(m).values()) {
      EXPECT_GE(v, 1.0);
      EXPECT_LE(v, 6.0);
    }
  }
}

TEST(Loss, PerfectPredictionIsNearZero) {
  auto y = square_mask(16, 4, 12, 2, 9);
  auto logits = perfect_logits(y);
  auto w = Tensor::full(y.shape(), 1.0);
  EXPECT_LT(weighted_bce(logits, y, w).item(), 1e-12);
  EXPECT_LT(weighted_iou(logits, y, w).item(), 1e-12);
}

TEST(Loss, ZeroLogitsHalfForegroundGiveLn2) {
  auto y = square_mask(8, 0, 4, 0, 8);
  auto w = Tensor::full(y.shape(), 1.0);
  EXPECT_NEAR(weighted_bce(Tensor::zeros({1, 1, 8, 8}), y, w).item(), std::log(2.0), 1e-12);
  // iou at p = 0.5: 1 - (16 + 1) / (48 + 1)
  EXPECT_NEAR(weighted_iou(Tensor::zeros({1, 1, 8, 8}), y, w).item(), 1.0 - 17.0 / 49.0, 1e-12);
}

TEST(Loss, BceMatchesNaiveSum) {
  Rng rng(14);
  auto logits = random_tensor(rng, {1, 1, 6, 6}, -4, 4, false);
  auto y = square_mask(6, 1, 4, 2, 5);
  auto w = weight_map(y);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < 36; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits[i]));
    num += w[i] * -(y[i] * std::log(p) + (1 - y[i]) * std::log(1 - p));
    den += w[i];
  }
  EXPECT_NEAR(weighted_bce(logits, y, w).item(), num / den, 1e-12);
}

TEST(Loss, UniformWeightScaleInvariance) {
  Rng rng(15);
  auto logits = random_tensor(rng, {1, 1, 8, 8}, -3, 3, false);
  auto y = square_mask(8, 2, 6, 1, 5);
  auto w = weight_map(y);
  auto w2 = Tensor(w.shape(), w.values());
  for (auto& v : w2.mutable_data()) v *= 2.0;
  EXPECT_NEAR(weighted_bce(logits, y, w).item(), weighted_bce(logits, y, w2).item(), 1e-12);
  // the +1 smoothing makes iou scale-invariant only in the large-sum limit
  auto big = Tensor(w.shape(), w.values()), bigger = Tensor(w.shape(), w.values());
  for (auto& v : big.mutable_data()) v *= 1e9;
  for (auto& v : bigger.mutable_data()) v *= 2e9;
  EXPECT_NEAR(weighted_iou(logits, y, big).item(), weighted_iou(logits, y, bigger).item(), 1e-9);
}

TEST(Loss, EmptyMaskStaysFinite) {
  auto y = Tensor::zeros({1, 8, 8});
  auto l = weighted_iou(Tensor::full({1, 1, 8, 8}, 3.0), y, weight_map(y));
  EXPECT_TRUE(std::isfinite(l.item()));
}

TEST(TotalLoss, PerfectMapsNearZero) {
  auto ya = square_mask(16, 3, 9, 3, 9), yr = square_mask(16, 5, 12, 4, 13);
  EXPECT_LT(total_loss(constant_set(perfect_logits(ya)), constant_set(perfect_logits(yr)), ya, yr).item(), 1e-3);
}

TEST(TotalLoss, SymmetricUnderFrameSwap) {
  Rng rng(16);
  PredictionSet a, r;
  for (std::size_t i = 0; i < 4; ++i) {
    a.maps[i] = random_tensor(rng, {1, 1, 16, 16}, -3, 3, false);
    r.maps[i] = random_tensor(rng, {1, 1, 16, 16}, -3, 3, false);
  }
  auto ya = square_mask(16, 3, 9, 3, 9), yr = square_mask(16, 5, 12, 4, 13);
  EXPECT_NEAR(total_loss(a, r, ya, yr).item(), total_loss(r, a, yr, ya).item(), 1e-12);
}

TEST(TotalLoss, EqualsSumOfEightHybridTerms) {
  Rng rng(17);
  PredictionSet a, r;
  for (std::size_t i = 0; i < 4; ++i) {
    a.maps[i] = random_tensor(rng, {1, 1, 16, 16}, -3, 3, false);
    r.maps[i] = random_tensor(rng, {1, 1, 16, 16}, -3, 3, false);
  }
  auto ya = square_mask(16, 3, 9, 3, 9), yr = square_mask(16, 5, 12, 4, 13);
  auto wa = weight_map(ya), wr = weight_map(yr);
  double want = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    want += weighted_bce(a.maps[i], ya, wa).item() + weighted_iou(a.maps[i], ya, wa).item();
    want += weighted_bce(r.maps[i], yr, wr).item() + weighted_iou(r.maps[i], yr, wr).item();
  }
  const double got = total_loss(a, r, ya, yr).item();
  EXPECT_NEAR(got, want, 1e-12);
  EXPECT_GE(got, 0.0);
}

TEST(TotalLoss, GradientWrtLogitsMatchesFiniteDifferences) {
  Rng rng(18);
  PredictionSet a, r;
  std::vector<Tensor> params;
  for (std::size_t i = 0; i < 4; ++i) {
    a.maps[i] = random_tensor(rng, {1, 1, 8, 8}, -3, 3);
    r.maps[i] = random_tensor(rng, {1, 1, 8, 8}, -3, 3);
    params.push_back(a.maps[i]);
    params.push_back(r.maps[i]);
  }
  auto ya = square_mask(8, 1, 5, 2, 6), yr = square_mask(8, 3, 8, 0, 4);
  EXPECT_LT(grad_check_all(params, [&] { return total_loss(a, r, ya, yr); }), 1e-4);
}

TEST(TotalLoss, EveryLevelTrainsTheEncoder) {
  Rng rng(19);
  ModelConfig cfg;
  cfg.resolution = 16;
  MastModel model(cfg);
  FramePair pair{random_tensor(rng, {3, 16, 16}, 0, 1, false), random_tensor(rng, {3, 16, 16}, 0, 1, false),
                 square_mask(16, 3, 10, 4, 12), square_mask(16, 5, 12, 2, 9)};
  auto encoder_grads = [&](int skip) {
    model.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    auto pred = model.forward(pair.anchor, pair.reference);
    auto wa = weight_map(pair.anchor_mask), wr = weight_map(pair.reference_mask);
    Tensor total;
    for (int i = 0; i < 4; ++i) {
      if (i == skip) continue;
      auto term = add(hybrid_loss(pred.anchor.maps[i], pair.anchor_mask, wa), hybrid_loss(pred.reference.maps[i], pair.reference_mask, wr));
      total = total.defined() ? add(total, term) : term;
    }
    backward(total);
    std::vector<double> g;
    for (auto& [name, t] : model.named_parameters())
      if (name.rfind("encoder.", 0) == 0 && t.has_grad()) g.insert(g.end(), t.grad().begin(), t.grad().end());
    return g;
  };
  const auto full = encoder_grads(-1);
  ASSERT_FALSE(full.empty());
  for (int skip = 0; skip < 4; ++skip) {
    const auto partial = encoder_grads(skip);
    double diff = 0;
    for (std::size_t i = 0; i < full.size(); ++i) diff = std::max(diff, std::abs(full[i] - partial[i]));
    EXPECT_GT(diff, 1e-9) << "level " << skip;
  }
}
