#include <gtest/gtest.h>

#include <fstream>

#include "mast/data/dataset.hpp"
#include "test_util.hpp"

using namespace mast;
using namespace mast::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("mast_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

VideoClip tiny_clip(std::size_t frames, const std::string& id = "c") {
  VideoClip c;
  c.id = id;
  for (std::size_t i = 0; i < frames; ++i) {
    c.frames.push_back(Tensor::full({3, 4, 4}, static_cast<double>(i) / 255.0));
    c.masks.push_back(Tensor::zeros({1, 4, 4}));
  }
  return c;
}

SyntheticOptions small_options(Difficulty d = Difficulty::easy) {
  SyntheticOptions o;
  o.frames = 12;
  o.difficulty = d;
  return o;
}

}  // namespace

TEST(Synthetic, SameSeedIsBitIdentical) {
  for (auto d : {Difficulty::easy, Difficulty::hard}) {
    auto a = generate_synthetic_clip(7, small_options(d)), b = generate_synthetic_clip(7, small_options(d));
    ASSERT_EQ(a.clip.size(), 12u);
    for (std::size_t t = 0; t < a.clip.size(); ++t) {
      EXPECT_EQ(a.clip.frames[t].values(), b.clip.frames[t].values());
      EXPECT_EQ(a.clip.masks[t].values(), b.clip.masks[t].values());
    }
  }
  auto c = generate_synthetic_clip(8, small_options());
  EXPECT_NE(c.clip.frames[0].values(), generate_synthetic_clip(7, small_options()).clip.frames[0].values());
}

TEST(Synthetic, MaskAreaBetweenZeroAndQuarter) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = generate_synthetic_clip(seed, small_options(seed % 2 ? Difficulty::hard : Difficulty::easy));
    for (const auto& m : s.clip.masks) {
      double area = 0;
      for (double v : m.values()) area += v;
      EXPECT_GT(area, 0.0);
      EXPECT_LT(area, 0.25 * 64 * 64);
    }
  }
}

TEST(Synthetic, PixelsOnEightBitGrid) {
  auto s = generate_synthetic_clip(3, small_options(Difficulty::hard));
  for (const auto& f : s.clip.frames)
    for (double v : f.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      EXPECT_EQ(std::round(v * 255.0) / 255.0, v);
    }
}

TEST(Synthetic, TrajectoryReplayMatchesMasksAndSpeed) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto opt = small_options();
    opt.frames = 30;
    auto s = generate_synthetic_clip(seed, opt);
    ASSERT_EQ(s.trajectory.size(), 30u);
    for (std::size_t t = 0; t < 30; ++t) {
      // masks are exactly the union of the analytic ellipses at pixel centers
      for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 64; ++x) {
          bool inside = false;
          for (const auto& e : s.trajectory[t]) inside = inside || e.contains(x + 0.5, y + 0.5);
          ASSERT_EQ(s.clip.masks[t][y * 64 + x], inside ? 1.0 : 0.0);
        }
      if (t == 0) continue;
      for (std::size_t k = 0; k < s.trajectory[t].size(); ++k) {
        const auto &a = s.trajectory[t - 1][k], &b = s.trajectory[t][k];
        EXPECT_LE(std::hypot(b.cx - a.cx, b.cy - a.cy), opt.max_speed + 1e-12);
      }
    }
  }
}

TEST(Synthetic, DegenerateOptionsRejected) {
  auto o = small_options();
  o.height = 8;
  EXPECT_THROW(generate_synthetic_clip(1, o), DataError);
  o = small_options();
  o.frames = 0;
  EXPECT_THROW(generate_synthetic_clip(1, o), DataError);
}

TEST(Synthetic, EveryFourthEasyClipIsHard) {
  auto opt = small_options();
  opt.frames = 3;
  auto set = generate_synthetic_dataset(5, 8, opt);
  ASSERT_EQ(set.size(), 8u);
  EXPECT_EQ(set[0].id, "clip000");
  const Rng root(5);
  for (std::size_t i = 0; i < 8; ++i) {
    auto o = opt;
    if (i % 4 == 3) o.difficulty = Difficulty::hard;
    auto want = generate_synthetic_clip(root.substream(i).next_u64(), o);
    EXPECT_EQ(set[i].frames[1].values(), want.clip.frames[1].values()) << i;
  }
}

TEST(NaturalSort, DigitRunsCompareByValue) {
  std::vector<std::string> names{"frame10", "frame2", "frame1", "a", "frame02b", "frame100"};
  std::sort(names.begin(), names.end(), natural_less);
  EXPECT_EQ(names, (std::vector<std::string>{"a", "frame1", "frame2", "frame02b", "frame10", "frame100"}));
}

TEST(Dataset, ExportImportRoundTripsBitExactly) {
  TempDir dir("roundtrip");
  auto opt = small_options(Difficulty::hard);
  opt.frames = 4;
  auto clips = generate_synthetic_dataset(11, 3, opt);
  export_dataset(dir.path, clips);
  auto back = load_dataset(dir.path);
  ASSERT_EQ(back.size(), clips.size());
  for (std::size_t c = 0; c < clips.size(); ++c) {
    EXPECT_EQ(back[c].id, clips[c].id);
    ASSERT_EQ(back[c].size(), clips[c].size());
    for (std::size_t t = 0; t < clips[c].size(); ++t) {
      EXPECT_EQ(back[c].frames[t].values(), clips[c].frames[t].values());
      EXPECT_EQ(back[c].masks[t].values(), clips[c].masks[t].values());
    }
  }
}

TEST(Dataset, EmptyRootGivesNoClips) {
  TempDir dir("empty");
  EXPECT_TRUE(load_dataset(dir.path).empty());
  EXPECT_THROW(load_dataset(dir.path / "missing"), DataError);
}

TEST(Dataset, NaturalFrameOrderAndMaskBinarization) {
  TempDir dir("order");
  const fs::path clip = dir.path / "v1";
  fs::create_directories(clip / "Frame");
  fs::create_directories(clip / "GT");
  for (int i : {10, 2, 1}) {
    write_image(clip / "Frame" / ("f" + std::to_string(i) + ".png"), cv::Mat(3, 3, CV_8UC3, cv::Scalar(i, i, i)));
    cv::Mat m(3, 3, CV_8UC1, cv::Scalar(127));
    m.at<std::uint8_t>(0, 0) = 128;
    write_image(clip / "GT" / ("f" + std::to_string(i) + ".png"), m);
  }
  auto c = load_clip(clip);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.frames[0][0], 1.0 / 255.0);
  EXPECT_EQ(c.frames[1][0], 2.0 / 255.0);
  EXPECT_EQ(c.frames[2][0], 10.0 / 255.0);
  EXPECT_EQ(c.masks[0][0], 1.0);
  EXPECT_EQ(c.masks[0][1], 0.0);
}

TEST(Dataset, MissingOrExtraMaskIsAnError) {
  TempDir dir("mismatch");
  const fs::path clip = dir.path / "v1";
  fs::create_directories(clip / "Frame");
  fs::create_directories(clip / "GT");
  write_image(clip / "Frame" / "a.png", cv::Mat(2, 2, CV_8UC3, cv::Scalar(0)));
  try {
    load_clip(clip);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("a.png"), std::string::npos);
  }
  write_image(clip / "GT" / "a.png", cv::Mat(2, 2, CV_8UC1, cv::Scalar(0)));
  write_image(clip / "GT" / "b.png", cv::Mat(2, 2, CV_8UC1, cv::Scalar(0)));
  EXPECT_THROW(load_clip(clip), DataError);
}

TEST(Dataset, UnreadableImageNamesThePath) {
  TempDir dir("unreadable");
  const fs::path clip = dir.path / "v1";
  fs::create_directories(clip / "Frame");
  fs::create_directories(clip / "GT");
  std::ofstream(clip / "Frame" / "a.png") << "not an image";
  write_image(clip / "GT" / "a.png", cv::Mat(2, 2, CV_8UC1, cv::Scalar(0)));
  try {
    load_clip(clip);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("a.png"), std::string::npos);
  }
}

TEST(Dataset, ResizeKeepsMasksBinary) {
  auto s = generate_synthetic_clip(2, small_options());
  auto r = resize_clip(s.clip, 32);
  EXPECT_EQ(r.height(), 32u);
  EXPECT_EQ(r.size(), s.clip.size());
  for (const auto& m : r.masks)
    for (double v : m.values()) EXPECT_TRUE(v == 0.0 || v == 1.0);
  EXPECT_NO_THROW(r.validate());
}

TEST(Sampler, FiveFramesDeltaTwo) {
  auto pairs = sample_pairs(tiny_clip(5), {});
  ASSERT_EQ(pairs.size(), 3u);
  const std::vector<std::pair<std::size_t, std::size_t>> want{{2, 0}, {3, 1}, {4, 2}};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(pairs[i].t_anchor, want[i].first);
    EXPECT_EQ(pairs[i].t_reference, want[i].second);
    EXPECT_EQ(pairs[i].anchor[0], static_cast<double>(want[i].first) / 255.0);
    EXPECT_EQ(pairs[i].reference[0], static_cast<double>(want[i].second) / 255.0);
  }
}

TEST(Sampler, CountAndIntervalContract) {
  for (std::size_t len = 0; len < 9; ++len)
    for (std::size_t delta = 1; delta < 6; ++delta) {
      SamplerConfig cfg;
      cfg.delta = delta;
      cfg.shuffle = len % 2 == 1;
      cfg.seed = len;
      std::vector<SkipRecord> skipped;
      auto pairs = sample_pairs(tiny_clip(len), cfg, &skipped);
      EXPECT_EQ(pairs.size(), len > delta ? len - delta : 0);
      EXPECT_EQ(skipped.size(), len > delta ? 0u : 1u);
      for (const auto& p : pairs) EXPECT_EQ(p.t_anchor - p.t_reference, delta);
    }
  SamplerConfig one;
  one.delta = 1;
  EXPECT_EQ(sample_pairs(tiny_clip(2), one).size(), 1u);
  one.delta = 0;
  EXPECT_THROW(sample_pairs(tiny_clip(2), one), ConfigError);
}

TEST(Sampler, ShuffleIsSeededPermutation) {
  SamplerConfig cfg;
  cfg.shuffle = true;
  cfg.seed = 9;
  auto a = sample_pairs(tiny_clip(20), cfg), b = sample_pairs(tiny_clip(20), cfg);
  std::vector<std::size_t> ta, tb;
  for (const auto& p : a) ta.push_back(p.t_anchor);
  for (const auto& p : b) tb.push_back(p.t_anchor);
  EXPECT_EQ(ta, tb);
  std::vector<std::size_t> sorted = ta;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> all(18);
  std::iota(all.begin(), all.end(), 2);
  EXPECT_EQ(sorted, all);
  EXPECT_NE(ta, all);
}

TEST(Sampler, EnumeratePairsAcrossClips) {
  std::vector<VideoClip> clips{tiny_clip(4, "a"), tiny_clip(2, "b"), tiny_clip(3, "c")};
  std::vector<SkipRecord> skipped;
  auto refs = enumerate_pairs(clips, 2, &skipped);
  ASSERT_EQ(refs.size(), 3u);
  EXPECT_EQ(skipped.size(), 1u);
  EXPECT_EQ(skipped[0].clip, "b");
  auto p = make_pair(clips, refs[2], 2);
  EXPECT_EQ(p.t_anchor, 2u);
  EXPECT_EQ(p.t_reference, 0u);
}

TEST(Augment, FlipIsInvolutionAndMirrors) {
  Rng rng(1);
  auto t = mast::testing::random_tensor(rng, {3, 4, 5}, 0, 1, false);
  auto f = flip_horizontal(t);
  EXPECT_EQ(f[0], t[4]);
  EXPECT_EQ(flip_horizontal(f).values(), t.values());
  auto pair = sample_pairs(tiny_clip(3), {})[0];
  auto fp = flip_pair(pair);
  EXPECT_EQ(fp.t_anchor, pair.t_anchor);
  EXPECT_EQ(flip_pair(fp).anchor_mask.values(), pair.anchor_mask.values());
}
