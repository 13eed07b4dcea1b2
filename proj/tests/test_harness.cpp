#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "mast/harness/ablate.hpp"
#include "mast/harness/count.hpp"
#include "test_util.hpp"

using namespace mast;
using namespace mast::harness;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("mast_harness_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

RunConfig tiny_config(const fs::path& out) {
  RunConfig c;
  c.model.resolution = 16;
  c.synthetic_clips = 3;
  c.synthetic_frames = 5;
  c.eval_clips = 1;
  c.epochs = 3;
  c.out = out.string();
  return c;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

TEST(Config, ParsesCommentsQuotesAndWhitespace) {
  std::istringstream is("# comment\n lambda = 0.3 \nsiamese=off\nout = \"a # b\"  # trailing\n\nstage_channels = 8,16,24\n");
  auto c = parse_config(is);
  EXPECT_EQ(c.model.lambda, 0.3);
  EXPECT_FALSE(c.model.siamese);
  EXPECT_EQ(c.out, "a # b");
  EXPECT_EQ(c.model.encoder.channels, (std::array<std::size_t, 3>{8, 16, 24}));
}

TEST(Config, Errors) {
  auto parse = [](const std::string& s) {
    std::istringstream is(s);
    return parse_config(is);
  };
  EXPECT_THROW(parse("bogus = 1\n"), ConfigError);
  EXPECT_THROW(parse("lambda\n"), ConfigError);
  EXPECT_THROW(parse("delta = two\n"), ConfigError);
  EXPECT_THROW(parse("siamese = maybe\n"), ConfigError);
  auto c = parse("lambda = 1.5\n");
  EXPECT_THROW(c.validate(), ConfigError);
  c = parse("resolution = 60\n");
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.txt"), ConfigError);
}

TEST(Config, CanonicalTextRoundTrips) {
  RunConfig c;
  c.model.lambda = 0.3;
  c.delta = 5;
  c.difficulty = "hard";
  c.out = "somewhere";
  std::istringstream is(canonical_text(c));
  auto back = parse_config(is);
  EXPECT_EQ(canonical_text(back), canonical_text(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, HashIsFnvOfCanonicalTextWithoutRunLocation) {
  RunConfig c;
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  char want[17];
  std::snprintf(want, sizeof want, "%016llx", static_cast<unsigned long long>(fnv1a(canonical_text(c, false))));
  EXPECT_EQ(config_hash(c), want);
  auto moved = c;
  moved.out = "elsewhere";
  moved.epochs = 99;
  EXPECT_EQ(config_hash(moved), config_hash(c));
  auto changed = c;
  changed.model.lambda = 0.5;
  EXPECT_NE(config_hash(changed), config_hash(c));
  EXPECT_EQ(canonical_text(c, false).find("out ="), std::string::npos);
}

TEST(Schedule, HalvesEveryTenEpochs) {
  RunConfig c;
  EXPECT_EQ(learning_rate(c, 0), 1e-3);
  EXPECT_EQ(learning_rate(c, 9), 1e-3);
  EXPECT_EQ(learning_rate(c, 10), 5e-4);
  EXPECT_EQ(learning_rate(c, 25), 2.5e-4);
}

TEST(Checkpoint, RoundTripAndConfigMismatch) {
  TempDir dir("ckpt");
  auto cfg = tiny_config(dir.path);
  MastModel a(cfg.model);
  Rng rng(3);
  for (auto& p : a.parameters())
    for (auto& v : p.mutable_data()) v = rng.uniform(-1, 1);
  AdamState opt;
  opt.step = 7;
  for (auto& p : a.parameters()) {
    opt.m.emplace_back(p.numel(), 0.25);
    opt.v.emplace_back(p.numel(), 0.5);
  }
  CheckpointInfo info{4, 0.75, 2, config_hash(cfg)};
  RunLog log;
  log.epochs.push_back({0, 1e-3, 1.5, 12, EvalSummary{0.5, 0.6, 0.7, 0.1, 0.2, 0.3, 8}});
  save_checkpoint(dir.path / "ck", a, opt, cfg, info, log);

  auto other = cfg;
  other.model.seed = 99;
  MastModel b(other.model);
  AdamState opt_b;
  RunLog log_b;
  auto got = load_checkpoint(dir.path / "ck", b, cfg, &opt_b, &log_b);
  EXPECT_EQ(got.epoch, 4u);
  EXPECT_EQ(got.best_dice, 0.75);
  EXPECT_EQ(opt_b.step, 7);
  EXPECT_EQ(opt_b.v[3][0], 0.5);
  ASSERT_EQ(log_b.epochs.size(), 1u);
  EXPECT_EQ(log_b.epochs[0].eval->s_measure, 0.6);
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].values(), pb[i].values());

  auto changed = cfg;
  changed.model.lambda = 0.3;
  EXPECT_THROW(load_checkpoint(dir.path / "ck", b, changed), ConfigError);
  EXPECT_THROW(load_checkpoint(dir.path / "missing", b, cfg), DataError);
}

TEST(Count, ParamsMatchModelAndCheckpointTensors) {
  TempDir dir("count");
  for (bool siamese : {false, true})
    for (bool ma : {false, true}) {
      ModelConfig cfg;
      cfg.siamese = siamese;
      cfg.mixture_attention = ma;
      MastModel m(cfg);
      const auto cost = count_params_flops(cfg);
      EXPECT_EQ(cost.params, m.parameter_count());
      std::uint64_t from_manifest = 0;
      const auto manifest = m.manifest();
      for (const auto& p : manifest["parameters"]) {
        std::uint64_t n = 1;
        for (auto d : p["shape"]) n *= d.get<std::uint64_t>();
        from_manifest += n;
      }
      EXPECT_EQ(cost.params, from_manifest);
      EXPECT_EQ(cost.flops(), 2 * cost.macs);
    }
}

TEST(Count, MacsMatchInstrumentedForward) {
  Rng rng(4);
  for (bool siamese : {false, true})
    for (bool ma : {false, true}) {
      ModelConfig cfg;
      cfg.siamese = siamese;
      cfg.mixture_attention = ma;
      MastModel m(cfg);
      auto a = mast::testing::random_tensor(rng, {3, 64, 64}, 0, 1, false), r = mast::testing::random_tensor(rng, {3, 64, 64}, 0, 1, false);
      NoGradScope no_grad;
      mast::detail::mac_counter() = 0;
      m.forward(a, r);
      EXPECT_EQ(mast::detail::mac_counter(), count_params_flops(cfg).macs);
    }
}

TEST(Count, DenseLayerClosedForm) {
  EXPECT_EQ(harness::detail::linear_params(7, 5), 7u * 5u + 5u);
  auto lin = make_linear(Rng(1), "fc", 7, 5);
  std::size_t n = 0;
  lin.visit("fc", [&](const std::string&, Tensor& t) { n += t.numel(); });
  EXPECT_EQ(n, 40u);
}

TEST(Count, DoublingWidthsRoughlyQuadruplesFlops) {
  ModelConfig base;
  auto wide = base;
  for (auto& c : wide.encoder.channels) c *= 2;
  wide.encoder.top_channels *= 2;
  wide.decoder_width *= 2;
  const double ratio = static_cast<double>(count_params_flops(wide).flops()) / static_cast<double>(count_params_flops(base).flops());
  EXPECT_GT(ratio, 3.5);
  EXPECT_LT(ratio, 4.0);
}

TEST(Ablation, GridsMirrorTheTables) {
  auto labels = [](AblationAxis a) {
    std::vector<std::string> out;
    for (const auto& g : ablation_grid(a)) out.push_back(g.label);
    return out;
  };
  EXPECT_EQ(labels(AblationAxis::components), (std::vector<std::string>{"baseline", "+Siamese", "+M-A", "full"}));
  EXPECT_EQ(labels(AblationAxis::lambda), (std::vector<std::string>{"0", "0.3", "0.5", "0.7", "1"}));
  EXPECT_EQ(labels(AblationAxis::delta), (std::vector<std::string>{"1", "2", "3", "5"}));
  RunConfig c;
  ablation_grid(AblationAxis::components)[0].apply(c);
  EXPECT_FALSE(c.model.siamese);
  EXPECT_FALSE(c.model.mixture_attention);
  ablation_grid(AblationAxis::lambda)[1].apply(c);
  EXPECT_EQ(c.model.lambda, 0.3);
  ablation_grid(AblationAxis::delta)[3].apply(c);
  EXPECT_EQ(c.delta, 5u);
  EXPECT_THROW(parse_axis("width"), ConfigError);
}

TEST(Ablation, CsvHasRowPerRunAndMeans) {
  std::vector<AblationRow> rows{{"full", 1, EvalSummary{0.5, 0.25, 1.0}}, {"full", 2, EvalSummary{0.7, 0.75, 0.5}}};
  std::ostringstream os;
  write_ablation_csv(os, AblationAxis::components, rows);
  EXPECT_EQ(os.str(), "components,seed,s_measure,dice,sensitivity\nfull,1,0.25,0.5,1\nfull,2,0.75,0.69999999999999996,0.5\nfull,mean,0.5,0.59999999999999998,0.75\n");
}

TEST(Train, DeterministicFilesLossDropsAndResumeContinues) {
  TempDir dir("train");
  auto cfg_a = tiny_config(dir.path / "a");
  auto cfg_b = tiny_config(dir.path / "b");
  const auto data = prepare_data(cfg_a);
  ASSERT_EQ(data.train.size(), 3u);
  ASSERT_EQ(data.eval.size(), 1u);

  MastModel ma(cfg_a.model), mb(cfg_b.model);
  auto ra = train(cfg_a, data, ma);
  train(cfg_b, data, mb);
  for (const char* f : {"runlog.jsonl", "last/params.bin", "last/optimizer.bin", "last/manifest.json", "best/params.bin"}) {
    EXPECT_EQ(slurp(dir.path / "a" / f), slurp(dir.path / "b" / f)) << f;
  }
  ASSERT_EQ(ra.log.epochs.size(), 3u);
  EXPECT_LT(ra.log.epochs[2].train_loss, ra.log.epochs[0].train_loss);
  EXPECT_EQ(ra.log.epochs[0].steps, 9u);
  const auto log = read_runlog(dir.path / "a" / "runlog.jsonl");
  EXPECT_EQ(log.config_hash, config_hash(cfg_a));
  ASSERT_EQ(log.epochs.size(), 3u);
  EXPECT_EQ(log.epochs[1].train_loss, ra.log.epochs[1].train_loss);

  // stop after one epoch, then resume to three
  auto cfg_c = tiny_config(dir.path / "c");
  cfg_c.epochs = 1;
  MastModel mc(cfg_c.model);
  train(cfg_c, data, mc);
  cfg_c.epochs = 3;
  MastModel mc2(cfg_c.model);
  TrainOptions resume;
  resume.resume = true;
  auto rc = train(cfg_c, data, mc2, resume);
  ASSERT_EQ(rc.log.epochs.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) EXPECT_EQ(rc.log.epochs[e].train_loss, ra.log.epochs[e].train_loss) << e;
  EXPECT_EQ(slurp(dir.path / "c" / "last/params.bin"), slurp(dir.path / "a" / "last/params.bin"));
}

TEST(Train, NonFiniteLossAbortsWithDiagnostic) {
  TempDir dir("nan");
  auto cfg = tiny_config(dir.path);
  cfg.epochs = 1;
  const auto data = prepare_data(cfg);
  MastModel m(cfg.model);
  m.parameters().back().mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainOptions opt;
  opt.write_files = false;
  try {
    train(cfg, data, m, opt);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lr"), std::string::npos) << msg;
    EXPECT_NE(msg.find("grad norm"), std::string::npos) << msg;
  }
}

TEST(Train, ComponentFlagsSelectArchitecture) {
  ModelConfig cfg;
  cfg.siamese = false;
  cfg.mixture_attention = false;
  MastModel m(cfg);
  bool twin = false, attention = false;
  m.visit([&](const std::string& name, Tensor&) {
    twin = twin || name.rfind("reference_encoder.", 0) == 0;
    attention = attention || name.rfind("attention.", 0) == 0;
  });
  EXPECT_TRUE(twin);
  EXPECT_FALSE(attention);
}

TEST(Evaluate, DeterministicCsvsAndPngRoundTrip) {
  TempDir dir("eval");
  auto cfg = tiny_config(dir.path);
  const auto data = prepare_data(cfg);
  MastModel m(cfg.model);
  evaluate_to_dir(m, data.eval, cfg.delta, dir.path / "one", true);
  evaluate_to_dir(m, data.eval, cfg.delta, dir.path / "two", false);
  for (const char* f : {"frames.csv", "clips.csv", "curves.csv"}) {
    EXPECT_EQ(slurp(dir.path / "one" / f), slurp(dir.path / "two" / f)) << f;
  }
  const auto preds = predict_clip(m, data.eval[0], cfg.delta);
  ASSERT_EQ(preds.size(), data.eval[0].size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::size_t h = 0, w = 0;
    auto back = data::read_gray(dir.path / "one" / "pred" / data.eval[0].id / (data::frame_name(i) + ".png"), h, w);
    EXPECT_EQ(back, preds[i].v);
  }
  EXPECT_NE(slurp(dir.path / "one" / "clips.csv").find("\nALL,"), std::string::npos);
}
