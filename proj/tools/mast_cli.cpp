#include <malloc.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mast/harness/ablate.hpp"
#include "mast/harness/count.hpp"
#include "mast/harness/train.hpp"

namespace {

using namespace mast;
using namespace mast::harness;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<std::size_t> delta;
  std::optional<std::size_t> epochs;
  bool no_siamese = false;
  bool no_mixture_attention = false;
  std::string out;
  std::string data;
  std::string eval_data;
  std::vector<std::string> set;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value config file");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--lambda", lambda, "mixture weight in [0, 1]");
    app->add_option("--delta", delta, "frame interval");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_flag("--no-siamese", no_siamese, "twin independent encoders");
    app->add_flag("--no-mixture-attention", no_mixture_attention, "pass top features through unchanged");
    app->add_option("--out", out, "output directory");
    app->add_option("--data", data, "dataset root (synthetic data when absent)");
    app->add_option("--eval-data", eval_data, "held-out dataset root");
    app->add_option("--set", set, "extra key=value settings")->take_all();
  }

  RunConfig build() const {
    RunConfig c = config.empty() ? RunConfig{} : load_config(config);
    for (const auto& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_key(c, harness::detail::trim(kv.substr(0, eq)), harness::detail::trim(kv.substr(eq + 1)));
    }
    if (seed) c.model.seed = *seed;
    if (lambda) c.model.lambda = *lambda;
    if (delta) c.delta = *delta;
    if (epochs) c.epochs = *epochs;
    if (no_siamese) c.model.siamese = false;
    if (no_mixture_attention) c.model.mixture_attention = false;
    if (!out.empty()) c.out = out;
    if (!data.empty()) c.data_root = data;
    if (!eval_data.empty()) c.eval_root = eval_data;
    c.validate();
    return c;
  }
};

MastModel load_model(const RunConfig& cfg, const std::string& checkpoint) {
  MastModel model(cfg.model);
  load_checkpoint(checkpoint.empty() ? fs::path(cfg.out) / "best" : fs::path(checkpoint), model, cfg);
  return model;
}

void print_summary(const metrics::MetricReport& r) {
  std::printf("frames %zu\ndice %.6f\ns_measure %.6f\ne_mean %.6f\nf_mean %.6f\nf_weighted %.6f\nsensitivity %.6f\n", r.frames,
              r.dice, r.s_measure, r.e_mean, r.f_mean, r.f_weighted, r.sensitivity);
}

int run(int argc, char** argv) {
  CLI::App app{"MAST video polyp segmentation"};
  app.require_subcommand(1);

  Overrides o_train, o_eval, o_predict, o_ablate, o_gen, o_count;
  bool resume = false;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  o_train.attach(train_cmd);
  train_cmd->add_flag("--resume", resume, "continue from <out>/last");

  std::string ckpt_eval;
  bool png = false;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the held-out clips");
  o_eval.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", ckpt_eval, "checkpoint directory (default <out>/best)");
  eval_cmd->add_flag("--png", png, "also write prediction PNGs");

  std::string ckpt_predict;
  auto* predict_cmd = app.add_subcommand("predict", "write prediction PNGs for the held-out clips");
  o_predict.attach(predict_cmd);
  predict_cmd->add_option("--checkpoint", ckpt_predict, "checkpoint directory (default <out>/best)");

  std::string axis = "components";
  std::vector<std::uint64_t> seeds;
  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation grid");
  o_ablate.attach(ablate_cmd);
  ablate_cmd->add_option("--axis", axis, "components, lambda or delta");
  ablate_cmd->add_option("--seeds", seeds, "seeds (default: the config seed)")->take_all();

  auto* gen_cmd = app.add_subcommand("gen-data", "export the synthetic train and held-out clips");
  o_gen.attach(gen_cmd);

  auto* count_cmd = app.add_subcommand("count", "analytic parameter and FLOP counts");
  o_count.attach(count_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*train_cmd) {
    const auto cfg = o_train.build();
    const auto data = prepare_data(cfg);
    MastModel model(cfg.model);
    TrainOptions opt;
    opt.resume = resume;
    opt.progress = &std::cout;
    const auto res = train(cfg, data, model, opt);
    std::printf("best dice %.6f at epoch %zu\n", res.best_dice, res.best_epoch);
  } else if (*eval_cmd) {
    const auto cfg = o_eval.build();
    const auto model = load_model(cfg, ckpt_eval);
    const auto data = prepare_data(cfg);
    print_summary(evaluate_to_dir(model, data.eval, cfg.delta, fs::path(cfg.out) / "eval", png));
  } else if (*predict_cmd) {
    const auto cfg = o_predict.build();
    const auto model = load_model(cfg, ckpt_predict);
    const auto data = prepare_data(cfg);
    for (const auto& clip : data.eval) {
      const fs::path dir = fs::path(cfg.out) / "pred" / clip.id;
      fs::create_directories(dir);
      const auto maps = predict_clip(model, clip, cfg.delta);
      for (std::size_t i = 0; i < maps.size(); ++i) {
        data::write_image(dir / (data::frame_name(i) + ".png"), data::map_to_gray(maps[i].v, maps[i].h, maps[i].w));
      }
    }
  } else if (*ablate_cmd) {
    const auto cfg = o_ablate.build();
    if (seeds.empty()) seeds.push_back(cfg.seed());
    const auto ax = parse_axis(axis);
    const auto rows = ablate(cfg, ax, seeds, &std::cout);
    fs::create_directories(cfg.out);
    const fs::path p = fs::path(cfg.out) / ("ablation_" + to_string(ax) + ".csv");
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    write_ablation_csv(os, ax, rows);
    write_ablation_csv(std::cout, ax, rows);
  } else if (*gen_cmd) {
    const auto cfg = o_gen.build();
    const auto data = prepare_data(cfg);
    data::export_dataset(fs::path(cfg.out) / "train", data.train);
    data::export_dataset(fs::path(cfg.out) / "heldout", data.eval);
    std::printf("%zu train clips, %zu held-out clips under %s\n", data.train.size(), data.eval.size(), cfg.out.c_str());
  } else if (*count_cmd) {
    const auto cfg = o_count.build();
    const auto cost = count_params_flops(cfg.model);
    for (const auto& it : cost.items) std::printf("%-18s params %10llu  macs %12llu\n", it.name.c_str(),
                                                  static_cast<unsigned long long>(it.params), static_cast<unsigned long long>(it.macs));
    std::printf("total params %llu\ntotal flops %llu (per frame pair)\n", static_cast<unsigned long long>(cost.params),
                static_cast<unsigned long long>(cost.flops()));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  try {
    return run(argc, argv);
  } catch (const mast::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const mast::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const mast::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
