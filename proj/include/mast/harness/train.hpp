#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mast/data/dataset.hpp"
#include "mast/data/sampler.hpp"
#include "mast/data/synthetic.hpp"
#include "mast/harness/checkpoint.hpp"
#include "mast/harness/config.hpp"
#include "mast/metrics.hpp"
#include "mast/model.hpp"
#include "mast/optim.hpp"

namespace mast::harness {

struct Datasets {
  std::vector<data::VideoClip> train;
  std::vector<data::VideoClip> eval;
};

/// Synthetic training and held-out clips drawn from separate substreams of
/// the run seed, or clips loaded from disk and resized to the model input.
inline Datasets prepare_data(const RunConfig& cfg) {
  Datasets d;
  if (cfg.data_root.empty()) {
    const Rng rng(cfg.seed());
    const auto opt = cfg.synthetic_options();
    d.train = data::generate_synthetic_dataset(rng.substream("train-data").next_u64(), cfg.synthetic_clips, opt, "train");
    d.eval = data::generate_synthetic_dataset(rng.substream("heldout-data").next_u64(), cfg.eval_clips, opt, "heldout");
    return d;
  }
  for (auto& c : data::load_dataset(cfg.data_root)) d.train.push_back(data::resize_clip(c, cfg.model.resolution));
  if (!cfg.eval_root.empty()) {
    for (auto& c : data::load_dataset(cfg.eval_root)) d.eval.push_back(data::resize_clip(c, cfg.model.resolution));
  } else if (d.train.size() > cfg.eval_clips && cfg.eval_clips > 0) {
    d.eval.assign(d.train.end() - static_cast<std::ptrdiff_t>(cfg.eval_clips), d.train.end());
    d.train.resize(d.train.size() - cfg.eval_clips);
  }
  return d;
}

inline double learning_rate(const RunConfig& cfg, std::size_t epoch) {
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_decay_period));
}

/// Per-frame probability maps of one clip, each quantized to 8 bits.
/// Frames t >= delta take the anchor prediction of pair (t, t - delta);
/// earlier frames take the reference prediction of pair (t + delta, t).
/// Clips too short for delta yield no maps.
inline std::vector<metrics::Map> predict_clip(const MastModel& model, const data::VideoClip& clip, std::size_t delta) {
  std::vector<metrics::Map> out;
  if (clip.size() <= delta) return out;
  out.resize(clip.size());
  NoGradScope no_grad;
  auto to_map = [](const Tensor& logits) {
    auto p = sigmoid(logits);
    auto m = metrics::Map::from_tensor(p);
    for (auto& v : m.v) v = data::to_byte(v) / 255.0;
    return m;
  };
  for (std::size_t t = delta; t < clip.size(); ++t) {
    auto pred = model.forward(clip.frames[t], clip.frames[t - delta]);
    out[t] = to_map(pred.anchor.maps[0]);
    if (t < 2 * delta) out[t - delta] = to_map(pred.reference.maps[0]);
  }
  return out;
}

struct ClipPredictions {
  std::string clip;
  std::vector<metrics::Map> preds;
  std::vector<metrics::Map> gts;
};

inline std::vector<ClipPredictions> predict_all(const MastModel& model, const std::vector<data::VideoClip>& clips, std::size_t delta) {
  std::vector<ClipPredictions> out;
  for (const auto& c : clips) {
    ClipPredictions cp{c.id, predict_clip(model, c, delta), {}};
    if (cp.preds.empty()) continue;
    for (const auto& m : c.masks) cp.gts.push_back(metrics::Map::from_tensor(m));
    out.push_back(std::move(cp));
  }
  return out;
}

inline metrics::MetricReport evaluate_predictions(const std::vector<ClipPredictions>& preds) {
  std::vector<metrics::FrameMetrics> frames;
  std::vector<metrics::Map> all_p, all_g;
  for (const auto& cp : preds) {
    for (std::size_t i = 0; i < cp.preds.size(); ++i) {
      auto m = metrics::evaluate_frame(cp.preds[i], cp.gts[i]);
      m.clip = cp.clip;
      m.frame = i;
      frames.push_back(std::move(m));
      all_p.push_back(cp.preds[i]);
      all_g.push_back(cp.gts[i]);
    }
  }
  auto r = metrics::aggregate(std::move(frames));
  r.curves = metrics::curves(all_p, all_g);
  return r;
}

inline EvalSummary summarize(const metrics::MetricReport& r) {
  return {r.dice, r.s_measure, r.sensitivity, r.f_mean, r.f_weighted, r.e_mean, r.frames};
}

inline EvalSummary evaluate_model(const MastModel& model, const std::vector<data::VideoClip>& clips, std::size_t delta) {
  return summarize(evaluate_predictions(predict_all(model, clips, delta)));
}

struct TrainOptions {
  bool resume = false;
  bool write_files = true;      // checkpoints, run log, timing
  std::ostream* progress = nullptr;
};

struct TrainResult {
  RunLog log;
  double best_dice = -1.0;
  std::size_t best_epoch = 0;
  std::optional<EvalSummary> final_eval;
};

inline double grad_norm(const std::vector<Tensor>& params) {
  double s = 0.0;
  for (const auto& p : params)
    if (p.has_grad())
      for (double g : p.grad()) s += g * g;
  return std::sqrt(s);
}

/// Trains `model` on `data.train`, evaluating on `data.eval` after every
/// epoch. With write_files, <out>/last holds the resumable state, <out>/best
/// the checkpoint with the highest held-out Dice (the last epoch when there
/// is no held-out data), <out>/runlog.jsonl the log and <out>/timing.csv the
/// wall-clock seconds per epoch.
inline TrainResult train(const RunConfig& cfg, const Datasets& data, MastModel& model, const TrainOptions& opt = {}) {
  cfg.validate();
  const fs::path out(cfg.out);
  const bool files = opt.write_files;
  if (files) fs::create_directories(out);
  set_finite_checks(cfg.finite_checks);

  TrainResult res;
  res.log.seed = cfg.seed();
  res.log.config_hash = config_hash(cfg);
  AdamState adam;
  CheckpointInfo info;
  info.config_hash = res.log.config_hash;
  if (opt.resume) {
    if (!files) throw ConfigError("resume needs an output directory");
    info = load_checkpoint(out / "last", model, cfg, &adam, &res.log);
    res.best_dice = info.best_dice;
    res.best_epoch = info.best_epoch;
  }

  std::vector<data::SkipRecord> skipped;
  const auto refs = data::enumerate_pairs(data.train, cfg.delta, &skipped);
  if (refs.empty()) throw DataError("no training pairs: every clip is shorter than delta + 1");
  if (opt.progress) {
    for (const auto& s : skipped) *opt.progress << "skipping clip " << s.clip << " (" << s.frames << " frames, delta " << s.delta << ")\n";
  }
  auto params = model.parameters();
  const WeightMapOptions wopt{cfg.weight_window, cfg.weight_strength};
  const Rng root(cfg.seed());

  std::ofstream timing;
  if (files) {
    timing.open(out / "timing.csv", opt.resume ? std::ios::app : std::ios::trunc);
    if (!opt.resume) timing << "epoch,seconds\n";
  }

  std::size_t step = static_cast<std::size_t>(adam.step);
  for (std::size_t epoch = info.epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = learning_rate(cfg, epoch);
    auto order = refs;
    Rng shuffle_rng = root.substream("order").substream(epoch);
    shuffle_rng.shuffle(order);
    Rng aug_rng = root.substream("augment").substream(epoch);

    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      double batch_loss = 0.0;
      for (std::size_t i = b; i < end; ++i) {
        auto pair = data::make_pair(data.train, order[i], cfg.delta);
        if (cfg.augment && aug_rng.uniform() < 0.5) pair = data::flip_pair(pair);
        Tape tape;
        TapeScope scope(tape);
        auto loss = model.loss(pair, wopt);
        if (!std::isfinite(loss.item())) {
          throw NumericalError("non-finite loss at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) + ", lr " +
                               detail::fmt_double(lr) + ", grad norm " + detail::fmt_double(grad_norm(params)) + ")");
        }
        backward(loss);
        batch_loss += loss.item();
      }
      const double inv = 1.0 / static_cast<double>(end - b);
      if (end - b > 1) {
        for (auto& p : params)
          if (p.has_grad())
            for (auto& g : p.mutable_grad()) g *= inv;
      }
      const double gn = grad_norm(params);
      if (!std::isfinite(gn)) {
        throw NumericalError("non-finite gradient at step " + std::to_string(step) + " (epoch " + std::to_string(epoch) + ", lr " +
                             detail::fmt_double(lr) + ", grad norm " + detail::fmt_double(gn) + ")");
      }
      adam_step(params, adam, AdamOptions{lr});
      model.zero_grad();
      loss_sum += batch_loss;
      ++step;
      ++steps;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.steps = steps;
    if (!data.eval.empty()) rec.eval = evaluate_model(model, data.eval, cfg.delta);
    res.log.epochs.push_back(rec);

    const double score = rec.eval ? rec.eval->dice : static_cast<double>(epoch);
    const bool best = score > res.best_dice;
    if (best) {
      res.best_dice = score;
      res.best_epoch = epoch;
    }
    info.epoch = epoch + 1;
    info.best_dice = res.best_dice;
    info.best_epoch = res.best_epoch;
    if (files) {
      save_checkpoint(out / "last", model, adam, cfg, info, res.log);
      if (best) save_checkpoint(out / "best", model, adam, cfg, info, res.log);
      write_runlog(out / "runlog.jsonl", res.log);
      timing << epoch << ',' << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << '\n';
      timing.flush();
    }
    if (opt.progress) {
      *opt.progress << "epoch " << epoch << " lr " << lr << " loss " << rec.train_loss;
      if (rec.eval) *opt.progress << " dice " << rec.eval->dice << " s " << rec.eval->s_measure;
      *opt.progress << '\n';
    }
  }
  if (!res.log.epochs.empty()) res.final_eval = res.log.epochs.back().eval;
  return res;
}

/// Writes per-frame, per-clip and curve CSVs (and PNG maps when asked)
/// for the predictions of `model` on `clips`.
inline metrics::MetricReport evaluate_to_dir(const MastModel& model, const std::vector<data::VideoClip>& clips, std::size_t delta,
                                             const fs::path& out, bool write_png) {
  fs::create_directories(out);
  const auto preds = predict_all(model, clips, delta);
  auto report = evaluate_predictions(preds);

  std::ofstream frames(out / "frames.csv", std::ios::binary | std::ios::trunc);
  metrics::write_frame_csv_header(frames);
  for (const auto& f : report.per_frame) metrics::write_frame_csv_row(frames, f);

  std::ofstream clips_csv(out / "clips.csv", std::ios::binary | std::ios::trunc);
  clips_csv.precision(17);
  clips_csv << "clip_id,frames,dice,f_mean,f_weighted,sensitivity,s_measure,e_mean,f_weighted_skipped,sensitivity_skipped\n";
  auto write_row = [&](const std::string& name, const metrics::MetricReport& r) {
    clips_csv << name << ',' << r.frames << ',' << r.dice << ',' << r.f_mean << ',' << r.f_weighted << ',' << r.sensitivity << ','
              << r.s_measure << ',' << r.e_mean << ',' << r.f_weighted_skipped << ',' << r.sensitivity_skipped << '\n';
  };
  for (const auto& cp : preds) {
    std::vector<metrics::FrameMetrics> fm;
    for (const auto& f : report.per_frame)
      if (f.clip == cp.clip) fm.push_back(f);
    write_row(cp.clip, metrics::aggregate(std::move(fm)));
  }
  write_row("ALL", report);

  std::ofstream curves(out / "curves.csv", std::ios::binary | std::ios::trunc);
  metrics::write_curves_csv(curves, report.curves);

  if (write_png) {
    for (const auto& cp : preds) {
      const fs::path dir = out / "pred" / cp.clip;
      fs::create_directories(dir);
      for (std::size_t i = 0; i < cp.preds.size(); ++i) {
        data::write_image(dir / (data::frame_name(i) + ".png"), data::map_to_gray(cp.preds[i].v, cp.preds[i].h, cp.preds[i].w));
      }
    }
  }
  return report;
}

}  // namespace mast::harness
