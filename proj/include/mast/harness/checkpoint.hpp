#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mast/harness/config.hpp"
#include "mast/model.hpp"
#include "mast/optim.hpp"

namespace mast::harness {

namespace fs = std::filesystem;

struct EvalSummary {
  double dice = 0.0;
  double s_measure = 0.0;
  double sensitivity = 0.0;
  double f_mean = 0.0;
  double f_weighted = 0.0;
  double e_mean = 0.0;
  std::size_t frames = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::size_t steps = 0;
  std::optional<EvalSummary> eval;
};

/// Deterministic run history: no wall-clock values, those go to timing.csv.
struct RunLog {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<EpochRecord> epochs;
};

inline nlohmann::json to_json(const EvalSummary& e) {
  return {{"dice", e.dice}, {"s_measure", e.s_measure}, {"sensitivity", e.sensitivity}, {"f_mean", e.f_mean},
          {"f_weighted", e.f_weighted}, {"e_mean", e.e_mean}, {"frames", e.frames}};
}

inline EvalSummary eval_from_json(const nlohmann::json& j) {
  EvalSummary e;
  e.dice = j.at("dice").get<double>();
  e.s_measure = j.at("s_measure").get<double>();
  e.sensitivity = j.at("sensitivity").get<double>();
  e.f_mean = j.at("f_mean").get<double>();
  e.f_weighted = j.at("f_weighted").get<double>();
  e.e_mean = j.at("e_mean").get<double>();
  e.frames = j.at("frames").get<std::size_t>();
  return e;
}

inline nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss}, {"steps", r.steps}};
  j["eval"] = r.eval ? to_json(*r.eval) : nlohmann::json(nullptr);
  return j;
}

inline EpochRecord epoch_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.lr = j.at("lr").get<double>();
  r.train_loss = j.at("train_loss").get<double>();
  r.steps = j.at("steps").get<std::size_t>();
  if (!j.at("eval").is_null()) r.eval = eval_from_json(j.at("eval"));
  return r;
}

/// One JSON object per line: a header then one line per epoch.
inline void write_runlog(const fs::path& p, const RunLog& log) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + p.string());
  os << nlohmann::json{{"seed", log.seed}, {"config_hash", log.config_hash}}.dump() << '\n';
  for (const auto& r : log.epochs) os << to_json(r).dump() << '\n';
}

inline RunLog read_runlog(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw DataError("cannot read " + p.string());
  RunLog log;
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (header) {
      log.seed = j.at("seed").get<std::uint64_t>();
      log.config_hash = j.at("config_hash").get<std::string>();
      header = false;
    } else {
      log.epochs.push_back(epoch_from_json(j));
    }
  }
  return log;
}

struct CheckpointInfo {
  std::size_t epoch = 0;  // epochs completed
  double best_dice = -1.0;
  std::size_t best_epoch = 0;
  std::string config_hash;
};

/// <dir>/manifest.json, params.bin (one tensor record per parameter, in
/// manifest order) and optimizer.bin (first moments then second moments).
inline void save_checkpoint(const fs::path& dir, MastModel& model, const AdamState& opt, const RunConfig& cfg,
                            const CheckpointInfo& info, const RunLog& log) {
  fs::create_directories(dir);
  auto manifest = model.manifest();
  manifest["config_hash"] = config_hash(cfg);
  manifest["run_config"] = canonical_text(cfg, false);
  manifest["epoch"] = info.epoch;
  manifest["best_dice"] = info.best_dice;
  manifest["best_epoch"] = info.best_epoch;
  manifest["optimizer_step"] = opt.step;
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : log.epochs) records.push_back(to_json(r));
  manifest["log"] = records;
  {
    std::ofstream os(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + (dir / "manifest.json").string());
    os << manifest.dump(2) << '\n';
  }
  model.save_parameters(dir / "params.bin");
  std::ofstream os(dir / "optimizer.bin", std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + (dir / "optimizer.bin").string());
  const auto params = model.parameters();
  for (int moment = 0; moment < 2; ++moment) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& buf = opt.m.empty() ? std::vector<double>(params[i].numel(), 0.0) : (moment == 0 ? opt.m[i] : opt.v[i]);
      write_tensor(os, Tensor(params[i].shape(), buf));
    }
  }
}

inline nlohmann::json read_manifest(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw DataError("checkpoint " + dir.string() + " has no manifest.json");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt manifest in " + dir.string() + ": " + e.what());
  }
}

/// Restores parameters (and optimizer state and log when given). Throws
/// ConfigError if the checkpoint was written under a different config.
inline CheckpointInfo load_checkpoint(const fs::path& dir, MastModel& model, const RunConfig& cfg, AdamState* opt = nullptr,
                                      RunLog* log = nullptr) {
  const auto manifest = read_manifest(dir);
  CheckpointInfo info;
  info.config_hash = manifest.at("config_hash").get<std::string>();
  if (info.config_hash != config_hash(cfg)) {
    throw ConfigError("checkpoint " + dir.string() + " was written with config " + info.config_hash + ", current config is " +
                      config_hash(cfg));
  }
  info.epoch = manifest.at("epoch").get<std::size_t>();
  info.best_dice = manifest.at("best_dice").get<double>();
  info.best_epoch = manifest.at("best_epoch").get<std::size_t>();
  model.load_parameters(dir / "params.bin");
  if (opt) {
    std::ifstream is(dir / "optimizer.bin", std::ios::binary);
    if (!is) throw DataError("checkpoint " + dir.string() + " has no optimizer.bin");
    const auto params = model.parameters();
    AdamState st;
    st.step = manifest.at("optimizer_step").get<std::int64_t>();
    for (int moment = 0; moment < 2; ++moment) {
      for (const auto& p : params) {
        auto t = read_tensor(is);
        if (t.shape() != p.shape()) throw DataError("optimizer state does not match the parameters");
        (moment == 0 ? st.m : st.v).push_back(t.values());
      }
    }
    *opt = std::move(st);
  }
  if (log) {
    log->seed = cfg.seed();
    log->config_hash = info.config_hash;
    log->epochs.clear();
    for (const auto& r : manifest.at("log")) log->epochs.push_back(epoch_from_json(r));
  }
  return info;
}

}  // namespace mast::harness
