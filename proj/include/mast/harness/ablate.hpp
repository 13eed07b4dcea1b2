#pragma once

#include <algorithm>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "mast/harness/train.hpp"

namespace mast::harness {

enum class AblationAxis { components, lambda, delta };

inline AblationAxis parse_axis(const std::string& s) {
  if (s == "components") return AblationAxis::components;
  if (s == "lambda") return AblationAxis::lambda;
  if (s == "delta") return AblationAxis::delta;
  throw ConfigError("unknown ablation axis '" + s + "' (expected components, lambda or delta)");
}

inline std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::components: return "components";
    case AblationAxis::lambda: return "lambda";
    case AblationAxis::delta: return "delta";
  }
  return "?";
}

struct GridPoint {
  std::string label;
  std::function<void(RunConfig&)> apply;
};

inline std::vector<GridPoint> ablation_grid(AblationAxis axis) {
  std::vector<GridPoint> g;
  switch (axis) {
    case AblationAxis::components:
      g.push_back({"baseline", [](RunConfig& c) { c.model.siamese = false; c.model.mixture_attention = false; }});
      g.push_back({"+Siamese", [](RunConfig& c) { c.model.siamese = true; c.model.mixture_attention = false; }});
      g.push_back({"+M-A", [](RunConfig& c) { c.model.siamese = false; c.model.mixture_attention = true; }});
      g.push_back({"full", [](RunConfig& c) { c.model.siamese = true; c.model.mixture_attention = true; }});
      break;
    case AblationAxis::lambda:
      for (double l : {0.0, 0.3, 0.5, 0.7, 1.0}) {
        g.push_back({detail::fmt_double(l), [l](RunConfig& c) { c.model.lambda = l; }});
      }
      break;
    case AblationAxis::delta:
      for (std::size_t d : {1, 2, 3, 5}) {
        g.push_back({std::to_string(d), [d](RunConfig& c) { c.delta = d; }});
      }
      break;
  }
  return g;
}

struct AblationRow {
  std::string label;
  std::uint64_t seed = 0;
  EvalSummary eval;
};

/// Trains and evaluates every grid point for every seed. All points of one
/// seed share the data and the sample order. Runs are kept in memory; no
/// checkpoints are written.
inline std::vector<AblationRow> ablate(const RunConfig& base, AblationAxis axis, const std::vector<std::uint64_t>& seeds,
                                       std::ostream* progress = nullptr) {
  std::vector<AblationRow> rows;
  for (auto seed : seeds) {
    RunConfig seeded = base;
    seeded.model.seed = seed;
    const auto data = prepare_data(seeded);
    for (const auto& gp : ablation_grid(axis)) {
      RunConfig cfg = seeded;
      gp.apply(cfg);
      cfg.validate();
      MastModel model(cfg.model);
      TrainOptions opt;
      opt.write_files = false;
      train(cfg, data, model, opt);
      AblationRow row{gp.label, seed, evaluate_model(model, data.eval, cfg.delta)};
      if (progress) *progress << to_string(axis) << ' ' << gp.label << " seed " << seed << " dice " << row.eval.dice << '\n';
      rows.push_back(row);
    }
  }
  return rows;
}

/// One row per (point, seed) then one "mean" row per point.
inline void write_ablation_csv(std::ostream& os, AblationAxis axis, const std::vector<AblationRow>& rows) {
  os.precision(17);
  os << to_string(axis) << ",seed,s_measure,dice,sensitivity\n";
  std::vector<std::string> labels;
  for (const auto& r : rows) {
    os << r.label << ',' << r.seed << ',' << r.eval.s_measure << ',' << r.eval.dice << ',' << r.eval.sensitivity << '\n';
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
  }
  for (const auto& l : labels) {
    double s = 0, d = 0, n = 0, k = 0;
    for (const auto& r : rows) {
      if (r.label != l) continue;
      s += r.eval.s_measure;
      d += r.eval.dice;
      n += r.eval.sensitivity;
      ++k;
    }
    os << l << ",mean," << s / k << ',' << d / k << ',' << n / k << '\n';
  }
}

}  // namespace mast::harness
