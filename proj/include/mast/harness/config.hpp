#pragma once

#include <charconv>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mast/data/sampler.hpp"
#include "mast/data/synthetic.hpp"
#include "mast/model.hpp"

namespace mast::harness {

/// Every knob of a run. Text form is one `key = value` per line; `#` starts
/// a comment and string values may be quoted.
struct RunConfig {
  ModelConfig model;
  std::size_t delta = 2;
  double lr = 1e-3;
  double lr_decay = 0.5;
  std::size_t lr_decay_period = 10;
  std::size_t epochs = 30;
  std::size_t batch_size = 1;
  bool augment = false;
  std::size_t weight_window = 7;
  double weight_strength = 5.0;
  bool finite_checks = false;

  // synthetic data, used when data_root is empty
  std::size_t synthetic_clips = 40;
  std::size_t synthetic_frames = 30;
  std::size_t eval_clips = 10;
  std::string difficulty = "easy";

  std::string data_root;
  std::string eval_root;
  std::string out = "run";

  std::uint64_t seed() const { return model.seed; }

  void validate() const {
    model.validate();
    if (delta < 1) throw ConfigError("delta must be at least 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
    if (lr_decay_period < 1) throw ConfigError("lr_decay_period must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (weight_window == 0 || weight_window % 2 == 0) throw ConfigError("weight_window must be odd");
    if (difficulty != "easy" && difficulty != "hard") throw ConfigError("difficulty must be easy or hard");
    if (data_root.empty() && synthetic_frames <= delta) throw ConfigError("synthetic clips are too short for delta");
    if (!data_root.empty() && !std::filesystem::is_directory(data_root)) throw ConfigError("data_root " + data_root + " does not exist");
    if (!eval_root.empty() && !std::filesystem::is_directory(eval_root)) throw ConfigError("eval_root " + eval_root + " does not exist");
  }

  data::SyntheticOptions synthetic_options() const {
    data::SyntheticOptions o;
    o.frames = synthetic_frames;
    o.height = o.width = model.resolution;
    o.difficulty = difficulty == "hard" ? data::Difficulty::hard : data::Difficulty::easy;
    return o;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Shortest text that parses back to the same double.
inline std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  is >> out;
  if (!is || !is.eof()) throw ConfigError("bad value '" + v + "' for " + key);
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.empty() && v[0] == '-') throw ConfigError("negative value '" + v + "' for " + key);
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("bad boolean '" + v + "' for " + key);
}

}  // namespace detail

/// Keys left out of the config hash: where data lives and how long to run
/// do not change the training trajectory.
inline const std::vector<std::string>& unhashed_keys() {
  static const std::vector<std::string> keys{"data_root", "epochs", "eval_root", "out"};
  return keys;
}

inline void set_key(RunConfig& c, const std::string& key, const std::string& raw) {
  using detail::parse_number;
  std::string v = raw;
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  auto sz = [&] { return parse_number<std::size_t>(key, v); };
  auto dbl = [&] { return parse_number<double>(key, v); };
  if (key == "resolution") c.model.resolution = sz();
  else if (key == "stage_channels") {
    std::array<std::size_t, 3> ch{};
    std::istringstream is(v);
    std::string part;
    std::size_t i = 0;
    while (std::getline(is, part, ',')) {
      if (i >= 3) throw ConfigError("stage_channels needs exactly 3 values");
      ch[i++] = parse_number<std::size_t>(key, detail::trim(part));
    }
    if (i != 3) throw ConfigError("stage_channels needs exactly 3 values");
    c.model.encoder.channels = ch;
  } else if (key == "C") c.model.encoder.top_channels = sz();
  else if (key == "window") c.model.encoder.window = sz();
  else if (key == "depth") c.model.encoder.depth = sz();
  else if (key == "mlp_ratio") c.model.encoder.mlp_ratio = sz();
  else if (key == "decoder_width") c.model.decoder_width = sz();
  else if (key == "patch") c.model.patch = sz();
  else if (key == "lambda") c.model.lambda = dbl();
  else if (key == "pairing") c.model.pairing = parse_pairing(v);
  else if (key == "siamese") c.model.siamese = detail::parse_bool(key, v);
  else if (key == "mixture_attention") c.model.mixture_attention = detail::parse_bool(key, v);
  else if (key == "seed") c.model.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "delta") c.delta = sz();
  else if (key == "lr") c.lr = dbl();
  else if (key == "lr_decay") c.lr_decay = dbl();
  else if (key == "lr_decay_period") c.lr_decay_period = sz();
  else if (key == "epochs") c.epochs = sz();
  else if (key == "batch_size") c.batch_size = sz();
  else if (key == "augment") c.augment = detail::parse_bool(key, v);
  else if (key == "weight_window") c.weight_window = sz();
  else if (key == "weight_strength") c.weight_strength = dbl();
  else if (key == "finite_checks") c.finite_checks = detail::parse_bool(key, v);
  else if (key == "synthetic_clips") c.synthetic_clips = sz();
  else if (key == "synthetic_frames") c.synthetic_frames = sz();
  else if (key == "eval_clips") c.eval_clips = sz();
  else if (key == "difficulty") c.difficulty = v;
  else if (key == "data_root") c.data_root = v;
  else if (key == "eval_root") c.eval_root = v;
  else if (key == "out") c.out = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

inline RunConfig parse_config(std::istream& is, RunConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    set_key(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return base;
}

inline RunConfig load_config(const std::filesystem::path& p, RunConfig base = {}) {
  std::ifstream is(p);
  if (!is) throw ConfigError("cannot read config " + p.string());
  return parse_config(is, std::move(base));
}

/// Sorted key = value lines covering every setting.
inline std::map<std::string, std::string> canonical_entries(const RunConfig& c) {
  using detail::fmt_double;
  const auto& ch = c.model.encoder.channels;
  return {{"resolution", std::to_string(c.model.resolution)},
          {"stage_channels", std::to_string(ch[0]) + "," + std::to_string(ch[1]) + "," + std::to_string(ch[2])},
          {"C", std::to_string(c.model.encoder.top_channels)},
          {"window", std::to_string(c.model.encoder.window)},
          {"depth", std::to_string(c.model.encoder.depth)},
          {"mlp_ratio", std::to_string(c.model.encoder.mlp_ratio)},
          {"decoder_width", std::to_string(c.model.decoder_width)},
          {"patch", std::to_string(c.model.patch)},
          {"lambda", fmt_double(c.model.lambda)},
          {"pairing", to_string(c.model.pairing)},
          {"siamese", c.model.siamese ? "true" : "false"},
          {"mixture_attention", c.model.mixture_attention ? "true" : "false"},
          {"seed", std::to_string(c.model.seed)},
          {"delta", std::to_string(c.delta)},
          {"lr", fmt_double(c.lr)},
          {"lr_decay", fmt_double(c.lr_decay)},
          {"lr_decay_period", std::to_string(c.lr_decay_period)},
          {"epochs", std::to_string(c.epochs)},
          {"batch_size", std::to_string(c.batch_size)},
          {"augment", c.augment ? "true" : "false"},
          {"weight_window", std::to_string(c.weight_window)},
          {"weight_strength", fmt_double(c.weight_strength)},
          {"finite_checks", c.finite_checks ? "true" : "false"},
          {"synthetic_clips", std::to_string(c.synthetic_clips)},
          {"synthetic_frames", std::to_string(c.synthetic_frames)},
          {"eval_clips", std::to_string(c.eval_clips)},
          {"difficulty", c.difficulty},
          {"data_root", '"' + c.data_root + '"'},
          {"eval_root", '"' + c.eval_root + '"'},
          {"out", '"' + c.out + '"'}};
}

inline std::string canonical_text(const RunConfig& c, bool include_all = true) {
  std::string s;
  for (const auto& [k, v] : canonical_entries(c)) {
    if (!include_all && std::find(unhashed_keys().begin(), unhashed_keys().end(), k) != unhashed_keys().end()) continue;
    s += k + " = " + v + "\n";
  }
  return s;
}

/// FNV-1a digest of the canonical text without the unhashed keys, as 16 hex
/// digits.
inline std::string config_hash(const RunConfig& c) {
  const auto h = mast::detail::fnv1a64(canonical_text(c, false));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mast::harness
