// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#include "spikecsi/run_config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "binary_io.hpp"

namespace spikecsi {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename U>
U parse_number(std::string_view v, std::string_view key) {
  U out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(fmt::format("{}: cannot parse '{}' as a number", key, v));
  }
  return out;
}

bool parse_bool(std::string_view v, std::string_view key) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(fmt::format("{}: expected true/false, got '{}'", key, v));
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename U>
Key size_key(std::string name, U RunConfig::*field) {
  return {name, [field](const RunConfig& c) { return std::to_string(c.*field); },
          [field, name](RunConfig& c, std::string_view v) { c.*field = parse_number<U>(v, name); }};
}

Key sub_size(std::string name, std::function<std::size_t&(RunConfig&)> ref) {
  return {name, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, std::string_view v) { ref(c) = parse_number<std::size_t>(v, name); }};
}

Key sub_double(std::string name, std::function<double&(RunConfig&)> ref) {
  return {name, [ref](const RunConfig& c) { return fmt_double(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, std::string_view v) { ref(c) = parse_number<double>(v, name); }};
}

Key sub_bool(std::string name, std::function<bool&(RunConfig&)> ref) {
  return {name, [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref, name](RunConfig& c, std::string_view v) { ref(c) = parse_bool(v, name); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back(size_key("seed", &RunConfig::seed));
    k.push_back(sub_size("n_t", [](RunConfig& c) -> std::size_t& { return c.codec.system.n_t; }));
    k.push_back(sub_size("n_c", [](RunConfig& c) -> std::size_t& { return c.codec.system.n_c; }));
    k.push_back(sub_size("n_s", [](RunConfig& c) -> std::size_t& { return c.codec.system.n_s; }));
    k.push_back(size_key("cr", &RunConfig::compression_ratio));
    k.push_back(sub_size("time_steps", [](RunConfig& c) -> std::size_t& { return c.codec.system.time_steps; }));
    k.push_back(sub_double("input_scale", [](RunConfig& c) -> double& { return c.codec.system.input_scale; }));
    k.push_back(sub_size("hidden_width", [](RunConfig& c) -> std::size_t& { return c.codec.hidden_width; }));
    k.push_back(sub_double("tau", [](RunConfig& c) -> double& { return c.codec.lif.tau; }));
    k.push_back(sub_double("v_th", [](RunConfig& c) -> double& { return c.codec.lif.v_th; }));
    k.push_back(sub_double("v_reset", [](RunConfig& c) -> double& { return c.codec.lif.v_reset; }));
    k.push_back(sub_double("surrogate_width", [](RunConfig& c) -> double& { return c.codec.lif.surrogate_width; }));
    k.push_back(sub_double("leaky_slope", [](RunConfig& c) -> double& { return c.codec.leaky_slope; }));
    k.push_back(sub_double("lambda_floor", [](RunConfig& c) -> double& { return c.codec.lambda_floor; }));
    k.push_back(sub_double("learning_rate", [](RunConfig& c) -> double& { return c.train.learning_rate; }));
    k.push_back(sub_size("epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; }));
    k.push_back(sub_size("batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; }));
    k.push_back(sub_double("alpha", [](RunConfig& c) -> double& { return c.train.alpha; }));
    k.push_back(sub_bool("augment", [](RunConfig& c) -> bool& { return c.train.augment; }));
    k.push_back(Key{"phases", [](const RunConfig& c) { return std::to_string(c.train.phases); },
                    [](RunConfig& c, std::string_view v) { c.train.phases = parse_number<unsigned>(v, "phases"); }});
    k.push_back(sub_size("lambda_subset", [](RunConfig& c) -> std::size_t& { return c.train.lambda_subset; }));
    k.push_back(sub_bool("deterministic", [](RunConfig& c) -> bool& { return c.train.deterministic; }));
    k.push_back(sub_double("grad_clip", [](RunConfig& c) -> double& { return c.train.grad_clip; }));
    k.push_back(Key{"feedback",
                    [](const RunConfig& c) {
                      return std::string(c.train.style == FeedbackStyle::progressive ? "progressive" : "static");
                    },
                    [](RunConfig& c, std::string_view v) {
                      if (v == "progressive") {
                        c.train.style = FeedbackStyle::progressive;
                      } else if (v == "static") {
                        c.train.style = FeedbackStyle::static_input;
                      } else {
                        throw ConfigError(fmt::format("feedback: expected progressive or static, got '{}'", v));
                      }
                    }});
    k.push_back(size_key("samples", &RunConfig::samples));
    k.push_back(size_key("holdout", &RunConfig::holdout));
    k.push_back(sub_size("min_paths", [](RunConfig& c) -> std::size_t& { return c.paths.min_paths; }));
    k.push_back(sub_size("max_paths", [](RunConfig& c) -> std::size_t& { return c.paths.max_paths; }));
    k.push_back(size_key("eval_batch", &RunConfig::eval_batch));
    k.push_back(sub_double("e_mac", [](RunConfig& c) -> double& { return c.energy.e_mac; }));
    k.push_back(sub_double("e_ac", [](RunConfig& c) -> double& { return c.energy.e_ac; }));
    return k;
  }();
  return table;
}

// Recomputes M from CR once every geometry key is final.
void finalize(RunConfig& c) {
  SystemConfig& s = c.codec.system;
  const double scale = s.input_scale;
  s = SystemConfig::from_compression_ratio(s.n_t, s.n_c, s.n_s, c.compression_ratio, s.time_steps);
  s.input_scale = scale;
  c.train.seed = c.seed;
}

}  // namespace

void RunConfig::validate() const {
  codec.validate();
  train.validate();
  energy.validate();
  if (paths.min_paths == 0 || paths.min_paths > paths.max_paths) {
    throw ConfigError("path range must satisfy 1 <= min_paths <= max_paths");
  }
  if (samples == 0) throw ConfigError("samples must be positive");
  if (holdout >= samples) throw ConfigError("holdout must leave training samples");
  if (eval_batch == 0) throw ConfigError("eval_batch must be positive");
}

RunConfig profile_defaults(std::string_view name) {
  RunConfig c;
  c.profile = std::string(name);
  SystemConfig& s = c.codec.system;
  if (name == "desk") {
    // 16x16 keeps two 150-epoch models near 15 minutes on one core. With
    // batch 200 there are only 16 updates per epoch, so lr is raised to 0.01.
    s.n_t = 16;
    s.n_c = 32;
    s.n_s = 16;
    s.time_steps = 4;
    c.compression_ratio = 16;
    c.codec.hidden_width = 2048;
    c.train.epochs = 150;
    c.train.learning_rate = 0.01;
    c.train.augment = true;
    c.samples = 4000;
    c.holdout = 800;
  } else if (name == "paper") {
    s.n_t = 32;
    s.n_c = 1024;
    s.n_s = 32;
    s.time_steps = 6;
    c.compression_ratio = 8;
    c.codec.hidden_width = 4096;
    c.train.epochs = 1000;
    c.train.augment = true;
    c.samples = 100000;
    c.holdout = 20000;
  } else {
    throw ConfigError(fmt::format("unknown profile '{}' (expected desk or paper)", name));
  }
  finalize(c);
  return c;
}

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n{"profile"};
    for (const Key& k : keys()) n.push_back(k.name);
    return n;
  }();
  return names;
}

RunConfig parse_run_config(std::string_view text, std::optional<std::string> profile_override) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::set<std::string> seen;
  std::optional<std::string> file_profile;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("line {}: expected key=value", line_no));
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty() || value.empty()) throw ConfigError(fmt::format("line {}: empty key or value", line_no));
    if (!seen.insert(key).second) throw ConfigError(fmt::format("line {}: duplicate key '{}'", line_no, key));
    if (key == "profile") {
      file_profile = value;
      continue;
    }
    bool known = false;
    for (const Key& k : keys()) known = known || k.name == key;
    if (!known) throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, key));
    pairs.emplace_back(key, value);
  }

  RunConfig c = profile_defaults(profile_override ? *profile_override : file_profile.value_or("desk"));
  for (const Key& k : keys()) {
    const auto it = std::find_if(pairs.begin(), pairs.end(), [&](const auto& p) { return p.first == k.name; });
    if (it == pairs.end()) {
      c.defaulted.push_back(k.name + "=" + k.get(c));
    } else {
      k.set(c, it->second);
    }
  }
  finalize(c);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::string> profile_override) {
  const auto bytes = binio::read_file(path);
  return parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                          std::move(profile_override));
}

std::string format_run_config(const RunConfig& cfg) {
  std::string out = "profile=" + cfg.profile + "\n";
  for (const Key& k : keys()) out += k.name + "=" + k.get(cfg) + "\n";
  return out;
}

}  // namespace spikecsi
