// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spikecsi/channel.hpp"
#include "spikecsi/codec.hpp"
#include "spikecsi/energy.hpp"
#include "spikecsi/trainer.hpp"

namespace spikecsi {

/// Everything a CLI run needs. Built from a named profile, then overridden by
/// a flat key=value file.
struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 42;
  std::size_t compression_ratio = 16;
  CodecConfig codec;
  TrainConfig train;
  EnergyModel energy;
  std::size_t samples = 4000;   // gen-data count
  std::size_t holdout = 800;    // trailing samples kept out of training
  PathRange paths;
  std::size_t eval_batch = 200;

  /// Keys that kept their profile default, as "key=value" strings.
  std::vector<std::string> defaulted;

  void validate() const;
};

/// "desk" (synthetic, one-core budget) or "paper" (full-scale defaults);
/// ConfigError otherwise.
RunConfig profile_defaults(std::string_view name);

/// Every key accepted in a config file, in documentation order.
const std::vector<std::string>& run_config_keys();

/// Parses key=value lines ('#' starts a comment). Unknown keys, duplicates
/// and malformed values raise ConfigError naming the line. A `profile` key
/// picks the base profile unless `profile_override` is given.
RunConfig parse_run_config(std::string_view text, std::optional<std::string> profile_override = std::nullopt);

RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<std::string> profile_override = std::nullopt);

/// Canonical key=value dump (round-trips through parse_run_config).
std::string format_run_config(const RunConfig& cfg);

}  // namespace spikecsi
