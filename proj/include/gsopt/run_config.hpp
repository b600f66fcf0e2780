// Copyright Contributors to the gsopt Project
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a strict key = value text format covering the trainer,
// loss and rasterizer knobs plus the global seed. Unknown keys are rejected;
// a resolved snapshot (all defaults materialized) can be written next to any
// run's outputs and reproduces it bit-identically in deterministic mode.

#pragma once

#include "gsopt/trainer.hpp"

#include <string>

namespace gsopt {

struct RunConfig {
  TrainConfig train;
  std::uint64_t seed = 1;

  void validate() const { train.validate(); }
};

// Parses the key = value format ('#' starts a comment). Throws
// Error(invalid_config) on unknown keys or malformed values.
RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Applies one key = value assignment (CLI overrides).
void apply_config_override(RunConfig* config, const std::string& key, const std::string& value);

// All keys with their current values, suitable for reparsing.
std::string serialize_run_config(const RunConfig& config);
void save_run_config(const RunConfig& config, const std::string& path);

}  // namespace gsopt
