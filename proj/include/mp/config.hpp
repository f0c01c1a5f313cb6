#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "mp/model.hpp"
#include "mp/trainer.hpp"

namespace mp {

/// Merged run configuration: plain-text config file plus CLI overrides.
/// The single `seed` key feeds every random stream (parameter init,
/// shuffling, synthetic data).
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string precision = "f32";  // f32 for training, f64 for oracle work
  std::uint64_t seed = 0;

  void finalize() {
    model.seed = seed;
    train.seed = seed;
    model.validate();
    train.validate();
    if (precision != "f32" && precision != "f64") {
      throw ConfigError("precision must be f32 or f64, got " + precision);
    }
  }
};

/// Parses a sectioned key=value config file ('#' comments). Every key is
/// validated against the schema; unknown sections or keys are rejected.
RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// The accepted keys, one "section.key" per entry (schema coverage tests).
std::vector<std::string> run_config_schema_keys();

}  // namespace mp
