#pragma once

// Run configuration: key=value lines with '#' comments. Unknown keys are
// rejected; omitted keys keep their defaults.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "topogdn/model.hpp"
#include "topogdn/trainer.hpp"

namespace topogdn {

struct RunConfig {
  std::string train_csv;
  std::string test_csv;
  std::string output_dir = "runs";
  std::size_t detect_stride = 1;
  ModelConfig model;
  TrainConfig train;

  /// Model defaults mirror the paper's defaults (window 100, stride 10,
  /// batch 32, Top-K 20, embeddings 128, 8 filtrations, 12 views, 2 output layers).
  RunConfig();

  /// Every key in a fixed order, one "key=value" line each.
  std::string canonical() const;
  /// 16 hex digits of a hash of the canonical form, data paths and output
  /// directory excluded.
  std::string hash() const;
  /// output_dir / "run-<hash>".
  std::filesystem::path run_dir() const;
};

/// Applies one key; throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
/// Names of all accepted keys.
std::vector<std::string> config_keys();

RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Replaces the seed when TOPOGDN_SEED is set; returns true if it was.
bool apply_seed_override(RunConfig& config);

}  // namespace topogdn
