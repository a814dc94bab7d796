#pragma once

// Train/score plumbing shared by the command line and the test harnesses:
// normalization against training statistics, run directories and the
// checkpoint layout.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "topogdn/config.hpp"
#include "topogdn/dataio.hpp"
#include "topogdn/model.hpp"
#include "topogdn/trainer.hpp"

namespace topogdn {

struct FittedRun {
  TopoGDNModel model;
  NormStats norm;
  Calibration calibration;
  std::vector<EpochLog> log;
  std::vector<std::string> sensor_names;
};

/// Model config for `sensors` sensors, with the graph seed from `config`.
ModelConfig model_config(const RunConfig& config, std::size_t sensors);

/// Normalizes `train_frame` with its own min/max and trains a fresh model.
FittedRun fit_run(const RunConfig& config, const TimeSeriesFrame& train_frame,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Scores a raw frame with the run's normalization and calibration.
AnomalyReport score_run(const FittedRun& run, const RunConfig& config,
                        const TimeSeriesFrame& test_frame);

/// Files inside a run directory.
inline constexpr const char* kConfigFile = "config.txt";
inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kTrainLogFile = "train_log.csv";
inline constexpr const char* kScoresFile = "scores.csv";
inline constexpr const char* kSensorsFile = "sensors.txt";

/// Writes config.txt, model.ckpt, sensors.txt and train_log.csv.
void save_run(const FittedRun& run, const RunConfig& config, const std::filesystem::path& dir);
/// Restores a run saved by save_run; throws IoError when the checkpoint is missing.
FittedRun load_run(const RunConfig& config, const std::filesystem::path& dir);

/// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace topogdn
