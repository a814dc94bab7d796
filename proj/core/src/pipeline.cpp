#include "topogdn/pipeline.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "topogdn/errors.hpp"

namespace topogdn {

namespace {

Tensor row(const std::vector<double>& v) { return Tensor::from({1, v.size()}, v); }

const Tensor& find(const std::vector<NamedTensor>& tensors, const std::string& name,
                   const std::filesystem::path& path) {
  for (const auto& t : tensors)
    if (t.name == name) return t.tensor;
  throw IoError(fmt::format("checkpoint '{}' lacks '{}'", path.string(), name));
}

std::vector<double> values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

ModelConfig model_config(const RunConfig& config, std::size_t sensors) {
  ModelConfig m = config.model;
  m.nodes = sensors;
  return m;
}

FittedRun fit_run(const RunConfig& config, const TimeSeriesFrame& train_frame,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  NormStats norm;
  TimeSeriesFrame normalized = minmax_normalize(train_frame, &norm);
  FittedRun run{TopoGDNModel(model_config(config, train_frame.sensors())), std::move(norm), {}, {},
                train_frame.sensor_names};
  TrainResult result = train(run.model, normalized, config.train, on_epoch);
  run.calibration = std::move(result.calibration);
  run.log = std::move(result.log);
  return run;
}

AnomalyReport score_run(const FittedRun& run, const RunConfig& config,
                        const TimeSeriesFrame& test_frame) {
  if (test_frame.sensors() != run.model.config().nodes)
    throw DataError(fmt::format("test data has {} sensors, the model was trained on {}",
                                test_frame.sensors(), run.model.config().nodes));
  return detect(run.model, apply_minmax(test_frame, run.norm), run.calibration,
                config.detect_stride, config.train.batch_size);
}

void save_run(const FittedRun& run, const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / kConfigFile, config.canonical());
  auto tensors = run.model.state();
  tensors.push_back({"norm.min", row(run.norm.min)});
  tensors.push_back({"norm.max", row(run.norm.max)});
  tensors.push_back({"calibration.median", row(run.calibration.median)});
  tensors.push_back({"calibration.iqr", row(run.calibration.iqr)});
  tensors.push_back({"calibration.threshold", Tensor::scalar(run.calibration.threshold)});
  save_checkpoint((dir / kCheckpointFile).string(), tensors);
  std::string names;
  for (const auto& n : run.sensor_names) names += n + "\n";
  write_text(dir / kSensorsFile, names);
  write_text(dir / kTrainLogFile, training_log_csv(run.log));
}

FittedRun load_run(const RunConfig& config, const std::filesystem::path& dir) {
  auto path = dir / kCheckpointFile;
  if (!std::filesystem::exists(path))
    throw IoError(fmt::format("no checkpoint at '{}'; run train first", path.string()));
  auto tensors = load_checkpoint(path.string());
  NormStats norm{values(find(tensors, "norm.min", path)), values(find(tensors, "norm.max", path))};
  FittedRun run{TopoGDNModel(model_config(config, norm.min.size())), std::move(norm), {}, {}, {}};
  run.model.load_state(tensors);
  run.calibration.median = values(find(tensors, "calibration.median", path));
  run.calibration.iqr = values(find(tensors, "calibration.iqr", path));
  run.calibration.threshold = find(tensors, "calibration.threshold", path).item();
  if (std::filesystem::exists(dir / kSensorsFile)) {
    std::istringstream in(read_text(dir / kSensorsFile));
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) run.sensor_names.push_back(line);
  }
  return run;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace topogdn
