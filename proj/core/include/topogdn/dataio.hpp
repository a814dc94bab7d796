#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace topogdn {

/// N sensors x T steps, stored sensor-major.
struct TimeSeriesFrame {
  std::vector<std::string> sensor_names;
  std::vector<double> values;
  std::optional<std::vector<int>> labels;

  std::size_t sensors() const { return sensor_names.size(); }
  std::size_t steps() const { return sensor_names.empty() ? 0 : values.size() / sensors(); }
  double at(std::size_t sensor, std::size_t t) const { return values[sensor * steps() + t]; }
  double& at(std::size_t sensor, std::size_t t) { return values[sensor * steps() + t]; }
  std::span<const double> sensor(std::size_t i) const {
    return std::span<const double>(values).subspan(i * steps(), steps());
  }

  /// Empty frame with the given names and length, values zeroed.
  static TimeSeriesFrame zeros(std::vector<std::string> names, std::size_t steps);
};

/// Steps [begin, end) of a frame (labels sliced alongside).
TimeSeriesFrame slice_steps(const TimeSeriesFrame& frame, std::size_t begin, std::size_t end);

/// Reads a header row of sensor names (optional trailing "label" column) and
/// one time step per row.
TimeSeriesFrame load_csv(const std::filesystem::path& path);
TimeSeriesFrame parse_csv(const std::string& text, const std::string& source = "<memory>");
void save_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path);
std::string format_csv(const TimeSeriesFrame& frame);

/// Per-sensor min/max from training data.
struct NormStats {
  std::vector<double> min;
  std::vector<double> max;
};

inline constexpr double kNormEpsilon = 1e-8;

/// Fits stats; throws DataError naming sensor and step on NaN.
NormStats fit_minmax(const TimeSeriesFrame& frame);
/// (x - min) / (max - min + eps) with stored stats, no clamping.
TimeSeriesFrame apply_minmax(const TimeSeriesFrame& frame, const NormStats& stats);
/// Fit then apply. Stats are returned through `stats_out` when given.
TimeSeriesFrame minmax_normalize(const TimeSeriesFrame& frame, NormStats* stats_out = nullptr);

/// Sliding-window (context, target) pairs. Contexts are N x w, row-major per
/// sensor; target k is frame column target_indices[k].
struct WindowBatch {
  std::size_t sensors = 0;
  std::size_t width = 0;
  std::vector<std::vector<double>> contexts;
  std::vector<std::vector<double>> targets;
  std::vector<std::size_t> target_indices;
  std::vector<bool> padded;

  std::size_t size() const { return target_indices.size(); }
};

/// Targets at t = w, w + s, ...; when the last stride stops short of T - 1,
/// one extra target is added past the end with column T - 1 replicated.
WindowBatch make_windows(const TimeSeriesFrame& frame, std::size_t w, std::size_t s);

/// Temporal split: first ceil(ratio * T) steps train, rest validation. Each
/// side must keep at least `min_steps` steps.
std::pair<TimeSeriesFrame, TimeSeriesFrame> split_train_validation(const TimeSeriesFrame& frame,
                                                                   double ratio,
                                                                   std::size_t min_steps);

}  // namespace topogdn
