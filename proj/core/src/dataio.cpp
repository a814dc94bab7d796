#include "topogdn/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "topogdn/errors.hpp"

namespace topogdn {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view cell, double& out) {
  cell = trim(cell);
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size();
}

}  // namespace

TimeSeriesFrame TimeSeriesFrame::zeros(std::vector<std::string> names, std::size_t steps) {
  TimeSeriesFrame f;
  f.values.assign(names.size() * steps, 0.0);
  f.sensor_names = std::move(names);
  return f;
}

TimeSeriesFrame slice_steps(const TimeSeriesFrame& frame, std::size_t begin, std::size_t end) {
  if (begin > end || end > frame.steps())
    throw ContractError(
        fmt::format("slice [{}, {}) outside frame of {} steps", begin, end, frame.steps()));
  TimeSeriesFrame out = TimeSeriesFrame::zeros(frame.sensor_names, end - begin);
  for (std::size_t i = 0; i < frame.sensors(); ++i)
    for (std::size_t t = begin; t < end; ++t) out.at(i, t - begin) = frame.at(i, t);
  if (frame.labels)
    out.labels = std::vector<int>(frame.labels->begin() + static_cast<std::ptrdiff_t>(begin),
                                  frame.labels->begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

TimeSeriesFrame parse_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    for (auto cell : split_commas(line)) header.emplace_back(trim(cell));
    break;
  }
  if (header.empty()) throw ParseError(source + ": empty file");
  bool has_label = header.back() == "label";
  std::size_t n = header.size() - (has_label ? 1 : 0);
  if (n == 0) throw ParseError(source + ": no sensor columns in header");

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw ParseError(fmt::format("{}: line {}: expected {} cells, found {}", source, line_no,
                                   header.size(), cells.size()));
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i)
      if (!parse_double(cells[i], row[i]))
        throw ParseError(fmt::format("{}: line {}: non-numeric value '{}' in column '{}'",
                                     source, line_no, trim(cells[i]), header[i]));
    if (has_label) {
      double lab = 0;
      if (!parse_double(cells[n], lab) || (lab != 0.0 && lab != 1.0))
        throw ParseError(fmt::format("{}: line {}: label must be 0 or 1, got '{}'", source,
                                     line_no, trim(cells[n])));
      labels.push_back(static_cast<int>(lab));
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2)
    throw ParseError(fmt::format("{}: need at least 2 data rows, found {}", source, rows.size()));

  header.resize(n);
  TimeSeriesFrame frame = TimeSeriesFrame::zeros(std::move(header), rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < n; ++i) frame.at(i, t) = rows[t][i];
  if (has_label) frame.labels = std::move(labels);
  return frame;
}

TimeSeriesFrame load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path.string());
}

std::string format_csv(const TimeSeriesFrame& frame) {
  std::string out;
  for (std::size_t i = 0; i < frame.sensors(); ++i) {
    if (i) out += ',';
    out += frame.sensor_names[i];
  }
  if (frame.labels) out += ",label";
  out += '\n';
  for (std::size_t t = 0; t < frame.steps(); ++t) {
    for (std::size_t i = 0; i < frame.sensors(); ++i) {
      if (i) out += ',';
      out += fmt::format("{}", frame.at(i, t));
    }
    if (frame.labels) out += fmt::format(",{}", (*frame.labels)[t]);
    out += '\n';
  }
  return out;
}

void save_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_csv(frame);
  if (!out) throw IoError("failed writing " + path.string());
}

NormStats fit_minmax(const TimeSeriesFrame& frame) {
  NormStats stats;
  for (std::size_t i = 0; i < frame.sensors(); ++i) {
    auto col = frame.sensor(i);
    for (std::size_t t = 0; t < col.size(); ++t)
      if (std::isnan(col[t]))
        throw DataError(
            fmt::format("NaN in sensor '{}' at step {}", frame.sensor_names[i], t));
    auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    stats.min.push_back(*lo);
    stats.max.push_back(*hi);
  }
  return stats;
}

TimeSeriesFrame apply_minmax(const TimeSeriesFrame& frame, const NormStats& stats) {
  if (stats.min.size() != frame.sensors())
    throw ContractError(fmt::format("normalization stats cover {} sensors, frame has {}",
                                    stats.min.size(), frame.sensors()));
  TimeSeriesFrame out = frame;
  for (std::size_t i = 0; i < frame.sensors(); ++i) {
    double denom = stats.max[i] - stats.min[i] + kNormEpsilon;
    for (std::size_t t = 0; t < frame.steps(); ++t) {
      double v = frame.at(i, t);
      if (std::isnan(v))
        throw DataError(
            fmt::format("NaN in sensor '{}' at step {}", frame.sensor_names[i], t));
      out.at(i, t) = (v - stats.min[i]) / denom;
    }
  }
  return out;
}

TimeSeriesFrame minmax_normalize(const TimeSeriesFrame& frame, NormStats* stats_out) {
  NormStats stats = fit_minmax(frame);
  TimeSeriesFrame out = apply_minmax(frame, stats);
  if (stats_out) *stats_out = std::move(stats);
  return out;
}

WindowBatch make_windows(const TimeSeriesFrame& frame, std::size_t w, std::size_t s) {
  std::size_t T = frame.steps();
  if (w < 2) throw ConfigError(fmt::format("window size must be at least 2, got {}", w));
  if (s < 1) throw ConfigError("window stride must be at least 1");
  if (T <= w)
    throw ConfigError(fmt::format("frame of {} steps is too short for window {}", T, w));
  WindowBatch batch;
  batch.sensors = frame.sensors();
  batch.width = w;
  auto column = [&](std::size_t i, std::size_t t) { return frame.at(i, std::min(t, T - 1)); };
  auto push = [&](std::size_t t, bool padded) {
    std::vector<double> ctx(frame.sensors() * w);
    std::vector<double> target(frame.sensors());
    for (std::size_t i = 0; i < frame.sensors(); ++i) {
      for (std::size_t j = 0; j < w; ++j) ctx[i * w + j] = column(i, t - w + j);
      target[i] = column(i, t);
    }
    batch.contexts.push_back(std::move(ctx));
    batch.targets.push_back(std::move(target));
    batch.target_indices.push_back(t);
    batch.padded.push_back(padded);
  };
  std::size_t t = w;
  for (; t <= T - 1; t += s) push(t, false);
  std::size_t last = t - s;
  if (last < T - 1) push(last + s, true);
  return batch;
}

std::pair<TimeSeriesFrame, TimeSeriesFrame> split_train_validation(const TimeSeriesFrame& frame,
                                                                   double ratio,
                                                                   std::size_t min_steps) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw ConfigError(fmt::format("split ratio must lie in (0, 1), got {}", ratio));
  std::size_t T = frame.steps();
  // The small offset keeps exact products like 0.9 * 100 from rounding up.
  auto cut = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(T) - 1e-9));
  if (cut < min_steps || T - cut < min_steps)
    throw ConfigError(fmt::format(
        "split of {} steps at ratio {} leaves {} / {} steps; each side needs {}", T, ratio, cut,
        T - cut, min_steps));
  return {slice_steps(frame, 0, cut), slice_steps(frame, cut, T)};
}

}  // namespace topogdn
