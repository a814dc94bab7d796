#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "topogdn/config.hpp"
#include "topogdn/errors.hpp"
#include "topogdn/graphlearn.hpp"
#include "topogdn/pipeline.hpp"
#include "topogdn/synth.hpp"

namespace topogdn::cli {

namespace fs = std::filesystem;

namespace {

template <class F>
int guarded(Streams io, F&& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

RunConfig load_run_config(const std::string& path) {
  RunConfig config = load_config(path);
  if (apply_seed_override(config)) spdlog::info("seed overridden by TOPOGDN_SEED");
  return config;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string cell; std::getline(ss, cell, sep);) out.push_back(trim(cell));
  return out;
}

std::vector<int> read_labels(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw DataError(fmt::format("'{}' is empty", path));
  auto header = split(line, ',');
  auto it = std::find(header.begin(), header.end(), "label");
  if (it == header.end()) throw DataError(fmt::format("'{}' has no label column", path));
  std::size_t col = static_cast<std::size_t>(it - header.begin());
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != header.size())
      throw DataError(fmt::format("{}:{}: expected {} columns, got {}", path, lineno,
                                  header.size(), cells.size()));
    if (cells[col] != "0" && cells[col] != "1")
      throw DataError(fmt::format("{}:{}: label must be 0 or 1, got '{}'", path, lineno, cells[col]));
    labels.push_back(cells[col] == "1");
  }
  return labels;
}

void print_metrics(std::ostream& out, const Metrics& m) {
  out << fmt::format("precision={:.6f} recall={:.6f} f1={:.6f} tp={} fp={} fn={} tn={}\n",
                     m.precision, m.recall, m.f1, m.tp, m.fp, m.fn, m.tn);
}

std::vector<double> parse_numbers(const std::string& v, const std::string& key,
                                  const std::string& source) {
  std::vector<double> out;
  for (const auto& cell : split(v, ',')) {
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(cell, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (cell.empty() || used != cell.size())
      throw ParseError(fmt::format("{}: '{}' expects numbers, got '{}'", source, key, cell));
    out.push_back(x);
  }
  return out;
}

int barcode_from_model(const PlotOptions& o, Streams io) {
  RunConfig config = load_run_config(o.input);
  FittedRun run = load_run(config, config.run_dir());
  if (!run.model.topo()) throw ConfigError("the run has topological pooling disabled");
  TimeSeriesFrame frame = apply_minmax(load_csv(o.data_csv), run.norm);
  const std::size_t w = config.model.window, n = frame.sensors();
  if (n != run.model.config().nodes)
    throw DataError(fmt::format("data has {} sensors, the model was trained on {}", n,
                                run.model.config().nodes));
  if (o.step < w || o.step >= frame.steps())
    throw ConfigError(fmt::format("step must lie in [{}, {}), got {}", w, frame.steps(), o.step));
  std::vector<double> window(n * w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) window[i * w + j] = frame.at(i, o.step - w + j);
  ForwardTrace trace;
  {
    NoTapeScope quiet;
    run.model.forward(Tensor::from({n, w}, std::move(window)), &trace);
  }
  std::vector<Barcode> bars;
  for (std::size_t v = 0; v < trace.topo.views.size(); ++v)
    bars.push_back(to_barcode(trace.topo.diagrams[v], trace.topo.views[v]));
  write_text(o.out_path, barcode_svg(bars));
  if (!o.csv_path.empty()) write_text(o.csv_path, barcode_csv(bars));
  io.out << fmt::format("wrote {} views to {}\n", bars.size(), o.out_path);
  return kExitOk;
}

}  // namespace

Streams default_streams() { return Streams{std::cout, std::cerr}; }

int cmd_synth(const SynthOptions& o, Streams io) {
  return guarded(io, [&] {
    if (o.spec_path.empty()) throw SpecError("a spec path is required");
    SynthSpec spec = load_spec(o.spec_path);
    TimeSeriesFrame frame = generate(spec);
    if (!o.out_csv.empty()) write_text(o.out_csv, format_csv(frame));
    if (!o.train_csv.empty() || !o.test_csv.empty()) {
      if (!(o.split > 0.0 && o.split < 1.0))
        throw ConfigError(fmt::format("split must lie in (0, 1), got {}", o.split));
      auto cut = static_cast<std::size_t>(o.split * static_cast<double>(frame.steps()));
      if (!o.train_csv.empty()) write_text(o.train_csv, format_csv(slice_steps(frame, 0, cut)));
      if (!o.test_csv.empty()) write_text(o.test_csv, format_csv(slice_steps(frame, cut, frame.steps())));
    }
    std::size_t anomalous = std::count(frame.labels->begin(), frame.labels->end(), 1);
    io.out << fmt::format("{} sensors x {} steps, {} anomalous steps\n", frame.sensors(),
                          frame.steps(), anomalous);
    return kExitOk;
  });
}

int cmd_train(const std::string& config_path, Streams io) {
  return guarded(io, [&] {
    RunConfig config = load_run_config(config_path);
    if (config.train_csv.empty()) throw ConfigError("train_csv is not set");
    TimeSeriesFrame frame = load_csv(config.train_csv);
    FittedRun run = fit_run(config, frame, [](const EpochLog& e) {
      spdlog::info("epoch {} train_mse {:.6g} val_mse {:.6g}", e.epoch, e.train_mse, e.val_mse);
    });
    fs::path dir = config.run_dir();
    save_run(run, config, dir);
    io.out << fmt::format("run directory {}\nthreshold {}\n", dir.string(),
                          run.calibration.threshold);
    return kExitOk;
  });
}

int cmd_detect(const std::string& config_path, const std::string& test_csv,
               const std::string& out_csv, Streams io) {
  return guarded(io, [&] {
    RunConfig config = load_run_config(config_path);
    std::string data = test_csv.empty() ? config.test_csv : test_csv;
    if (data.empty()) throw ConfigError("no test data given and test_csv is not set");
    fs::path dir = config.run_dir();
    FittedRun run = load_run(config, dir);
    AnomalyReport report = score_run(run, config, load_csv(data));
    fs::path out = out_csv.empty() ? dir / kScoresFile : fs::path(out_csv);
    write_text(out, report.to_csv());
    std::size_t flagged = std::count(report.labels.begin(), report.labels.end(), 1);
    io.out << fmt::format("{} of {} steps flagged; report {}\n", flagged, report.size(),
                          out.string());
    if (report.metrics) print_metrics(io.out, *report.metrics);
    return kExitOk;
  });
}

int cmd_eval(const std::string& report_csv, const std::string& labels_csv, Streams io) {
  return guarded(io, [&] {
    AnomalyReport report = AnomalyReport::parse_csv(read_text(report_csv), report_csv);
    std::vector<int> labels = read_labels(labels_csv);
    // The labels must describe the series the report was computed on.
    std::size_t last = 0, padded_at = SIZE_MAX;
    bool any = false;
    for (std::size_t k = 0; k < report.size(); ++k) {
      if (report.padded[k]) {
        padded_at = std::min(padded_at, report.steps[k]);
      } else {
        last = std::max(last, report.steps[k]);
        any = true;
      }
    }
    bool fits = any && last < labels.size() &&
                (padded_at == SIZE_MAX ? labels.size() == last + 1 : labels.size() <= padded_at);
    if (!fits)
      throw DataError(fmt::format("{} labels do not match the report's series (last step {})",
                                  labels.size(), last));
    std::vector<int> pred, truth;
    for (std::size_t k = 0; k < report.size(); ++k)
      if (!report.padded[k]) {
        pred.push_back(report.labels[k]);
        truth.push_back(labels[report.steps[k]]);
      }
    print_metrics(io.out, evaluate(pred, truth));
    return kExitOk;
  });
}

GraphFixture parse_fixture(const std::string& text, const std::string& source) {
  GraphFixture f;
  std::optional<std::size_t> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(fmt::format("{}:{}: expected key=value", source, lineno));
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto where = fmt::format("{}:{}", source, lineno);
    if (key == "nodes") {
      auto v = parse_numbers(value, key, where);
      if (v.size() != 1 || v[0] < 1 || v[0] != static_cast<double>(static_cast<std::size_t>(v[0])))
        throw ParseError(where + ": nodes expects a positive integer");
      nodes = static_cast<std::size_t>(v[0]);
    } else if (key == "edges") {
      for (const auto& e : split(value, ',')) {
        if (e.empty()) continue;
        auto ends = parse_numbers(std::string(e).replace(e.find('-'), 1, ","), key, where);
        if (ends.size() != 2 || ends[0] < 0 || ends[1] < 0)
          throw ParseError(fmt::format("{}: bad edge '{}'", where, e));
        edges.emplace_back(static_cast<std::size_t>(ends[0]), static_cast<std::size_t>(ends[1]));
      }
    } else if (key == "values") {
      f.values = parse_numbers(value, key, where);
    } else if (key == "thresholds") {
      f.thresholds = parse_numbers(value, key, where);
    } else if (key == "filtrations") {
      auto v = parse_numbers(value, key, where);
      if (v.size() != 1 || v[0] < 1) throw ParseError(where + ": filtrations must be >= 1");
      f.filtrations = static_cast<std::size_t>(v[0]);
    } else if (key == "mode") {
      if (value == "graph") f.mode = ComplexMode::Graph;
      else if (value == "clique") f.mode = ComplexMode::Clique;
      else throw ParseError(fmt::format("{}: unknown mode '{}'", where, value));
    } else {
      throw ParseError(fmt::format("{}: unknown key '{}'", where, key));
    }
  }
  if (!nodes) throw ParseError(source + ": nodes is required");
  if (f.values.size() != *nodes)
    throw ParseError(fmt::format("{}: {} values for {} nodes", source, f.values.size(), *nodes));
  f.graph = UndirectedGraph::from_edges(*nodes, std::move(edges));
  return f;
}

Barcode fixture_barcode(const GraphFixture& f) {
  FiltrationView view = f.thresholds ? explicit_view(f.values, *f.thresholds)
                                     : quantile_view(f.values, f.filtrations);
  return to_barcode(compute_persistence(view, f.graph, f.mode), view);
}

int cmd_plot(const PlotOptions& o, Streams io) {
  return guarded(io, [&] {
    if (o.out_path.empty()) throw ConfigError("an output path is required");
    if (o.kind == "barcode") {
      if (!o.data_csv.empty()) return barcode_from_model(o, io);
      std::vector<Barcode> bars{fixture_barcode(parse_fixture(read_text(o.input), o.input))};
      write_text(o.out_path, barcode_svg(bars));
      if (!o.csv_path.empty()) write_text(o.csv_path, barcode_csv(bars));
      io.out << fmt::format("wrote {} bars to {}\n", bars[0].bars.size(), o.out_path);
      return kExitOk;
    }
    if (o.kind == "graph") {
      RunConfig config = load_run_config(o.input);
      FittedRun run = load_run(config, config.run_dir());
      std::vector<std::string> names = run.sensor_names;
      if (names.size() != run.model.config().nodes) {
        names.clear();
        for (std::size_t i = 0; i < run.model.config().nodes; ++i)
          names.push_back(fmt::format("s{}", i));
      }
      write_text(o.out_path, adjacency_to_dot(run.model.graph().adjacency(), names));
      io.out << fmt::format("wrote graph of {} sensors to {}\n", names.size(), o.out_path);
      return kExitOk;
    }
    throw ConfigError(fmt::format("unknown plot kind '{}' (expected barcode or graph)", o.kind));
  });
}

int cmd_sweep(const std::string& config_path, const std::string& key,
              const std::vector<std::string>& values, const std::string& out_csv, Streams io) {
  return guarded(io, [&] {
    RunConfig base = load_run_config(config_path);
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    std::vector<RunConfig> configs;
    for (const auto& v : values) {
      RunConfig c = base;
      set_config_value(c, key, v);
      configs.push_back(std::move(c));
    }
    if (base.train_csv.empty() || base.test_csv.empty())
      throw ConfigError("sweep needs both train_csv and test_csv");
    TimeSeriesFrame train_frame = load_csv(base.train_csv);
    TimeSeriesFrame test_frame = load_csv(base.test_csv);
    if (!test_frame.labels) throw DataError("sweep needs a labelled test series");
    std::string csv = "value,precision,recall,f1\n";
    for (std::size_t k = 0; k < values.size(); ++k) {
      FittedRun run = fit_run(configs[k], train_frame);
      AnomalyReport report = score_run(run, configs[k], test_frame);
      const Metrics& m = *report.metrics;
      csv += fmt::format("{},{},{},{}\n", values[k], m.precision, m.recall, m.f1);
      io.out << fmt::format("{}={} f1={:.4f}\n", key, values[k], m.f1);
    }
    fs::path out = out_csv.empty() ? fs::path(base.output_dir) / fmt::format("sweep-{}.csv", key)
                                   : fs::path(out_csv);
    write_text(out, csv);
    io.out << fmt::format("sweep table {}\n", out.string());
    return kExitOk;
  });
}

}  // namespace topogdn::cli
