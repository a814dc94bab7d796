#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "commands.hpp"

using namespace topogdn::cli;

int main(int argc, char** argv) {
  CLI::App app{"Topology-enhanced graph deviation network for multivariate anomaly detection"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic series from a spec file");
  c_synth->add_option("spec", synth.spec_path, "Spec file (key=value)")->required();
  c_synth->add_option("-o,--out", synth.out_csv, "Full series CSV with labels");
  c_synth->add_option("--train", synth.train_csv, "Leading part of the series");
  c_synth->add_option("--test", synth.test_csv, "Trailing part of the series");
  c_synth->add_option("--split", synth.split, "Fraction of steps in the train part")
      ->capture_default_str();

  std::string config;
  auto* c_train = app.add_subcommand("train", "Train a model; writes the run directory");
  c_train->add_option("config", config, "Run config")->required();

  std::string test_csv, out_csv;
  auto* c_detect = app.add_subcommand("detect", "Score a series with a trained run");
  c_detect->add_option("config", config, "Run config")->required();
  c_detect->add_option("test", test_csv, "Series to score (default: test_csv from the config)");
  c_detect->add_option("-o,--out", out_csv, "Report CSV (default: <run dir>/scores.csv)");

  std::string report, labels;
  auto* c_eval = app.add_subcommand("eval", "Point-wise precision, recall and F1 of a report");
  c_eval->add_option("report", report, "Report CSV from detect")->required();
  c_eval->add_option("labels", labels, "CSV with a label column")->required();

  PlotOptions plot;
  auto* c_plot = app.add_subcommand("plot", "Barcode SVG or learned graph DOT");
  c_plot->add_option("kind", plot.kind, "barcode or graph")->required();
  c_plot->add_option("input", plot.input, "Graph fixture (barcode) or run config")->required();
  c_plot->add_option("-o,--out", plot.out_path, "Output file")->required();
  c_plot->add_option("--csv", plot.csv_path, "Barcode only: also write bars as CSV");
  c_plot->add_option("--data", plot.data_csv, "Barcode from a trained run: series CSV");
  c_plot->add_option("--step", plot.step, "Barcode from a trained run: target step");

  PlotOptions barcode{"barcode"};
  auto* c_barcode = app.add_subcommand("plot-barcode", "Shorthand for plot barcode");
  c_barcode->add_option("input", barcode.input, "Graph fixture or run config")->required();
  c_barcode->add_option("-o,--out", barcode.out_path, "SVG file")->required();
  c_barcode->add_option("--csv", barcode.csv_path, "Also write bars as CSV");
  c_barcode->add_option("--data", barcode.data_csv, "Series CSV (with a run config)");
  c_barcode->add_option("--step", barcode.step, "Target step (with a run config)");

  PlotOptions graph{"graph"};
  auto* c_graph = app.add_subcommand("plot-graph", "Shorthand for plot graph");
  c_graph->add_option("config", graph.input, "Run config")->required();
  c_graph->add_option("-o,--out", graph.out_path, "DOT file")->required();

  std::string key;
  std::vector<std::string> values;
  auto* c_sweep = app.add_subcommand("sweep", "Train and score once per value of a config key");
  c_sweep->add_option("config", config, "Run config")->required();
  c_sweep->add_option("key", key, "Config key")->required();
  c_sweep->add_option("values", values, "Values to try")->required()->delimiter(',');
  c_sweep->add_option("-o,--out", out_csv, "Table CSV (default: <output_dir>/sweep-<key>.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  spdlog::set_level(verbose ? spdlog::level::debug
                    : quiet ? spdlog::level::warn
                            : spdlog::level::info);
  spdlog::set_pattern("[%l] %v");

  if (*c_synth) return cmd_synth(synth);
  if (*c_train) return cmd_train(config);
  if (*c_detect) return cmd_detect(config, test_csv, out_csv);
  if (*c_eval) return cmd_eval(report, labels);
  if (*c_plot) return cmd_plot(plot);
  if (*c_barcode) return cmd_plot(barcode);
  if (*c_graph) return cmd_plot(graph);
  if (*c_sweep) return cmd_sweep(config, key, values, out_csv);
  return kExitInput;
}
