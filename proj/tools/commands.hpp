#pragma once

// Command implementations behind the topogdn executable. Each returns the
// process exit code: 0 success, 2 input or configuration error, 3 numerical
// failure. Messages go to the given streams.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "topogdn/topology.hpp"

namespace topogdn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

Streams default_streams();

struct SynthOptions {
  std::string spec_path;
  std::string out_csv;
  // Optional temporal split written next to the full series.
  std::string train_csv;
  std::string test_csv;
  double split = 0.5;
};
int cmd_synth(const SynthOptions& options, Streams io = default_streams());

int cmd_train(const std::string& config_path, Streams io = default_streams());

/// Writes the report to `out_csv`, or to <run dir>/scores.csv when empty.
int cmd_detect(const std::string& config_path, const std::string& test_csv,
               const std::string& out_csv = "", Streams io = default_streams());

/// labels_csv: a series CSV with a "label" column, or a single "label" column.
int cmd_eval(const std::string& report_csv, const std::string& labels_csv,
             Streams io = default_streams());

/// Graph fixture for barcode plots: "nodes=", "edges=u-v,u-v", "values=",
/// optional "thresholds=", "filtrations=" and "mode=graph|clique".
struct GraphFixture {
  UndirectedGraph graph;
  std::vector<double> values;
  std::optional<std::vector<double>> thresholds;
  std::size_t filtrations = 8;
  ComplexMode mode = ComplexMode::Graph;
};
GraphFixture parse_fixture(const std::string& text, const std::string& source = "<fixture>");
/// Barcode of the fixture's single view.
Barcode fixture_barcode(const GraphFixture& fixture);

struct PlotOptions {
  std::string kind;    // "barcode" or "graph"
  std::string input;   // fixture file (barcode) or run config (graph, model barcode)
  std::string out_path;
  std::string csv_path;   // barcode only: also write the bar table
  std::string data_csv;   // barcode from a trained model: series to take a window from
  std::size_t step = 0;   // target step of that window
};
int cmd_plot(const PlotOptions& options, Streams io = default_streams());

/// Trains and scores once per value of `key`; writes "value,precision,recall,f1".
int cmd_sweep(const std::string& config_path, const std::string& key,
              const std::vector<std::string>& values, const std::string& out_csv = "",
              Streams io = default_streams());

}  // namespace topogdn::cli
