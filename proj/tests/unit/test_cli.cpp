#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "commands.hpp"
#include "topogdn/dataio.hpp"
#include "topogdn/model.hpp"
#include "topogdn/pipeline.hpp"

using namespace topogdn;
using namespace topogdn::cli;
namespace fs = std::filesystem;

namespace {

struct Captured {
  std::ostringstream out, err;
  Streams io() { return {out, err}; }
};

fs::path scratch() {
  static fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("topogdn_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string put(const std::string& name, const std::string& text) {
  auto p = scratch() / name;
  write_text(p, text);
  return p.string();
}

std::string config_text(const std::string& extra = "") {
  return "train_csv=" + (scratch() / "train.csv").string() + "\n" +
         "test_csv=" + (scratch() / "test.csv").string() + "\n" +
         "output_dir=" + (scratch() / "runs").string() + "\n"
         "window=16\nstride=4\nepochs=3\nembed_dim=16\ntop_k=3\nbatch_size=16\n"
         "learning_rate=0.005\nfiltrations=4\nsamples_q=4\nviews=4\nseed=42\n" +
         extra;
}

// Six sensors, 600 steps, anomalies in the second half; split in two.
class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    auto spec = put("small.spec",
                    "sensors=6\nsteps=600\nseed=3\nanomaly_fraction=0.05\nanomaly_start=300\n");
    Captured c;
    SynthOptions o;
    o.spec_path = spec;
    o.out_csv = (scratch() / "full.csv").string();
    o.train_csv = (scratch() / "train.csv").string();
    o.test_csv = (scratch() / "test.csv").string();
    ASSERT_EQ(cmd_synth(o, c.io()), kExitOk) << c.err.str();
    config_ = put("run.conf", config_text());
    ASSERT_EQ(cmd_train(config_, c.io()), kExitOk) << c.err.str();
  }

  static fs::path run_dir() { return load_config(config_).run_dir(); }
  static std::string config_;
};

std::string CliRun::config_;

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_F(CliRun, SynthWritesSeriesAndSplit) {
  auto full = load_csv(scratch() / "full.csv");
  auto train = load_csv(scratch() / "train.csv");
  auto test = load_csv(scratch() / "test.csv");
  EXPECT_EQ(full.sensors(), 6u);
  EXPECT_EQ(full.steps(), 600u);
  EXPECT_EQ(train.steps(), 300u);
  EXPECT_EQ(test.steps(), 300u);
  ASSERT_TRUE(test.labels.has_value());
  EXPECT_EQ(std::count(test.labels->begin(), test.labels->end(), 1), 30);
}

TEST(Cli, SynthRejectsBadSpecs) {
  Captured c;
  SynthOptions o;
  o.spec_path = put("overlap.spec",
                    "sensors=3\nsteps=100\nanomaly=spike,0,10,5,1\nanomaly=spike,0,12,5,1\n");
  o.out_csv = (scratch() / "never.csv").string();
  EXPECT_EQ(cmd_synth(o, c.io()), kExitInput);
  EXPECT_NE(c.err.str().find("overlaps"), std::string::npos) << c.err.str();
  o.spec_path = (scratch() / "missing.spec").string();
  EXPECT_EQ(cmd_synth(o, c.io()), kExitInput);
  EXPECT_NE(c.err.str().find("missing.spec"), std::string::npos) << c.err.str();
}

TEST_F(CliRun, TrainWritesTheRunDirectory) {
  for (const char* f : {kConfigFile, kCheckpointFile, kTrainLogFile, kSensorsFile})
    EXPECT_TRUE(fs::exists(run_dir() / f)) << f;
  auto log = read_text(run_dir() / kTrainLogFile);
  EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,train_mse,val_mse");
}

TEST_F(CliRun, ZeroLearningRateGivesAFlatLog) {
  Captured c;
  auto cfg = put("flat.conf", config_text("learning_rate=0\nearly_stop_patience=0\n"));
  ASSERT_EQ(cmd_train(cfg, c.io()), kExitOk) << c.err.str();
  auto log = parse_csv(read_text(load_config(cfg).run_dir() / kTrainLogFile));
  auto val = log.sensor(2);  // val_mse
  ASSERT_EQ(val.size(), 3u);
  EXPECT_EQ(val[0], val[1]);
  EXPECT_EQ(val[1], val[2]);
}

TEST(Cli, TrainRejectsBadData) {
  Captured c;
  put("bad.csv", "a,b\n1,2\n3\n");
  auto cfg = put("bad.conf", config_text() + "train_csv=" + (scratch() / "bad.csv").string() + "\n");
  EXPECT_EQ(cmd_train(cfg, c.io()), kExitInput);
  EXPECT_EQ(cmd_train((scratch() / "nope.conf").string(), c.io()), kExitInput);
}

TEST_F(CliRun, DetectAndEvaluate) {
  Captured c;
  ASSERT_EQ(cmd_detect(config_, "", "", c.io()), kExitOk) << c.err.str();
  auto report = AnomalyReport::parse_csv(read_text(run_dir() / kScoresFile));
  EXPECT_EQ(report.size(), 300u - 16u);
  Captured e;
  ASSERT_EQ(cmd_eval((run_dir() / kScoresFile).string(), (scratch() / "test.csv").string(), e.io()),
            kExitOk)
      << e.err.str();
  EXPECT_NE(e.out.str().find("f1="), std::string::npos);
}

TEST(Cli, DetectOnTrainingDataFlagsAlmostNothing) {
  // A model that has fitted its training series, with a longer held-out tail.
  auto spec = put("long.spec",
                  "sensors=6\nsteps=2000\nseed=3\nanomaly_fraction=0.05\nanomaly_start=1000\n");
  Captured c;
  SynthOptions o;
  o.spec_path = spec;
  o.out_csv = (scratch() / "long_full.csv").string();
  o.train_csv = (scratch() / "long_train.csv").string();
  o.test_csv = (scratch() / "long_test.csv").string();
  ASSERT_EQ(cmd_synth(o, c.io()), kExitOk) << c.err.str();
  auto cfg = put("long.conf", config_text("epochs=20\nvalidation_ratio=0.2\ntrain_csv=" +
                                          o.train_csv + "\n"));
  ASSERT_EQ(cmd_train(cfg, c.io()), kExitOk) << c.err.str();
  auto out = (scratch() / "train_scores.csv").string();
  ASSERT_EQ(cmd_detect(cfg, o.train_csv, out, c.io()), kExitOk) << c.err.str();
  auto report = AnomalyReport::parse_csv(read_text(out));
  double rate = double(std::count(report.labels.begin(), report.labels.end(), 1)) / report.size();
  EXPECT_LT(rate, 0.05);
}

TEST_F(CliRun, DetectFailures) {
  Captured c;
  auto untrained = put("untrained.conf", config_text("top_k=2\n"));
  EXPECT_EQ(cmd_detect(untrained, "", "", c.io()), kExitInput);
  EXPECT_NE(c.err.str().find("error"), std::string::npos);
  // Seven sensors against a six-sensor model.
  auto frame = load_csv(scratch() / "test.csv");
  auto wide = TimeSeriesFrame::zeros({"a", "b", "c", "d", "e", "f", "g"}, frame.steps());
  put("wide.csv", format_csv(wide));
  EXPECT_EQ(cmd_detect(config_, (scratch() / "wide.csv").string(), "", c.io()), kExitInput);
}

TEST_F(CliRun, RunsAreReproducible) {
  Captured c;
  auto a = (scratch() / "rep_a.csv").string(), b = (scratch() / "rep_b.csv").string();
  ASSERT_EQ(cmd_detect(config_, "", a, c.io()), kExitOk);
  ASSERT_EQ(cmd_train(config_, c.io()), kExitOk);
  ASSERT_EQ(cmd_detect(config_, "", b, c.io()), kExitOk);
  EXPECT_EQ(read_text(a), read_text(b));
}

TEST_F(CliRun, SeedFromEnvironment) {
  Captured c;
  ::setenv("TOPOGDN_SEED", "7", 1);
  int code = cmd_train(config_, c.io());
  ::unsetenv("TOPOGDN_SEED");
  ASSERT_EQ(code, kExitOk) << c.err.str();
  auto cfg = load_config(config_);
  set_config_value(cfg, "seed", "7");
  EXPECT_TRUE(fs::exists(cfg.run_dir() / kCheckpointFile));
  EXPECT_NE(cfg.run_dir(), run_dir());
}

TEST(Cli, EvalPerfectAndEmpty) {
  put("labels.csv", "label\n0\n1\n1\n0\n");
  put("perfect.csv", "t,score,label_pred,label_true,padded,sensor\n"
                     "0,0,0,0,0,0\n1,2,1,1,0,0\n2,3,1,1,0,0\n3,0,0,0,0,0\n");
  put("empty.csv", "t,score,label_pred,label_true,padded,sensor\n"
                   "0,0,0,0,0,0\n1,0,0,1,0,0\n2,0,0,1,0,0\n3,0,0,0,0,0\n");
  Captured c;
  ASSERT_EQ(cmd_eval((scratch() / "perfect.csv").string(), (scratch() / "labels.csv").string(),
                     c.io()),
            kExitOk)
      << c.err.str();
  EXPECT_NE(c.out.str().find("precision=1.000000 recall=1.000000 f1=1.000000"), std::string::npos)
      << c.out.str();
  Captured d;
  ASSERT_EQ(cmd_eval((scratch() / "empty.csv").string(), (scratch() / "labels.csv").string(),
                     d.io()),
            kExitOk);
  EXPECT_NE(d.out.str().find("precision=0.000000 recall=0.000000 f1=0.000000"), std::string::npos)
      << d.out.str();
}

TEST(Cli, EvalLengthMismatch) {
  put("short_labels.csv", "label\n0\n1\n");
  put("four.csv", "t,score,label_pred,label_true,padded,sensor\n"
                  "0,0,0,,0,0\n1,0,0,,0,0\n2,0,0,,0,0\n3,0,0,,0,0\n");
  Captured c;
  EXPECT_EQ(cmd_eval((scratch() / "four.csv").string(), (scratch() / "short_labels.csv").string(),
                     c.io()),
            kExitInput);
}

TEST_F(CliRun, GraphPlotHasTopKOutDegree) {
  auto cfg = put("k5.conf", config_text("top_k=5\n"));
  Captured c;
  ASSERT_EQ(cmd_train(cfg, c.io()), kExitOk) << c.err.str();
  PlotOptions o;
  o.kind = "graph";
  o.input = cfg;
  o.out_path = (scratch() / "graph.dot").string();
  ASSERT_EQ(cmd_plot(o, c.io()), kExitOk) << c.err.str();
  auto dot = read_text(o.out_path);
  std::regex edge(R"re("?(\w+)"?\s*->)re");
  std::map<std::string, int> degree;
  for (std::sregex_iterator it(dot.begin(), dot.end(), edge), end; it != end; ++it)
    ++degree[(*it)[1]];
  ASSERT_EQ(degree.size(), 6u);
  for (auto& [node, d] : degree) EXPECT_EQ(d, 5) << node;
}

TEST(Cli, UnknownPlotKind) {
  PlotOptions o;
  o.kind = "histogram";
  o.input = put("path.fix", "nodes=2\nedges=0-1\nvalues=0,1\n");
  o.out_path = (scratch() / "x.svg").string();
  Captured c;
  EXPECT_EQ(cmd_plot(o, c.io()), kExitInput);
}

TEST(Cli, FixtureParsing) {
  auto f = parse_fixture("# comment\nnodes=3\nedges=0-1, 1-2\nvalues=0.5,0,1\nmode=clique\n");
  EXPECT_EQ(f.graph.nodes, 3u);
  EXPECT_EQ(f.graph.edges.size(), 2u);
  EXPECT_EQ(f.values, (std::vector<double>{0.5, 0, 1}));
  EXPECT_EQ(f.mode, ComplexMode::Clique);
  EXPECT_FALSE(f.thresholds.has_value());
  EXPECT_ANY_THROW(parse_fixture("nodes=2\n"));
  EXPECT_ANY_THROW(parse_fixture("nodes=2\nvalues=0,1\ncolour=red\n"));
  EXPECT_ANY_THROW(parse_fixture("nodes=2\nvalues=0,1\nedges=0-5\n"));
}

TEST(Cli, PathGraphBarcodeMatchesGolden) {
  PlotOptions o;
  o.kind = "barcode";
  o.input = TOPOGDN_GOLDEN_DIR "/path_graph.fix";
  o.out_path = (scratch() / "path.svg").string();
  o.csv_path = (scratch() / "path.csv").string();
  Captured c;
  ASSERT_EQ(cmd_plot(o, c.io()), kExitOk) << c.err.str();
  auto golden_csv = read_text(TOPOGDN_GOLDEN_DIR "/path_graph.csv");
  auto golden_svg = read_text(TOPOGDN_GOLDEN_DIR "/path_graph.svg");
  EXPECT_EQ(read_text(o.csv_path), golden_csv);
  EXPECT_EQ(read_text(o.out_path), golden_svg);
}

TEST(Cli, GoldenSvgDrawsTheGoldenBars) {
  // One red bar per dim0 row, positioned on a 400-pixel axis starting at x = 60.
  auto csv = parse_csv(read_text(TOPOGDN_GOLDEN_DIR "/path_graph.csv"));
  auto svg = read_text(TOPOGDN_GOLDEN_DIR "/path_graph.svg");
  EXPECT_EQ(count(svg, "fill=\"red\""), csv.steps());
  EXPECT_EQ(count(svg, "fill=\"blue\""), 0u);
  std::regex rect(R"re(class="dim0" x="([0-9.]+)" y="[0-9.]+" width="([0-9.]+)")re");
  std::vector<std::pair<double, double>> drawn;
  for (std::sregex_iterator it(svg.begin(), svg.end(), rect), end; it != end; ++it)
    drawn.push_back({std::stod((*it)[1]), std::stod((*it)[2])});
  ASSERT_EQ(drawn.size(), csv.steps());
  for (std::size_t r = 0; r < csv.steps(); ++r) {
    double birth = csv.at(2, r), death = csv.at(3, r);
    EXPECT_DOUBLE_EQ(drawn[r].first, 60 + 400 * birth);
    EXPECT_DOUBLE_EQ(drawn[r].second, std::max(1.0, 400 * (death - birth)));
  }
}

TEST_F(CliRun, SweepWritesOneRowPerValue) {
  Captured c;
  auto out = (scratch() / "sweep.csv").string();
  ASSERT_EQ(cmd_sweep(config_, "top_k", {"2", "3", "5"}, out, c.io()), kExitOk) << c.err.str();
  auto text = read_text(out);
  EXPECT_EQ(text.substr(0, text.find('\n')), "value,precision,recall,f1");
  EXPECT_EQ(count(text, "\n"), 4u);
  EXPECT_EQ(text.find("\n2,"), text.find('\n'));
}

TEST_F(CliRun, SweepRejectsBadValues) {
  Captured c;
  EXPECT_EQ(cmd_sweep(config_, "top_k", {}, "", c.io()), kExitInput);
  EXPECT_EQ(cmd_sweep(config_, "top_k", {"5", "abc"}, "", c.io()), kExitInput);
  EXPECT_EQ(cmd_sweep(config_, "no_such_key", {"1"}, "", c.io()), kExitInput);
}
