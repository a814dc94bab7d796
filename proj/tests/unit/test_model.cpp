#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "topogdn/errors.hpp"
#include "topogdn/model.hpp"

using namespace topogdn;

namespace {

ModelConfig small_config(std::uint64_t seed = 3) {
  ModelConfig c;
  c.nodes = 5;
  c.window = 12;
  c.embed_dim = 8;
  c.top_k = 2;
  c.seed = seed;
  c.topo.samples_q = 4;
  c.topo.instances_per_family = 1;
  return c;
}

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(0, 1);
  return v;
}

std::vector<double> as_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

void copy_shared_parameters(TopoGDNModel& from, TopoGDNModel& to) {
  auto src = from.parameters();
  for (auto& p : to.parameters())
    for (auto& q : src)
      if (q.name == p.name) *p.tensor = Tensor::from(q.tensor->shape(), as_vector(*q.tensor), true);
  to.rebuild_graph();
}

Calibration calibration_of(std::vector<double> median, std::vector<double> iqr) {
  Calibration c;
  c.median = std::move(median);
  c.iqr = std::move(iqr);
  return c;
}

}  // namespace

TEST(Model, ForwardShapeAndDeterminism) {
  Rng rng(1);
  auto x = random_values(3 * 5 * 12, rng);
  TopoGDNModel a(small_config()), b(small_config());
  NoTapeScope quiet;
  Tensor ya = a.forward(Tensor::from({15, 12}, x));
  Tensor yb = b.forward(Tensor::from({15, 12}, x));
  EXPECT_EQ(ya.shape(), (Shape{3, 5}));
  EXPECT_EQ(as_vector(ya), as_vector(yb));
  for (double v : ya.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Model, BatchedCopiesMatchSingleWindowsWithoutTopology) {
  // Without the pooling layer each copy is independent of its neighbours in the batch.
  auto c = small_config();
  c.ta_enabled = false;
  TopoGDNModel model(c);
  Rng rng(2);
  auto x = random_values(4 * 5 * 12, rng);
  NoTapeScope quiet;
  Tensor y = model.forward(Tensor::from({20, 12}, x));
  for (std::size_t b = 0; b < 4; ++b) {
    auto single = model.predict(std::span<const double>(x).subspan(b * 60, 60));
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(y.at(b, i), single[i], 1e-14);
  }
}

TEST(Model, BadShapesAreContractErrors) {
  TopoGDNModel model(small_config());
  NoTapeScope quiet;
  EXPECT_THROW(model.forward(Tensor::zeros({7, 12})), ContractError);
  EXPECT_THROW(model.forward(Tensor::zeros({5, 11})), ContractError);
  EXPECT_THROW(model.predict(std::vector<double>(59, 0.0)), ContractError);
}

TEST(Model, BadConfigurationsAreConfigErrors) {
  auto c = small_config();
  c.nodes = 1;
  EXPECT_THROW(TopoGDNModel{c}, ConfigError);
  c = small_config();
  c.window = 5;  // narrower than the width-7 kernel
  EXPECT_THROW(TopoGDNModel{c}, ConfigError);
  c = small_config();
  c.embed_dim = 0;
  EXPECT_THROW(TopoGDNModel{c}, ConfigError);
}

TEST(Model, OutDegreeIsClampedTopK) {
  auto c = small_config();
  c.top_k = 20;
  TopoGDNModel model(c);
  for (const auto& row : model.graph().adjacency().neighbors) EXPECT_EQ(row.size(), 4u);
}

TEST(Model, ZeroTopologyMatchesTheModelWithoutIt) {
  auto with = small_config();
  auto without = small_config();
  without.ta_enabled = false;
  TopoGDNModel a(with), b(without);
  copy_shared_parameters(a, b);
  for (Tensor* t : {&a.topo()->node_weight, &a.topo()->node_bias, &a.topo()->global_weight,
                    &a.topo()->global_bias})
    for (auto& v : t->data()) v = 0.0;
  Rng rng(4);
  auto x = random_values(2 * 5 * 12, rng);
  NoTapeScope quiet;
  EXPECT_EQ(as_vector(a.forward(Tensor::from({10, 12}, x))),
            as_vector(b.forward(Tensor::from({10, 12}, x))));
}

TEST(Model, ConstantWindowLayerByLayer) {
  auto c = small_config();
  c.ta_enabled = false;
  c.output_layers = 1;
  TopoGDNModel model(c);
  for (auto& k : model.parameters())
    if (k.name.rfind("temporal.", 0) == 0)
      for (auto& v : k.tensor->data()) v = 0.0;
  for (auto& v : model.parameters().back().tensor->data()) v = 0.3;  // output bias

  std::vector<double> window(5 * 12, 0.4);
  auto pred = model.predict(window);

  // Zero kernels leave the residual, so attention sees the raw window.
  NoTapeScope quiet;
  Tensor z = model.attention().forward(Tensor::from({5, 12}, window), model.graph().embeddings(),
                                       message_edges(model.graph().adjacency()));
  const Tensor& e = model.graph().embeddings();
  Tensor weight;
  for (auto& p : model.parameters())
    if (p.name == "output.layer0.weight") weight = *p.tensor;
  for (std::size_t i = 0; i < 5; ++i) {
    double top = -INFINITY;
    for (std::size_t d = 0; d < 8; ++d) top = std::max(top, e.at(i, d));
    double norm = 0;
    for (std::size_t d = 0; d < 8; ++d) norm += std::exp(e.at(i, d) - top);
    double expected = 0.3;
    for (std::size_t d = 0; d < 8; ++d)
      expected += z.at(i, d) * (std::exp(e.at(i, d) - top) / norm) * weight.at(d, 0);
    EXPECT_NEAR(pred[i], expected, 1e-13);
  }
}

TEST(Model, CheckpointRoundTrip) {
  TopoGDNModel a(small_config(3));
  TopoGDNModel b(small_config(99));
  auto path = (std::filesystem::temp_directory_path() / "topogdn_model_rt.ckpt").string();
  save_checkpoint(path, a.state());
  b.load_state(load_checkpoint(path));
  std::filesystem::remove(path);
  Rng rng(5);
  auto x = random_values(60, rng);
  EXPECT_EQ(a.predict(x), b.predict(x));
  EXPECT_EQ(a.graph().adjacency(), b.graph().adjacency());
}

TEST(Model, LoadingIntoADifferentShapeFails) {
  TopoGDNModel a(small_config());
  auto c = small_config();
  c.nodes = 6;
  TopoGDNModel b(c);
  EXPECT_THROW(b.load_state(a.state()), ContractError);
}

TEST(Score, MediansScoreZero) {
  auto cal = calibration_of({0.1, 0.2, 0.3}, {0.5, 0.5, 0.5});
  std::vector<double> pred{1.1, 2.2, 3.3}, actual{1.0, 2.0, 3.0};
  EXPECT_NEAR(anomaly_score(pred, actual, cal), 0.0, 1e-15);
}

TEST(Score, OneUnitDeviation) {
  auto cal = calibration_of({0.1, 0.1, 0.1}, {0.25, 0.25, 0.25});
  std::vector<double> pred{0.1, 0.35, 0.1}, actual{0, 0, 0};
  std::size_t at = 9;
  double s = anomaly_score(pred, actual, cal, &at);
  EXPECT_NEAR(s, 1.0, 1e-7);
  EXPECT_EQ(at, 1u);
}

TEST(Score, MatchesBruteForceMaximum) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    std::size_t n = 1 + rng.below(10);
    auto cal = calibration_of(random_values(n, rng), random_values(n, rng));
    auto pred = random_values(n, rng), actual = random_values(n, rng);
    double best = -INFINITY;
    for (std::size_t i = 0; i < n; ++i)
      best = std::max(best, (std::fabs(pred[i] - actual[i]) - cal.median[i]) / (cal.iqr[i] + 1e-8));
    EXPECT_EQ(anomaly_score(pred, actual, cal), best);
  }
}

TEST(Score, MissingCalibrationIsContractError) {
  std::vector<double> v{1, 2};
  EXPECT_THROW(anomaly_score(v, v, Calibration{}), ContractError);
}

TEST(Calibration, MedianAndIqrPerSensor) {
  // Two sensors, five rows; column 0 = 1..5, column 1 = 10, 0, 0, 0, 0.
  std::vector<double> errors{1, 10, 2, 0, 3, 0, 4, 0, 5, 0};
  auto cal = fit_calibration(errors, 2);
  EXPECT_EQ(cal.median, (std::vector<double>{3, 0}));
  EXPECT_EQ(cal.iqr, (std::vector<double>{2, 0}));
  EXPECT_THROW(fit_calibration(errors, 3), ConfigError);
}

TEST(Threshold, MaximumOfValidationScores) {
  EXPECT_EQ(calibrate_threshold(std::vector<double>{0.1, 0.5, 0.3}), 0.5);
  EXPECT_EQ(calibrate_threshold(std::vector<double>{-2.0}), -2.0);
  EXPECT_EQ(calibrate_threshold(std::vector<double>{0.7, 0.7, 0.7}), 0.7);
  EXPECT_THROW(calibrate_threshold(std::vector<double>{}), ConfigError);
}

TEST(Evaluate, PerfectPrediction) {
  std::vector<int> y{0, 1, 1, 0, 1};
  auto m = evaluate(y, y);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.f1, 1.0);
}

TEST(Evaluate, HarmonicMean) {
  // tp 2, fp 1, fn 2.
  std::vector<int> pred{1, 1, 1, 0, 0, 0}, truth{1, 1, 0, 1, 1, 0};
  auto m = evaluate(pred, truth);
  EXPECT_EQ(m.precision, 2.0 / 3.0);
  EXPECT_EQ(m.recall, 0.5);
  EXPECT_EQ(m.f1, 4.0 / 7.0);
  EXPECT_EQ(m.tn, 1u);
}

TEST(Evaluate, NoPredictedPositives) {
  std::vector<int> pred{0, 0, 0}, truth{0, 1, 1};
  auto m = evaluate(pred, truth);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.f1, 0.0);
}

TEST(Evaluate, LengthMismatchIsContractError) {
  std::vector<int> a{0, 1}, b{0};
  EXPECT_THROW(evaluate(a, b), ContractError);
}

TEST(Report, CsvRoundTrip) {
  AnomalyReport r;
  r.steps = {3, 4, 5};
  r.scores = {0.125, -1.5e-3, 7.0};
  r.labels = {0, 0, 1};
  r.truth = {0, 1, 1};
  r.padded = {0, 0, 1};
  r.sensor = {2, 0, 1};
  auto text = r.to_csv();
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,score,label_pred,label_true,padded,sensor");
  auto back = AnomalyReport::parse_csv(text);
  EXPECT_EQ(back.steps, r.steps);
  EXPECT_EQ(back.scores, r.scores);
  EXPECT_EQ(back.labels, r.labels);
  EXPECT_EQ(back.truth, r.truth);
  EXPECT_EQ(back.padded, r.padded);
  EXPECT_EQ(back.sensor, r.sensor);
  EXPECT_EQ(back.to_csv(), text);
}

TEST(Report, UnlabelledRoundTripAndMalformedInput) {
  AnomalyReport r;
  r.steps = {1};
  r.scores = {0.5};
  r.labels = {1};
  r.padded = {0};
  r.sensor = {0};
  auto back = AnomalyReport::parse_csv(r.to_csv());
  EXPECT_TRUE(back.truth.empty());
  EXPECT_THROW(AnomalyReport::parse_csv(""), ParseError);
  EXPECT_THROW(AnomalyReport::parse_csv("a,b\n1,2\n"), ParseError);
  EXPECT_THROW(AnomalyReport::parse_csv("t,score,label_pred,label_true,padded,sensor\n1,2\n"),
               ParseError);
}

TEST(Detect, LabelsNeedStrictlyHigherScores) {
  TopoGDNModel model(small_config());
  TimeSeriesFrame frame = TimeSeriesFrame::zeros({"a", "b", "c", "d", "e"}, 40);
  Rng rng(6);
  for (auto& v : frame.values) v = rng.uniform(0, 1);
  frame.labels = std::vector<int>(40, 0);
  Calibration cal = calibration_of(std::vector<double>(5, 0.0), std::vector<double>(5, 1.0));
  auto probe = detect(model, frame, cal, 1, 8);
  ASSERT_EQ(probe.size(), 28u);
  // Threshold at one of the scores: that step must stay unlabelled.
  cal.threshold = probe.scores[10];
  auto report = detect(model, frame, cal, 1, 8);
  EXPECT_EQ(report.scores, probe.scores);
  for (std::size_t k = 0; k < report.size(); ++k)
    EXPECT_EQ(report.labels[k], report.scores[k] > cal.threshold ? 1 : 0);
  EXPECT_EQ(report.labels[10], 0);
  ASSERT_TRUE(report.metrics.has_value());
  EXPECT_EQ(report.metrics->tp + report.metrics->fp + report.metrics->fn + report.metrics->tn, 28u);
}

TEST(Detect, SensorMismatchIsContractError) {
  TopoGDNModel model(small_config());
  auto frame = TimeSeriesFrame::zeros({"a", "b"}, 40);
  Calibration cal = calibration_of({0, 0, 0, 0, 0}, {1, 1, 1, 1, 1});
  EXPECT_THROW(detect(model, frame, cal, 1, 8), ContractError);
}
