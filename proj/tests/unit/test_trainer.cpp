#include <gtest/gtest.h>

#include <cmath>

#include "topogdn/errors.hpp"
#include "topogdn/trainer.hpp"

using namespace topogdn;

namespace {

ModelConfig tiny_model(std::size_t nodes = 4) {
  ModelConfig c;
  c.nodes = nodes;
  c.window = 10;
  c.embed_dim = 6;
  c.top_k = 2;
  c.seed = 5;
  c.topo.samples_q = 3;
  c.topo.instances_per_family = 1;
  c.topo.filtrations = 4;
  return c;
}

TimeSeriesFrame sine_frame(std::size_t nodes, std::size_t steps) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < nodes; ++i) names.push_back("s" + std::to_string(i));
  auto f = TimeSeriesFrame::zeros(names, steps);
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t t = 0; t < steps; ++t)
      f.at(i, t) = 0.5 + 0.4 * std::sin(0.3 * t + i);
  return f;
}

std::vector<std::vector<double>> values_of(TopoGDNModel& model) {
  std::vector<std::vector<double>> out;
  for (auto& p : model.parameters()) out.emplace_back(p.tensor->values().begin(), p.tensor->values().end());
  return out;
}

// Gradient of sum(x * g) is g.
void set_grad(Tensor& x, std::vector<double> g) {
  x.zero_grad();
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(mul(x, Tensor::from(x.shape(), std::move(g)))));
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.learning_rate = 1e-2;
  t.batch_size = 8;
  t.stride = 2;
  t.seed = 1;
  return t;
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor x = Tensor::from({1, 3}, {1.0, -2.0, 0.5}, true);
  Adam adam({&x}, 0.1);
  set_grad(x, {4.0, -0.25, 0.0});
  adam.step();
  // Bias-corrected moments make the first update lr * g / (|g| + eps).
  EXPECT_NEAR(x.values()[0], 1.0 - 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_NEAR(x.values()[1], -2.0 + 0.1 * 0.25 / (0.25 + 1e-8), 1e-15);
  EXPECT_EQ(x.values()[2], 0.5);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, StepSizeIsBounded) {
  const double lr = 0.01, beta1 = 0.9, slack = 1.05;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Tensor x = Tensor::from({1, 5}, std::vector<double>(5, 0.0), true);
    Adam adam({&x}, lr);
    for (int step = 0; step < 30; ++step) {
      std::vector<double> before(x.values().begin(), x.values().end());
      double scale = std::exp(rng.uniform(-8, 8));
      std::vector<double> g(5);
      for (auto& v : g) v = rng.normal() * scale;
      set_grad(x, g);
      adam.step();
      for (std::size_t i = 0; i < 5; ++i)
        EXPECT_LE(std::fabs(x.values()[i] - before[i]), slack * lr / (1 - beta1));
    }
  }
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  Adam adam({&x}, 0.0);
  for (int i = 0; i < 5; ++i) {
    set_grad(x, std::vector<double>(4, 3.0));
    adam.step();
  }
  EXPECT_EQ(std::vector<double>(x.values().begin(), x.values().end()),
            (std::vector<double>{1, 2, 3, 4}));
  EXPECT_THROW(Adam({&x}, -1.0), ConfigError);
}

TEST(Train, ZeroLearningRateKeepsParametersExactly) {
  TopoGDNModel model(tiny_model());
  auto before = values_of(model);
  auto cfg = quick(3);
  cfg.learning_rate = 0.0;
  cfg.early_stop_patience = 0;
  auto result = train(model, sine_frame(4, 120), cfg);
  EXPECT_EQ(values_of(model), before);
  ASSERT_EQ(result.log.size(), 3u);
  EXPECT_EQ(result.log[0].val_mse, result.log[1].val_mse);
  EXPECT_EQ(result.log[1].val_mse, result.log[2].val_mse);
}

TEST(Train, SameSeedSameRun) {
  TopoGDNModel a(tiny_model()), b(tiny_model());
  auto frame = sine_frame(4, 120);
  auto ra = train(a, frame, quick(4));
  auto rb = train(b, frame, quick(4));
  ASSERT_EQ(ra.log.size(), rb.log.size());
  for (std::size_t e = 0; e < ra.log.size(); ++e) {
    EXPECT_NEAR(ra.log[e].train_mse, rb.log[e].train_mse, 1e-12);
    EXPECT_NEAR(ra.log[e].val_mse, rb.log[e].val_mse, 1e-12);
  }
  EXPECT_EQ(values_of(a), values_of(b));
  EXPECT_EQ(ra.calibration.threshold, rb.calibration.threshold);
}

TEST(Train, KeepsTheBestEpochAndFreezesTheGraph) {
  TopoGDNModel model(tiny_model());
  auto result = train(model, sine_frame(4, 120), quick(6));
  double best = result.log[0].val_mse;
  std::size_t at = 1;
  for (const auto& e : result.log)
    if (e.val_mse < best) best = e.val_mse, at = e.epoch;
  EXPECT_EQ(result.best_epoch, at);
  EXPECT_TRUE(model.graph().frozen());
  EXPECT_EQ(result.calibration.median.size(), 4u);
}

TEST(Train, ConstantSeriesIsLearned) {
  auto frame = TimeSeriesFrame::zeros({"a", "b", "c"}, 200);
  for (std::size_t t = 0; t < 200; ++t) {
    frame.at(0, t) = 0.2;
    frame.at(1, t) = 0.5;
    frame.at(2, t) = 0.8;
  }
  TopoGDNModel model(tiny_model(3));
  auto cfg = quick(50);
  cfg.early_stop_patience = 0;
  auto result = train(model, frame, cfg);
  double best = INFINITY;
  for (const auto& e : result.log) best = std::min(best, e.val_mse);
  EXPECT_LT(best, 1e-6);
}

TEST(Train, RejectsLabelledAnomaliesAndBadSettings) {
  TopoGDNModel model(tiny_model());
  auto frame = sine_frame(4, 120);
  frame.labels = std::vector<int>(120, 0);
  (*frame.labels)[60] = 1;
  EXPECT_THROW(train(model, frame, quick(1)), DataError);
  auto cfg = quick(0);
  EXPECT_THROW(train(model, sine_frame(4, 120), cfg), ConfigError);
  cfg = quick(1);
  cfg.batch_size = 0;
  EXPECT_THROW(train(model, sine_frame(4, 120), cfg), ConfigError);
}

TEST(Train, DivergenceIsNumericError) {
  TopoGDNModel model(tiny_model());
  auto frame = sine_frame(4, 120);
  frame.at(1, 30) = 1e300;
  EXPECT_THROW(train(model, frame, quick(2)), NumericError);
}

TEST(Train, LogCsv) {
  std::vector<EpochLog> log{{1, 0.5, 0.25}, {2, 0.125, 0.0625}};
  EXPECT_EQ(training_log_csv(log), "epoch,train_mse,val_mse\n1,0.5,0.25\n2,0.125,0.0625\n");
}

TEST(GradCheck, AffineMapIsExact) {
  Rng rng(3);
  std::vector<double> wv(12), xv(8), yv(6);
  for (auto& v : wv) v = rng.normal();
  for (auto& v : xv) v = rng.normal();
  for (auto& v : yv) v = rng.normal();
  Tensor w = Tensor::from({4, 3}, wv, true);
  Tensor b = Tensor::from({1, 3}, {0.1, -0.2, 0.3}, true);
  Tensor x = Tensor::from({2, 4}, xv);
  Tensor y = Tensor::from({2, 3}, yv);
  LossProbe probe = [&](std::string*) { return mse_loss(add(matmul(x, w), b), y); };
  auto report = grad_check(probe, {{"w", &w}, {"b", &b}});
  EXPECT_EQ(report.checked, 15u);
  EXPECT_EQ(report.flagged, 0u);
  EXPECT_LT(report.max_rel_err, 1e-8);
}

TEST(GradCheck, StructureChangesAreFlaggedAndExcluded) {
  Tensor a = Tensor::from({1, 2}, {0.5, 2.0}, true);
  // The first coordinate sits on a switch; its stencil crosses it.
  LossProbe probe = [&](std::string* sig) {
    if (sig) *sig = a.values()[0] >= 0.5 ? "hi" : "lo";
    return sum(square(a));
  };
  auto report = grad_check(probe, {{"a", &a, true}});
  EXPECT_EQ(report.flagged, 1u);
  EXPECT_EQ(report.checked, 1u);
  EXPECT_TRUE(report.entries[0].filtration_path);
  EXPECT_LT(report.max_rel_err, 1e-8);
}

TEST(GradCheck, SmallModelSmoothParameters) {
  TopoGDNModel model(tiny_model());
  model.freeze_graph();
  auto frame = sine_frame(4, 40);
  auto batch = make_windows(frame, 10, 7);
  Tensor x = window_tensor(batch, 0, 3);
  Tensor y = target_tensor(batch, 0, 3);
  auto report = grad_check(model, x, y);
  EXPECT_GT(report.checked, 100u);
  EXPECT_LT(report.max_rel_err, 1e-4);
}
