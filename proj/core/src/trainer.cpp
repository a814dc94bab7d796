#include "topogdn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "topogdn/errors.hpp"

namespace topogdn {

Adam::Adam(std::vector<Tensor*> params, double learning_rate, double beta1, double beta2,
           double epsilon)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  for (auto* p : params_) {
    m_.emplace_back(p->numel(), 0.0);
    v_.emplace_back(p->numel(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = *params_[k];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto x = p.data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      x[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

namespace {

double mean_squared_error(std::span<const double> predictions, const WindowBatch& batch) {
  double acc = 0.0;
  std::size_t n = batch.sensors;
  for (std::size_t k = 0; k < batch.size(); ++k)
    for (std::size_t i = 0; i < n; ++i) {
      double d = predictions[k * n + i] - batch.targets[k][i];
      acc += d * d;
    }
  return acc / static_cast<double>(batch.size() * n);
}

struct Snapshot {
  std::vector<std::vector<double>> values;
  Adjacency adjacency;
};

Snapshot snapshot(TopoGDNModel& model) {
  Snapshot s;
  for (auto& p : model.parameters())
    s.values.emplace_back(p.tensor->values().begin(), p.tensor->values().end());
  s.adjacency = model.graph().adjacency();
  return s;
}

void restore(TopoGDNModel& model, const Snapshot& s) {
  auto params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k)
    std::copy(s.values[k].begin(), s.values[k].end(), params[k].tensor->data().begin());
  model.graph().set_adjacency(s.adjacency);
}

}  // namespace

TrainResult train(TopoGDNModel& model, const TimeSeriesFrame& frame, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (frame.labels && std::any_of(frame.labels->begin(), frame.labels->end(),
                                  [](int y) { return y != 0; }))
    throw DataError("training data must not contain labelled anomalies");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
  if (config.epochs == 0) throw ConfigError("epochs must be at least 1");
  const std::size_t w = model.config().window;
  auto [fit_part, val_part] =
      split_train_validation(frame, 1.0 - config.validation_ratio, w + 1);
  WindowBatch train_windows = make_windows(fit_part, w, config.stride);
  WindowBatch val_windows = make_windows(val_part, w, 1);

  std::vector<Tensor*> tensors;
  for (auto& p : model.parameters()) tensors.push_back(p.tensor);
  Adam adam(tensors, config.learning_rate);
  Rng order_rng = Rng(config.seed).fork(0x7472616eULL);

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  Snapshot best_state = snapshot(model);
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t n = model.config().nodes;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    model.rebuild_graph();
    order_rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      std::size_t count = std::min(config.batch_size, order.size() - first);
      std::vector<double> x, y;
      x.reserve(count * n * w);
      y.reserve(count * n);
      for (std::size_t k = first; k < first + count; ++k) {
        const auto& ctx = train_windows.contexts[order[k]];
        const auto& tgt = train_windows.targets[order[k]];
        x.insert(x.end(), ctx.begin(), ctx.end());
        y.insert(y.end(), tgt.begin(), tgt.end());
      }
      Tape tape;
      TapeScope scope(tape);
      Tensor pred = model.forward(Tensor::from({count * n, w}, std::move(x)));
      Tensor loss = mse_loss(pred, Tensor::from({count, n}, std::move(y)));
      double value = loss.item();
      if (!std::isfinite(value))
        throw NumericError(fmt::format("training diverged at epoch {}: loss is {}", epoch, value));
      tape.backward(loss);
      adam.step();
      adam.zero_grad();
      sum += value * static_cast<double>(count);
    }
    EpochLog entry{epoch, sum / static_cast<double>(order.size()),
                   mean_squared_error(predict_windows(model, val_windows, config.batch_size),
                                      val_windows)};
    if (!std::isfinite(entry.val_mse))
      throw NumericError(fmt::format("training diverged at epoch {}: validation MSE is {}", epoch,
                                     entry.val_mse));
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    spdlog::debug("epoch {} train_mse {:.6g} val_mse {:.6g}", epoch, entry.train_mse,
                  entry.val_mse);
    if (entry.val_mse < best) {
      best = entry.val_mse;
      best_state = snapshot(model);
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.early_stop_patience > 0 && ++since_best >= config.early_stop_patience) {
      result.stopped_early = true;
      break;
    }
  }
  restore(model, best_state);

  auto predictions = predict_windows(model, val_windows, config.batch_size);
  std::vector<double> errors(predictions.size());
  for (std::size_t k = 0; k < val_windows.size(); ++k)
    for (std::size_t i = 0; i < n; ++i)
      errors[k * n + i] = std::abs(predictions[k * n + i] - val_windows.targets[k][i]);
  result.calibration = fit_calibration(errors, n);
  result.calibration.threshold =
      calibrate_threshold(score_predictions(predictions, val_windows, result.calibration));
  return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_mse,val_mse\n";
  for (const auto& e : log) out += fmt::format("{},{},{}\n", e.epoch, e.train_mse, e.val_mse);
  return out;
}

GradCheckReport grad_check(const LossProbe& loss, const std::vector<NamedParameter>& params,
                           GradCheckOptions options) {
  for (const auto& p : params) p.tensor->zero_grad();
  std::string base_signature;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor l = loss(&base_signature);
    tape.backward(l);
  }
  GradCheckReport report;
  NoTapeScope quiet;
  for (const auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    entry.filtration_path = p.filtration_path;
    std::vector<double> analytic(p.tensor->grad().begin(), p.tensor->grad().end());
    auto x = p.tensor->data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      double saved = x[i];
      double h = options.step * std::max(1.0, std::abs(saved));
      std::string sig_plus, sig_minus;
      x[i] = saved + h;
      double up = loss(&sig_plus).item();
      x[i] = saved - h;
      double down = loss(&sig_minus).item();
      x[i] = saved;
      ++entry.coords;
      if (sig_plus != base_signature || sig_minus != base_signature) {
        ++entry.non_smooth;
        continue;
      }
      double fd = (up - down) / (2.0 * h);
      double g = analytic[i];
      double rel = std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), options.floor});
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    report.checked += entry.coords - entry.non_smooth;
    report.flagged += entry.non_smooth;
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  for (const auto& p : params) p.tensor->zero_grad();
  return report;
}

namespace {

std::string structure_signature(const ForwardTrace& trace) {
  std::string s;
  for (std::size_t v = 0; v < trace.topo.views.size(); ++v) {
    const auto& view = trace.topo.views[v];
    const auto& diagram = trace.topo.diagrams[v];
    s += fmt::format("v{}:{}:", v, view.degenerate ? 1 : 0);
    auto top = std::max_element(view.values.begin(), view.values.end()) - view.values.begin();
    s += fmt::format("{}:", top);
    for (const auto& p : diagram.dim0)
      s += fmt::format("{}-{}/{}-{},", p.birth_level, p.death_level, p.creator,
                       p.essential ? SIZE_MAX : p.destroyer);
    for (const auto& p : diagram.dim1)
      s += fmt::format("{}-{}/{}-{},", p.birth_level, p.death_level, p.birth_node,
                       p.essential ? SIZE_MAX : p.death_node);
    s += '|';
  }
  return s;
}

}  // namespace

GradCheckReport grad_check(TopoGDNModel& model, const Tensor& windows, const Tensor& targets,
                           GradCheckOptions options) {
  model.freeze_graph();
  LossProbe probe = [&](std::string* signature) {
    ForwardTrace trace;
    Tensor pred = model.forward(windows, &trace);
    if (signature) *signature = structure_signature(trace);
    return mse_loss(pred, targets);
  };
  return grad_check(probe, model.parameters(), options);
}

}  // namespace topogdn
