#include "topogdn/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "topogdn/errors.hpp"
#include "topogdn/stats.hpp"

namespace topogdn {

namespace {

TemporalConfig temporal_for(const ModelConfig& c) {
  if (c.tcn_single_scale) return TemporalConfig{{3}, c.temporal.dilation};
  return c.temporal;
}

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

ModelConfig checked(ModelConfig c) {
  if (c.nodes < 2) throw ConfigError("the model needs at least 2 sensors");
  if (c.window < 2) throw ConfigError("window size must be at least 2");
  if (c.embed_dim == 0) throw ConfigError("embedding dimension must be positive");
  if (c.output_layers == 0) throw ConfigError("at least one output layer is required");
  if (c.output_hidden == 0) c.output_hidden = c.embed_dim;
  return c;
}

}  // namespace

TopoGDNModel::TopoGDNModel(ModelConfig config)
    : config_(checked(std::move(config))),
      rng_(config_.seed),
      temporal_(config_.mstcn_enabled || config_.tcn_single_scale
                    ? std::optional<MultiScaleTemporal>(std::in_place, temporal_for(config_), rng_)
                    : std::nullopt),
      graph_(config_.nodes, config_.embed_dim, config_.top_k, rng_),
      attention_(AttentionConfig{config_.window, config_.embed_dim, config_.attention_hidden, config_.heads}, rng_) {
  if (temporal_ && config_.window < temporal_->min_window())
    throw ConfigError(fmt::format("window {} shorter than the widest temporal kernel {}",
                                  config_.window, temporal_->min_window()));
  if (config_.ta_enabled) topo_.emplace(config_.embed_dim, config_.topo, rng_);
  std::size_t width = config_.embed_dim;
  for (std::size_t l = 0; l < config_.output_layers; ++l) {
    std::size_t out = l + 1 == config_.output_layers ? 1 : config_.output_hidden;
    out_weights_.push_back(
        uniform_param({width, out}, 1.0 / std::sqrt(static_cast<double>(width)), rng_));
    out_biases_.push_back(Tensor::zeros({1, out}, true));
    width = out;
  }
}

Tensor TopoGDNModel::forward(const Tensor& windows, ForwardTrace* trace) const {
  const std::size_t n = config_.nodes;
  if (windows.rank() != 2 || windows.dim(1) != config_.window || windows.dim(0) % n != 0)
    throw ContractError(fmt::format("model expects (B x {}) x {} windows, got {}", n,
                                    config_.window, shape_str(windows.shape())));
  const std::size_t copies = windows.dim(0) / n;
  std::vector<std::size_t> node_of(windows.dim(0));
  for (std::size_t m = 0; m < node_of.size(); ++m) node_of[m] = m % n;

  Tensor series = temporal_ ? temporal_->forward(windows) : windows;
  Tensor embeddings = index_rows(graph_.embeddings(), node_of);
  EdgeList edges = message_edges(graph_.adjacency(), copies);
  Tensor features =
      attention_.forward(series, embeddings, edges, trace ? &trace->attention : nullptr);
  if (topo_) {
    TopoEmbedding topo = topo_->forward(features, symmetrize(graph_.adjacency()), copies,
                                        trace ? &trace->topo : nullptr);
    features = fuse(features, topo, n);
  }

  Tensor gate = config_.output_softmax ? softmax(graph_.embeddings(), 1) : graph_.embeddings();
  Tensor h = mul(features, index_rows(gate, node_of));
  for (std::size_t l = 0; l < out_weights_.size(); ++l) {
    h = add(matmul(h, out_weights_[l]), out_biases_[l]);
    if (l + 1 < out_weights_.size()) h = leaky_relu(h);
  }
  return reshape(h, {copies, n});
}

std::vector<double> TopoGDNModel::predict(std::span<const double> window) const {
  if (window.size() != config_.nodes * config_.window)
    throw ContractError(fmt::format("window of {} values does not match {} sensors x {} steps",
                                    window.size(), config_.nodes, config_.window));
  NoTapeScope scope;
  Tensor x = Tensor::from({config_.nodes, config_.window},
                          std::vector<double>(window.begin(), window.end()));
  Tensor y = forward(x);
  return {y.values().begin(), y.values().end()};
}

std::vector<NamedParameter> TopoGDNModel::parameters() {
  std::vector<NamedParameter> out;
  if (temporal_)
    for (std::size_t p = 0; p < temporal_->kernels().size(); ++p)
      out.push_back({fmt::format("temporal.kernel{}", p), &temporal_->kernels()[p]});
  out.push_back({"graph.embeddings", &graph_.embeddings()});
  for (std::size_t h = 0; h < attention_.heads().size(); ++h) {
    auto& head = attention_.heads()[h];
    auto name = [h](const char* field) { return fmt::format("attention.head{}.{}", h, field); };
    out.push_back({name("weight"), &head.weight});
    out.push_back({name("score_dst"), &head.score_dst});
    out.push_back({name("score_src"), &head.score_src});
    out.push_back({name("score_bias"), &head.score_bias});
    out.push_back({name("score_out"), &head.score_out});
    out.push_back({name("score_out_bias"), &head.score_out_bias});
  }
  if (topo_) {
    out.push_back({"topo.projection", &topo_->projection, true});
    out.push_back({"topo.projection_bias", &topo_->projection_bias, true});
    for (std::size_t i = 0; i < topo_->transforms.size(); ++i) {
      auto& t = topo_->transforms[i];
      auto name = [i](const char* field) { return fmt::format("topo.view{}.{}", i, field); };
      out.push_back({name("grid_b"), &t.grid_b});
      if (t.grid_d.requires_grad()) out.push_back({name("grid_d"), &t.grid_d});
      if (t.offset.requires_grad()) out.push_back({name("offset"), &t.offset});
      if (t.width.requires_grad()) out.push_back({name("width"), &t.width});
    }
    out.push_back({"topo.node_weight", &topo_->node_weight});
    out.push_back({"topo.node_bias", &topo_->node_bias});
    out.push_back({"topo.global_weight", &topo_->global_weight});
    out.push_back({"topo.global_bias", &topo_->global_bias});
  }
  for (std::size_t l = 0; l < out_weights_.size(); ++l) {
    out.push_back({fmt::format("output.layer{}.weight", l), &out_weights_[l]});
    out.push_back({fmt::format("output.layer{}.bias", l), &out_biases_[l]});
  }
  return out;
}

std::vector<NamedTensor> TopoGDNModel::state() const {
  auto params = const_cast<TopoGDNModel*>(this)->parameters();
  std::vector<NamedTensor> out;
  for (auto& p : params) out.push_back({p.name, p.tensor->detach()});
  out.push_back({"graph.adjacency", Tensor::from({config_.nodes, config_.nodes},
                                                 graph_.adjacency().dense())});
  return out;
}

void TopoGDNModel::load_state(std::span<const NamedTensor> tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.tensor;
  for (auto& p : parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw ContractError(fmt::format("checkpoint lacks parameter '{}'", p.name));
    if (it->second->shape() != p.tensor->shape())
      throw ContractError(fmt::format("parameter '{}' has shape {} in the checkpoint, {} in the model",
                                      p.name, shape_str(it->second->shape()),
                                      shape_str(p.tensor->shape())));
    auto src = it->second->values();
    std::copy(src.begin(), src.end(), p.tensor->data().begin());
  }
  auto adj = by_name.find("graph.adjacency");
  if (adj == by_name.end()) {
    graph_.freeze();
  } else {
    if (adj->second->shape() != Shape{config_.nodes, config_.nodes})
      throw ContractError(fmt::format("stored adjacency {} does not match {} sensors",
                                      shape_str(adj->second->shape()), config_.nodes));
    graph_.set_adjacency(Adjacency::from_dense(adj->second->values(), config_.nodes));
  }
}

Tensor window_tensor(const WindowBatch& batch, std::size_t first, std::size_t count) {
  std::vector<double> v;
  v.reserve(count * batch.sensors * batch.width);
  for (std::size_t k = first; k < first + count; ++k)
    v.insert(v.end(), batch.contexts[k].begin(), batch.contexts[k].end());
  return Tensor::from({count * batch.sensors, batch.width}, std::move(v));
}

Tensor target_tensor(const WindowBatch& batch, std::size_t first, std::size_t count) {
  std::vector<double> v;
  v.reserve(count * batch.sensors);
  for (std::size_t k = first; k < first + count; ++k)
    v.insert(v.end(), batch.targets[k].begin(), batch.targets[k].end());
  return Tensor::from({count, batch.sensors}, std::move(v));
}

std::vector<double> predict_windows(const TopoGDNModel& model, const WindowBatch& batch,
                                    std::size_t batch_size) {
  if (batch.sensors != model.config().nodes)
    throw ContractError(fmt::format("data has {} sensors, model was built for {}", batch.sensors,
                                    model.config().nodes));
  if (batch.width != model.config().window)
    throw ContractError(fmt::format("windows of width {}, model expects {}", batch.width,
                                    model.config().window));
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<double> out;
  out.reserve(batch.size() * batch.sensors);
  for (std::size_t first = 0; first < batch.size(); first += batch_size) {
    std::size_t count = std::min(batch_size, batch.size() - first);
    NoTapeScope scope;
    Tensor y = model.forward(window_tensor(batch, first, count));
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return out;
}

Calibration fit_calibration(std::span<const double> abs_errors, std::size_t sensors) {
  if (sensors == 0 || abs_errors.empty() || abs_errors.size() % sensors != 0)
    throw ConfigError(fmt::format("cannot calibrate {} errors over {} sensors", abs_errors.size(),
                                  sensors));
  std::size_t rows = abs_errors.size() / sensors;
  Calibration c;
  for (std::size_t i = 0; i < sensors; ++i) {
    std::vector<double> col(rows);
    for (std::size_t r = 0; r < rows; ++r) col[r] = abs_errors[r * sensors + i];
    c.median.push_back(median(col));
    c.iqr.push_back(interquartile_range(std::move(col)));
  }
  return c;
}

double anomaly_score(std::span<const double> predicted, std::span<const double> actual,
                     const Calibration& calibration, std::size_t* argmax) {
  if (calibration.empty()) throw ContractError("anomaly scoring needs a calibration");
  std::size_t n = calibration.median.size();
  if (predicted.size() != n || actual.size() != n || calibration.iqr.size() != n)
    throw ContractError(fmt::format("scoring {} predictions against {} values with {} sensors",
                                    predicted.size(), actual.size(), n));
  double best = 0.0;
  std::size_t at = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double dev = (std::abs(predicted[i] - actual[i]) - calibration.median[i]) /
                 (calibration.iqr[i] + kScoreEpsilon);
    if (i == 0 || dev > best) {
      best = dev;
      at = i;
    }
  }
  if (argmax) *argmax = at;
  return best;
}

double calibrate_threshold(std::span<const double> validation_scores) {
  if (validation_scores.empty())
    throw ConfigError("threshold calibration needs at least one validation score");
  return *std::max_element(validation_scores.begin(), validation_scores.end());
}

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  // Same value as 2PR / (P + R), with a single rounding.
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  return m;
}

Metrics evaluate(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw ContractError(fmt::format("{} predicted labels vs {} true labels", predicted.size(),
                                    truth.size()));
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t t = 0; t < predicted.size(); ++t) {
    bool p = predicted[t] != 0, y = truth[t] != 0;
    tp += p && y;
    fp += p && !y;
    fn += !p && y;
    tn += !p && !y;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

std::string AnomalyReport::to_csv() const {
  std::string out = "t,score,label_pred,label_true,padded,sensor\n";
  for (std::size_t k = 0; k < size(); ++k) {
    std::string truth_cell = truth.empty() ? "" : fmt::format("{}", truth[k]);
    out += fmt::format("{},{},{},{},{},{}\n", steps[k], scores[k], labels[k], truth_cell,
                       padded[k], sensor[k]);
  }
  return out;
}

AnomalyReport AnomalyReport::parse_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": empty report");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,score,label_pred,label_true,padded,sensor")
    throw ParseError(fmt::format("{}: unexpected report header '{}'", source, line));
  AnomalyReport r;
  bool any_truth = false, missing_truth = false;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 6)
      throw ParseError(fmt::format("{}:{}: expected 6 columns, found {}", source, lineno,
                                   cells.size()));
    try {
      r.steps.push_back(std::stoull(cells[0]));
      r.scores.push_back(std::stod(cells[1]));
      r.labels.push_back(std::stoi(cells[2]));
      if (cells[3].empty()) {
        missing_truth = true;
      } else {
        any_truth = true;
        r.truth.push_back(std::stoi(cells[3]));
      }
      r.padded.push_back(std::stoi(cells[4]));
      r.sensor.push_back(std::stoull(cells[5]));
    } catch (const std::logic_error&) {
      throw ParseError(fmt::format("{}:{}: malformed report row '{}'", source, lineno, line));
    }
  }
  if (any_truth && missing_truth)
    throw ParseError(source + ": label_true is filled on some rows only");
  return r;
}

std::vector<double> score_predictions(std::span<const double> predictions,
                                      const WindowBatch& batch, const Calibration& calibration,
                                      std::vector<std::size_t>* argmax) {
  std::size_t n = batch.sensors;
  if (predictions.size() != batch.size() * n)
    throw ContractError(fmt::format("{} predictions for {} windows of {} sensors",
                                    predictions.size(), batch.size(), n));
  std::vector<double> scores(batch.size());
  if (argmax) argmax->assign(batch.size(), 0);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    std::size_t at = 0;
    scores[k] = anomaly_score(predictions.subspan(k * n, n), batch.targets[k], calibration, &at);
    if (argmax) (*argmax)[k] = at;
  }
  return scores;
}

AnomalyReport detect(const TopoGDNModel& model, const TimeSeriesFrame& frame,
                     const Calibration& calibration, std::size_t stride, std::size_t batch_size) {
  if (frame.sensors() != model.config().nodes)
    throw ContractError(fmt::format("data has {} sensors, model was trained on {}",
                                    frame.sensors(), model.config().nodes));
  WindowBatch batch = make_windows(frame, model.config().window, stride);
  auto predictions = predict_windows(model, batch, batch_size);
  AnomalyReport report;
  report.threshold = calibration.threshold;
  report.scores = score_predictions(predictions, batch, calibration, &report.sensor);
  std::size_t last = frame.steps() - 1;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    report.steps.push_back(batch.target_indices[k]);
    report.labels.push_back(report.scores[k] > calibration.threshold ? 1 : 0);
    report.padded.push_back(batch.padded[k] ? 1 : 0);
    if (frame.labels) report.truth.push_back((*frame.labels)[std::min(batch.target_indices[k], last)]);
  }
  if (frame.labels) {
    std::vector<int> pred, truth;
    for (std::size_t k = 0; k < batch.size(); ++k)
      if (!report.padded[k]) {
        pred.push_back(report.labels[k]);
        truth.push_back(report.truth[k]);
      }
    report.metrics = evaluate(pred, truth);
  }
  return report;
}

}  // namespace topogdn
