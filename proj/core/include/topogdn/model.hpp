#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topogdn/attention.hpp"
#include "topogdn/dataio.hpp"
#include "topogdn/graphlearn.hpp"
#include "topogdn/temporal.hpp"
#include "topogdn/tensor.hpp"
#include "topogdn/vectorize.hpp"

namespace topogdn {

struct ModelConfig {
  std::size_t nodes = 0;
  std::size_t window = 100;
  std::size_t embed_dim = 128;
  std::size_t top_k = 20;
  std::size_t heads = 1;
  std::size_t output_layers = 2;
  std::size_t output_hidden = 0;  // 0 means embed_dim
  std::size_t attention_hidden = 32;  // width of the edge-score feed-forward; 0 means embed_dim
  TemporalConfig temporal;
  VectorizeConfig topo;
  bool mstcn_enabled = true;
  bool tcn_single_scale = false;  // single kernel of width 3 instead of the bank
  bool ta_enabled = true;
  bool output_softmax = true;
  std::uint64_t seed = 0;
};

struct NamedParameter {
  std::string name;
  Tensor* tensor;
  bool filtration_path = false;  // reaches the loss only through persistence coordinates
};

struct ForwardTrace {
  AttentionTrace attention;
  TopoTrace topo;
};

class TopoGDNModel {
 public:
  explicit TopoGDNModel(ModelConfig config);

  /// windows: (B N) x w, copy b in rows [b N, (b + 1) N). Returns B x N.
  Tensor forward(const Tensor& windows, ForwardTrace* trace = nullptr) const;
  /// Single N x w window (row-major) to a length-N prediction.
  std::vector<double> predict(std::span<const double> window) const;

  /// Recomputes the Top-K graph from the current embeddings.
  void rebuild_graph() { graph_.rebuild(); }
  void freeze_graph() { graph_.freeze(); }

  std::vector<NamedParameter> parameters();
  std::vector<NamedTensor> state() const;
  /// Restores tensors by name; shapes must match this model.
  void load_state(std::span<const NamedTensor> tensors);

  const ModelConfig& config() const { return config_; }
  const SensorGraph& graph() const { return graph_; }
  SensorGraph& graph() { return graph_; }
  const std::optional<MultiScaleTemporal>& temporal() const { return temporal_; }
  const GraphAttention& attention() const { return attention_; }
  GraphAttention& attention() { return attention_; }
  const std::optional<TopoPooling>& topo() const { return topo_; }
  std::optional<TopoPooling>& topo() { return topo_; }

 private:
  ModelConfig config_;
  Rng rng_;
  std::optional<MultiScaleTemporal> temporal_;
  SensorGraph graph_;
  GraphAttention attention_;
  std::optional<TopoPooling> topo_;
  std::vector<Tensor> out_weights_;
  std::vector<Tensor> out_biases_;
};

/// Predictions for every window in `batch`, evaluated in groups of
/// `batch_size`; returns batch.size() x N row-major.
std::vector<double> predict_windows(const TopoGDNModel& model, const WindowBatch& batch,
                                    std::size_t batch_size);

/// Batch tensor ((count N) x w) for windows [first, first + count).
Tensor window_tensor(const WindowBatch& batch, std::size_t first, std::size_t count);
/// Matching targets, count x N.
Tensor target_tensor(const WindowBatch& batch, std::size_t first, std::size_t count);

inline constexpr double kScoreEpsilon = 1e-8;

/// Per-sensor median and inter-quartile range of absolute errors.
struct Calibration {
  std::vector<double> median;
  std::vector<double> iqr;
  double threshold = 0.0;

  bool empty() const { return median.empty(); }
};

/// abs_errors: rows x sensors, row-major.
Calibration fit_calibration(std::span<const double> abs_errors, std::size_t sensors);

/// max_i (|pred_i - actual_i| - median_i) / (iqr_i + 1e-8); `argmax` receives
/// the sensor attaining the maximum (lowest index on ties).
double anomaly_score(std::span<const double> predicted, std::span<const double> actual,
                     const Calibration& calibration, std::size_t* argmax = nullptr);

/// Maximum validation score.
double calibrate_threshold(std::span<const double> validation_scores);

struct Metrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn = 0);
/// Point-wise metrics of predicted against true labels.
Metrics evaluate(std::span<const int> predicted, std::span<const int> truth);

struct AnomalyReport {
  std::vector<std::size_t> steps;
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<int> truth;  // empty when the data carried no labels
  std::vector<int> padded;
  std::vector<std::size_t> sensor;  // arg-max sensor per step
  double threshold = 0;
  std::optional<Metrics> metrics;

  std::size_t size() const { return scores.size(); }
  /// Columns t, score, label_pred, label_true, padded, sensor.
  std::string to_csv() const;
  static AnomalyReport parse_csv(const std::string& text, const std::string& source = "<report>");
};

/// Scores every window of `frame` (already normalized) and labels steps
/// with score > calibration.threshold.
AnomalyReport detect(const TopoGDNModel& model, const TimeSeriesFrame& frame,
                     const Calibration& calibration, std::size_t stride, std::size_t batch_size);

/// Scores and arg-max sensors of each window given model predictions.
std::vector<double> score_predictions(std::span<const double> predictions,
                                      const WindowBatch& batch, const Calibration& calibration,
                                      std::vector<std::size_t>* argmax = nullptr);

}  // namespace topogdn
