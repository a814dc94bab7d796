#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "topogdn/dataio.hpp"
#include "topogdn/model.hpp"
#include "topogdn/tensor.hpp"

namespace topogdn {

/// Adaptive moment estimation with bias correction, no weight decay.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, double learning_rate, double beta1 = 0.9,
       double beta2 = 0.999, double epsilon = 1e-8);

  /// Applies one update from the parameters' current gradients.
  void step();
  void zero_grad();
  std::size_t steps() const { return steps_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t stride = 10;
  std::size_t early_stop_patience = 10;
  double validation_ratio = 0.1;  // tail of the training frame
  std::uint64_t seed = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_mse = 0;
  double val_mse = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  Calibration calibration;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

/// Fits the model to normal data (already normalized). The tail of the frame
/// is held out for early stopping, error calibration and the threshold; the
/// parameters and graph of the best validation epoch are kept and the graph
/// is frozen afterwards.
TrainResult train(TopoGDNModel& model, const TimeSeriesFrame& frame, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// "epoch,train_mse,val_mse" rows.
std::string training_log_csv(const std::vector<EpochLog>& log);

struct GradCheckEntry {
  std::string name;
  std::size_t coords = 0;
  std::size_t non_smooth = 0;  // coordinates whose stencil changed the discrete structure
  double max_rel_err = 0;
  bool filtration_path = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0;  // over smooth coordinates only
  std::size_t checked = 0;
  std::size_t flagged = 0;
};

struct GradCheckOptions {
  double step = 1e-6;
  double floor = 1e-6;  // relative error is |g - fd| / max(|g|, |fd|, floor)
};

/// Loss closure for grad_check; fills `signature` with a description of any
/// discrete choices made on the way (empty when there are none).
using LossProbe = std::function<Tensor(std::string* signature)>;

GradCheckReport grad_check(const LossProbe& loss, const std::vector<NamedParameter>& params,
                           GradCheckOptions options = {});
/// MSE of model(windows) against targets; the graph is held fixed.
GradCheckReport grad_check(TopoGDNModel& model, const Tensor& windows, const Tensor& targets,
                           GradCheckOptions options = {});

}  // namespace topogdn
