#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "topogdn/rng.hpp"
#include "topogdn/tensor.hpp"

namespace topogdn {

struct TemporalConfig {
  std::vector<std::size_t> kernel_sizes{2, 3, 5, 7};
  std::size_t dilation = 1;
};

/// Reference single-kernel convolution on plain data (right replication padding).
std::vector<double> conv_single_scale(std::span<const double> series,
                                      std::span<const double> kernel, std::size_t dilation = 1);

/// Bank of 1-D kernels shared across sensors. forward() maps an R x w block
/// of windows to R x w: average of the per-kernel outputs plus the input.
class MultiScaleTemporal {
 public:
  MultiScaleTemporal(TemporalConfig config, Rng& rng);

  Tensor forward(const Tensor& windows) const;

  /// Smallest window every kernel accepts.
  std::size_t min_window() const;

  const TemporalConfig& config() const { return config_; }
  std::vector<Tensor>& kernels() { return kernels_; }
  const std::vector<Tensor>& kernels() const { return kernels_; }

 private:
  TemporalConfig config_;
  std::vector<Tensor> kernels_;
};

}  // namespace topogdn
