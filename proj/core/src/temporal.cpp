#include "topogdn/temporal.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "topogdn/errors.hpp"

namespace topogdn {

std::vector<double> conv_single_scale(std::span<const double> series,
                                      std::span<const double> kernel, std::size_t dilation) {
  std::size_t w = series.size();
  if (kernel.empty() || dilation == 0) throw ConfigError("kernel must be non-empty with dilation >= 1");
  std::size_t effective = (kernel.size() - 1) * dilation + 1;
  if (w < effective)
    throw ConfigError(
        fmt::format("window {} shorter than effective kernel width {}", w, effective));
  std::vector<double> out(w, 0.0);
  for (std::size_t t = 0; t < w; ++t) {
    double acc = 0.0;
    for (std::size_t j = 0; j < kernel.size(); ++j)
      acc += series[std::min(t + j * dilation, w - 1)] * kernel[j];
    out[t] = acc;
  }
  return out;
}

MultiScaleTemporal::MultiScaleTemporal(TemporalConfig config, Rng& rng)
    : config_(std::move(config)) {
  if (config_.kernel_sizes.empty()) throw ConfigError("temporal module needs at least one kernel");
  if (config_.dilation == 0) throw ConfigError("dilation must be at least 1");
  for (auto width : config_.kernel_sizes) {
    if (width == 0) throw ConfigError("kernel sizes must be positive");
    double bound = 1.0 / std::sqrt(static_cast<double>(width));
    std::vector<double> k(width);
    for (auto& v : k) v = rng.uniform(-bound, bound);
    kernels_.push_back(Tensor::from({width}, std::move(k), true));
  }
}

std::size_t MultiScaleTemporal::min_window() const {
  std::size_t widest = *std::max_element(config_.kernel_sizes.begin(), config_.kernel_sizes.end());
  return (widest - 1) * config_.dilation + 1;
}

Tensor MultiScaleTemporal::forward(const Tensor& windows) const {
  if (windows.rank() != 2)
    throw ContractError("temporal forward expects an R x w block, got " +
                        shape_str(windows.shape()));
  if (windows.dim(1) < min_window())
    throw ConfigError(fmt::format("window {} shorter than effective kernel width {}",
                                  windows.dim(1), min_window()));
  std::vector<Tensor> outs;
  outs.reserve(kernels_.size());
  for (const auto& k : kernels_) outs.push_back(conv1d_replicate(windows, k, config_.dilation));
  // Pairwise summation: averaging P identical outputs reproduces them exactly
  // whenever P is a power of two.
  while (outs.size() > 1) {
    std::vector<Tensor> next;
    for (std::size_t i = 0; i + 1 < outs.size(); i += 2) next.push_back(add(outs[i], outs[i + 1]));
    if (outs.size() % 2) next.push_back(outs.back());
    outs = std::move(next);
  }
  Tensor pooled = scale(outs.front(), 1.0 / static_cast<double>(kernels_.size()));
  return add(pooled, windows);
}

}  // namespace topogdn
