#pragma once

// Independent reference computations shared by the test suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "topogdn/tensor.hpp"

namespace topogdn::testing {

/// Central differences of a scalar function of one tensor's entries.
inline std::vector<double> central_differences(Tensor& x, const std::function<double()>& f,
                                               double h = 1e-5) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    double keep = x.data()[i];
    x.data()[i] = keep + h;
    double up = f();
    x.data()[i] = keep - h;
    double down = f();
    x.data()[i] = keep;
    out[i] = (up - down) / (2 * h);
  }
  return out;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b,
                          double floor = 1e-8) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i], floor));
  return worst;
}

/// Triple-loop product of row-major m x k and k x n matrices.
inline std::vector<double> naive_matmul(std::span<const double> a, std::span<const double> b,
                                        std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

/// Tape gradient of `loss(x)` with respect to x.
inline std::vector<double> tape_gradient(Tensor& x, const std::function<Tensor()>& loss) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor l = loss();
    tape.backward(l);
  }
  return {x.grad().begin(), x.grad().end()};
}

}  // namespace topogdn::testing
