#pragma once

#include <span>
#include <vector>

namespace topogdn {

/// Quantile of already-sorted data with linear interpolation between order
/// statistics (position q * (n - 1)).
double quantile_sorted(std::span<const double> sorted, double q);

double median(std::vector<double> values);

/// Third minus first quartile, linear interpolation.
double interquartile_range(std::vector<double> values);

}  // namespace topogdn
