#pragma once

#include <vector>

namespace sefc {

/// Linear-interpolation percentile at h = (n − 1)·p on ascending data.
/// Errors: EmptyInput.
double percentile_sorted(const std::vector<double>& sorted, double p);

/// Errors: EmptyInput.
double mean_of(const std::vector<double>& values);

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
double sample_std(const std::vector<double>& values, double mean);

}  // namespace sefc
