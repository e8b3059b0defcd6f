#include "sefc/stats.hpp"

#include <algorithm>
#include <cmath>

#include "sefc/errors.hpp"

namespace sefc {

double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::EmptyInput, "percentile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "mean of an empty sample");
  double s = 0.0;
  for (double x : values) s += x;
  return s / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values, double mean) {
  if (values.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : values) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace sefc
