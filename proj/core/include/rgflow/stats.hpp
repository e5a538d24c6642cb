#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace rgflow {

/// Pairwise (cascade) summation; error grows like O(log n) instead of O(n).
double pairwise_sum(std::span<const double> values);

double mean(std::span<const double> values);

/// Unbiased sample variance (n - 1 denominator); 0 for fewer than two values.
double sample_variance(std::span<const double> values);

/// Pearson correlation; NaN when either side has zero variance.
double correlation(std::span<const double> x, std::span<const double> y);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work items must be
/// independent; callers write results to slot i and reduce in index order.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace rgflow
