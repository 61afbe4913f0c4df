#pragma once

#include <cstddef>
#include <map>
#include <vector>

namespace ehsrb {

// Ordinary least squares y = intercept + slope * x with a two-sided t interval.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double slope_lo = 0.0;
  double slope_hi = 0.0;
  double level = 0.95;
  std::size_t n = 0;

  bool ci_contains(double v) const { return slope_lo <= v && v <= slope_hi; }
};

LinearFit linear_regression(const std::vector<double>& x, const std::vector<double>& y,
                            double level = 0.95);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t batches = 0;
};

// Batch-means standard error of the mean of a (correlated) series.
MeanSe batch_means(const std::vector<double>& series, std::size_t n_batches = 32);

// Kolmogorov-Smirnov distance of a weighted sample on [lo, hi) to the uniform law.
double ks_uniform(std::vector<std::pair<double, double>> value_weight, double lo, double hi);

// Integer-valued histogram with real masses (e.g. return times).
using IntHistogram = std::map<long, double>;

}  // namespace ehsrb
