#pragma once

#include <span>
#include <string>
#include <vector>

namespace dual {

/// Area under the ROC curve via the rank-sum (Mann-Whitney) estimator with
/// averaged ranks for ties. Returns 0.5 when one class is absent.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Mean Bernoulli negative log-likelihood; probabilities are clipped to
/// [1e-15, 1 - 1e-15].
double log_loss(std::span<const double> probabilities, std::span<const int> labels);

struct Histogram {
  double lower = 0;
  double upper = 1;
  std::vector<std::size_t> counts;
};

/// Equal-width bins over [lower, upper]; the last bin is closed. Values
/// outside the range are ignored.
Histogram histogram(std::span<const double> values, double lower, double upper, std::size_t bins);

/// Fraction of values in [0, margin] or [1 - margin, 1].
double extreme_fraction(std::span<const double> probabilities, double margin);

struct SummaryStats {
  std::size_t count = 0;
  double mean = 0;
  /// Sample standard deviation (n - 1 denominator); 0 for a single value.
  double stddev = 0;
  double median = 0;
};

SummaryStats summarize(std::span<const double> values);

}  // namespace dual
