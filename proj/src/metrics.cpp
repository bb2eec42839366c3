#include "dual/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dual/error.hpp"

namespace dual {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] > 0) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j + 1;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) return 0.5;
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1) / 2) / (p * static_cast<double>(negatives));
}

double log_loss(std::span<const double> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size()) throw ShapeError("log_loss: length mismatch");
  if (probabilities.empty()) throw ShapeError("log_loss: empty input");
  double total = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = std::clamp(probabilities[i], 1e-15, 1 - 1e-15);
    total -= labels[i] > 0 ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(probabilities.size());
}

Histogram histogram(std::span<const double> values, double lower, double upper, std::size_t bins) {
  if (bins == 0 || !(upper > lower)) throw ShapeError("histogram: bad range or bin count");
  Histogram h{lower, upper, std::vector<std::size_t>(bins, 0)};
  const double width = (upper - lower) / static_cast<double>(bins);
  for (double v : values) {
    if (v < lower || v > upper) continue;
    auto bin = static_cast<std::size_t>((v - lower) / width);
    h.counts[std::min(bin, bins - 1)] += 1;
  }
  return h;
}

double extreme_fraction(std::span<const double> probabilities, double margin) {
  if (probabilities.empty()) return 0.0;
  std::size_t extreme = 0;
  for (double p : probabilities) {
    if (p <= margin || p >= 1.0 - margin) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(probabilities.size());
}

SummaryStats summarize(std::span<const double> values) {
  SummaryStats s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  s.median = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return s;
}

}  // namespace dual
