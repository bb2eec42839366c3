#include <gtest/gtest.h>

#include <cmath>

#include "dual/metrics.hpp"
#include "dual/random.hpp"
#include "oracles.hpp"

namespace dual {
namespace {

TEST(Auc, MatchesAllPairsCount) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 200);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores so that ties are common.
      scores[i] = std::round(10 * uniform01(rng)) / 10;
      labels[i] = uniform01(rng) < 0.3 ? 1 : 0;
    }
    EXPECT_NEAR(auc(scores, labels), oracle::auc_all_pairs(scores, labels), 1e-9);
  }
}

TEST(Auc, Extremes) {
  const std::vector<double> scores{0.1, 0.2, 0.8, 0.9};
  EXPECT_DOUBLE_EQ(auc(scores, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(auc(scores, std::vector<int>{1, 1, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>(4, 0.3), std::vector<int>{0, 1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(auc(scores, std::vector<int>{1, 1, 1, 1}), 0.5);
}

TEST(LogLoss, KnownValues) {
  EXPECT_NEAR(log_loss(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}), std::log(2.0), 1e-15);
  EXPECT_NEAR(log_loss(std::vector<double>{0.9}, std::vector<int>{0}), -std::log(0.1), 1e-12);
  EXPECT_TRUE(std::isfinite(log_loss(std::vector<double>{0.0}, std::vector<int>{1})));
}

TEST(Histogram, BinsAndClosedUpperEdge) {
  const std::vector<double> values{0.0, 0.05, 0.1, 0.5, 0.99, 1.0, 1.2, -0.1};
  const auto h = histogram(values, 0.0, 1.0, 10);
  ASSERT_EQ(h.counts.size(), 10u);
  EXPECT_EQ(h.counts[0], 2u);
  EXPECT_EQ(h.counts[1], 1u);
  EXPECT_EQ(h.counts[5], 1u);
  EXPECT_EQ(h.counts[9], 2u);
  std::size_t total = 0;
  for (auto c : h.counts) total += c;
  EXPECT_EQ(total, 6u);
}

TEST(ExtremeFraction, CountsBothTails) {
  const std::vector<double> p{0.0, 0.005, 0.01, 0.5, 0.99, 0.995, 0.3, 0.7};
  EXPECT_DOUBLE_EQ(extreme_fraction(p, 0.01), 5.0 / 8.0);
}

TEST(Summarize, MeanStdMedian) {
  const auto s = summarize(std::vector<double>{4, 1, 3, 2});
  EXPECT_EQ(s.count, 4u);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.median, 2.5);
  EXPECT_NEAR(s.stddev, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_DOUBLE_EQ(summarize(std::vector<double>{7}).stddev, 0.0);
}

}  // namespace
}  // namespace dual
