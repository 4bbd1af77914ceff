#include <limits>

#include <gtest/gtest.h>

#include "stagelab/rng.hpp"
#include "stagelab/roc.hpp"
#include "oracles.hpp"

namespace stagelab {
namespace {

TEST(Auc, MatchesAllPairsOracle) {
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> s(n);
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(10)) / 9.0;
      y[i] = rng.bernoulli(0.4);
    }
    y[0] = true;
    y[1] = false;
    const auto curve = roc_curve(s, y);
    EXPECT_NEAR(curve.auc_roc, oracle::all_pairs_auc(s, y), 1e-9);
    EXPECT_NEAR(roc_trapezoid_area(curve.points), curve.auc_roc, 1e-9);
  }
}

TEST(Roc, CurveShape) {
  const std::vector<double> s{0.9, 0.8, 0.8, 0.1};
  const std::vector<bool> y{true, true, false, false};
  const auto c = roc_curve(s, y);
  ASSERT_EQ(c.points.size(), 4u);
  EXPECT_EQ(c.points.front().threshold, std::numeric_limits<double>::infinity());
  EXPECT_DOUBLE_EQ(c.points[2].tpr, 1.0);
  EXPECT_DOUBLE_EQ(c.points[2].fpr, 0.5);
  EXPECT_DOUBLE_EQ(c.points.back().fpr, 1.0);
  EXPECT_DOUBLE_EQ(c.auc_roc, 0.875);
}

TEST(Roc, SingleClassIsNumericError) {
  EXPECT_THROW(auc_roc(std::vector<double>{0.1, 0.2}, {true, true}), NumericError);
  EXPECT_THROW(auc_roc(std::vector<double>{0.1}, {true, false}), DataError);
}

TEST(Accuracy, ThresholdIsInclusive) {
  const std::vector<double> s{0.5, 0.49, 0.7, 0.2};
  EXPECT_DOUBLE_EQ(accuracy_at(s, {true, false, false, false}), 0.75);
}

}  // namespace
}  // namespace stagelab
