#include <gtest/gtest.h>

#include "stagelab/decision.hpp"
#include "stagelab/rng.hpp"

namespace stagelab {
namespace {

TEST(Confusion, CountsAndRates) {
  const auto cm = confusion_from_decisions({true, true, false, false, true}, {true, false, true, false, true});
  EXPECT_EQ(cm, (DecisionConfusion{2, 1, 1, 1}));
  const auto r = rates(cm);
  EXPECT_DOUBLE_EQ(*r.sensitivity, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(*r.specificity, 0.5);
  EXPECT_DOUBLE_EQ(*r.accuracy, 0.6);
  EXPECT_DOUBLE_EQ(*r.false_negative_rate, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(*r.false_omission_rate, 0.5);
  EXPECT_DOUBLE_EQ(*r.false_discovery_rate, 1.0 / 3.0);
}

TEST(Confusion, ZeroDenominatorsAreAbsent) {
  const auto r = rates(confusion_from_decisions({false, false}, {false, false}));
  EXPECT_FALSE(r.sensitivity);
  EXPECT_FALSE(r.false_discovery_rate);
  EXPECT_DOUBLE_EQ(*r.specificity, 1.0);
  EXPECT_TRUE(to_json(r)["sensitivity"].is_null());
}

TEST(Rates, AccuracyIdentityMatchesCounts) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<bool> d, y;
    for (int i = 0; i < 50; ++i) {
      y.push_back(rng.bernoulli(0.3));
      d.push_back(rng.bernoulli(y.back() ? 0.8 : 0.4));
    }
    const auto cm = confusion_from_decisions(d, y);
    const auto r = rates(cm);
    if (!r.sensitivity || !r.specificity) continue;
    const double prev = static_cast<double>(cm.tp + cm.fn) / cm.total();
    EXPECT_NEAR(accuracy_from_rates(*r.sensitivity, *r.specificity, prev), *r.accuracy, 1e-12);
  }
}

TEST(Rates, PublishedArithmetic) {
  EXPECT_NEAR(accuracy_from_rates(0.79, 0.39, 0.33), 0.52, 0.01);
  EXPECT_NEAR(accuracy_from_rates(0.77, 0.61, 0.33), 0.66, 0.01);
  EXPECT_NEAR(fp_reduction_from_specificity(0.39, 0.61), 0.37, 0.02);
  EXPECT_NEAR(fp_reduction_from_specificity(0.39, 0.55), 0.28, 0.02);
  EXPECT_THROW(fp_reduction_from_specificity(1.0, 0.5), NumericError);
}

TEST(CombinedRule, OrOfSurgeonAndModel) {
  EXPECT_TRUE(combined_rule(true, 0.0));
  EXPECT_TRUE(combined_rule(false, 0.5));
  EXPECT_FALSE(combined_rule(false, 0.49));
  EXPECT_THROW(combined_rule(false, 1.2), DataError);
}

TEST(CombinedRule, NeverIncreasesFalseNegatives) {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    std::vector<bool> surgeon, y;
    std::vector<double> p;
    for (int i = 0; i < 30; ++i) {
      y.push_back(rng.bernoulli(0.3));
      surgeon.push_back(rng.bernoulli(0.5));
      p.push_back(rng.uniform());
    }
    const auto base = confusion_from_decisions(surgeon, y);
    const auto comb = confusion_from_decisions(combined_decisions(surgeon, p), y);
    EXPECT_LE(comb.fn, base.fn);
    EXPECT_GE(comb.fp, base.fp);
  }
}

TEST(PolicyDelta, SensitivityChangeAndFpReduction) {
  const DecisionConfusion base{10, 20, 5, 15}, updated{12, 8, 3, 27};
  const auto d = policy_delta(base, updated);
  EXPECT_NEAR(*d.sensitivity_change, 12.0 / 15 - 10.0 / 15, 1e-12);
  EXPECT_NEAR(*d.unnecessary_biopsy_reduction, 0.6, 1e-12);
  EXPECT_THROW(policy_delta(base, DecisionConfusion{1, 1, 1, 1}), DataError);
}

}  // namespace
}  // namespace stagelab
