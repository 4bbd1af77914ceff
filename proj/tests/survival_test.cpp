#include <gtest/gtest.h>

#include "oracles.hpp"
#include "stagelab/rng.hpp"
#include "stagelab/survival.hpp"

namespace stagelab {
namespace {

constexpr auto kBenign = PatientGroup::predicted_benign;
constexpr auto kMet = PatientGroup::predicted_metastasis;

TEST(KaplanMeier, HandFixture) {
  // Times 1, 2+, 3, 3, 4+, 5: S(1) = 5/6, S(3) = 5/6 * 1/3, S(5) = 0.
  const SurvivalSample s{{1, true}, {2, false}, {3, true}, {3, true}, {4, false}, {5, true}};
  const auto km = kaplan_meier(s);
  ASSERT_EQ(km.steps.size(), 5u);
  EXPECT_EQ(km.steps[0].survival, 5.0 / 6.0);
  EXPECT_EQ(km.steps[1].survival, 5.0 / 6.0);
  EXPECT_EQ(km.steps[2].at_risk, 4u);
  EXPECT_EQ(km.steps[2].survival, 5.0 / 6.0 * (1.0 - 2.0 / 4.0));
  EXPECT_EQ(km.steps[4].survival, 0.0);
  EXPECT_EQ(survival_at(km, 0.5), 1.0);
  EXPECT_EQ(survival_at(km, 3.0), km.steps[2].survival);
  EXPECT_EQ(survival_at(km, 4.9), km.steps[2].survival);
}

TEST(KaplanMeier, AllCensoredStaysAtOne) {
  const auto km = kaplan_meier({{5, false}, {7, false}});
  EXPECT_EQ(survival_at(km, 100), 1.0);
  EXPECT_THROW(kaplan_meier({}), DataError);
  EXPECT_THROW(kaplan_meier({{0, true}}), DataError);
}

TEST(KaplanMeier, MatchesProductLimitOracle) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    SurvivalSample s;
    std::vector<oracle::Subject> o;
    for (std::uint64_t i = 0, n = 1 + rng.below(40); i < n; ++i) {
      const double time = 1.0 + static_cast<double>(rng.below(15));
      const bool event = rng.bernoulli(0.6);
      s.push_back({time, event});
      o.push_back({time, event, 0.0});
    }
    const auto km = kaplan_meier(s);
    for (double q = 0; q <= 17; q += 0.5) EXPECT_NEAR(survival_at(km, q), oracle::product_limit(o, q), 1e-12);
  }
}

SurvivalSample simulate(Rng& rng, std::size_t n, double hr, double censor_rate) {
  SurvivalSample s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool x = rng.bernoulli(0.5);
    const double t = rng.exponential(x ? hr : 1.0);
    const double c = rng.exponential(censor_rate);
    s.push_back({std::min(t, c), t <= c, x ? kMet : kBenign});
  }
  return s;
}

TEST(Cox, AgreesWithGridSearchOnBreslowLikelihood) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    auto s = simulate(rng, 60, 2.0, 0.4);
    for (auto& subj : s) subj.time = std::ceil(subj.time * 5.0);  // force ties
    std::vector<oracle::Subject> o;
    for (const auto& subj : s) o.push_back({subj.time, subj.event, subj.group == kMet ? 1.0 : 0.0});
    const auto fit = cox_fit(s);
    const double grid = oracle::grid_argmax([&](double b) { return oracle::breslow_log_likelihood(o, b); }, -5, 5);
    EXPECT_NEAR(fit.beta, grid, 1e-3);
    EXPECT_NEAR(cox_log_likelihood(cox_risk_table(s), 0.7), oracle::breslow_log_likelihood(o, 0.7), 1e-9);
    EXPECT_TRUE(fit.converged);
    EXPECT_LT(fit.hr_ci_low, fit.hazard_ratio);
    EXPECT_GT(fit.hr_ci_high, fit.hazard_ratio);
  }
}

TEST(Cox, RecoversHazardRatio) {
  Rng rng(4);
  const auto fit = cox_fit(simulate(rng, 4000, 3.0, 0.4));
  EXPECT_NEAR(fit.hazard_ratio, 3.0, 0.3);
  EXPECT_LT(fit.p_value, 1e-10);
}

TEST(Cox, MonotoneLikelihoodIsNumericError) {
  const SurvivalSample s{{1, true, kMet}, {2, true, kMet}, {3, false, kBenign}, {4, false, kBenign}};
  EXPECT_THROW(cox_fit(s), NumericError);
  const auto fit = cox_fit(s, {1e-8, 50, false});
  EXPECT_FALSE(fit.converged);
}

TEST(Samples, BuiltFromOutcomesAndGroups) {
  OutcomeSet outcomes{{"A", 400, true, 100, false, std::nullopt}, {"B", 300, false, std::nullopt, false, std::nullopt},
                      {"C", 500, true, 200, true, 250}};
  PatientScores groups;
  groups.scored = {{"A", 0.9, kMet}, {"B", 0.1, kBenign}, {"C", 0.6, kMet}, {"D", 0.2, kBenign}};
  const auto dfs = survival_sample(outcomes, groups, Endpoint::disease_free);
  ASSERT_EQ(dfs.sample.size(), 3u);
  EXPECT_EQ(dfs.sample[0].time, 100);
  EXPECT_EQ(dfs.sample[1].time, 300);
  EXPECT_FALSE(dfs.sample[1].event);
  EXPECT_EQ(dfs.missing_outcome, std::vector<std::string>{"D"});
  const auto pcfs = survival_sample(outcomes, groups, Endpoint::peritoneal_carcinomatosis_free);
  EXPECT_FALSE(pcfs.sample[0].event);
  EXPECT_EQ(pcfs.sample[0].time, 400);
  EXPECT_EQ(pcfs.sample[2].time, 250);
}

}  // namespace
}  // namespace stagelab
