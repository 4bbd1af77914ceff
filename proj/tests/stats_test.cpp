#include <gtest/gtest.h>

#include "stagelab/rng.hpp"
#include "stagelab/stats.hpp"

namespace stagelab {
namespace {

double hand_chi_square(const std::vector<std::vector<double>>& t) {
  const double a = t[0][0], b = t[0][1], c = t[1][0], d = t[1][1], n = a + b + c + d;
  return n * (a * d - b * c) * (a * d - b * c) / ((a + b) * (c + d) * (a + c) * (b + d));
}

TEST(ChiSquare, HandFormulaFixtures) {
  const std::vector<std::vector<double>> t{{10, 20}, {30, 40}};
  const auto plain = chi_square_test(t);
  EXPECT_NEAR(plain.statistic, hand_chi_square(t), 1e-12);
  EXPECT_NEAR(plain.statistic, 0.7937, 1e-4);
  EXPECT_EQ(*plain.df1, 1.0);
  // Yates: n (|ad - bc| - n/2)^2 / (row and column products).
  EXPECT_NEAR(chi_square_test(t, true).statistic, 100.0 * std::pow(200.0 - 50.0, 2) / (30.0 * 70 * 40 * 60), 1e-12);
  EXPECT_NEAR(chi_square_test(t, true).statistic, 0.4464, 1e-4);
}

TEST(ChiSquare, ScaleAndPermutationProperties) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::vector<double>> t(3, std::vector<double>(4));
    for (auto& row : t)
      for (auto& v : row) v = 1.0 + static_cast<double>(rng.below(40));
    const double s = chi_square_test(t).statistic;
    auto doubled = t;
    for (auto& row : doubled)
      for (auto& v : row) v *= 2;
    EXPECT_NEAR(chi_square_test(doubled).statistic, 2 * s, 1e-9 * s);
    auto permuted = t;
    std::swap(permuted[0], permuted[2]);
    for (auto& row : permuted) std::swap(row[1], row[3]);
    EXPECT_NEAR(chi_square_test(permuted).statistic, s, 1e-9 * s);
    EXPECT_EQ(*chi_square_test(t).df1, 6.0);
  }
}

TEST(ChiSquare, Errors) {
  EXPECT_THROW(chi_square_test({{1, 2}}), DataError);
  EXPECT_THROW(chi_square_test({{0, 0}, {3, 4}}), DataError);
  EXPECT_THROW(chi_square_test({{1, 2, 3}, {3, 4, 5}}, true), UsageError);
}

TEST(Anova, TwoGroupsEqualsPooledTSquared) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a, b;
    for (std::uint64_t k = 0, n = 3 + rng.below(20); k < n; ++k) a.push_back(rng.normal(0, 1));
    for (std::uint64_t k = 0, n = 3 + rng.below(20); k < n; ++k) b.push_back(rng.normal(0.5, 1));
    const double ma = mean_of(a), mb = mean_of(b);
    double ss = 0;
    for (double v : a) ss += (v - ma) * (v - ma);
    for (double v : b) ss += (v - mb) * (v - mb);
    const double sp2 = ss / static_cast<double>(a.size() + b.size() - 2);
    const double t = (ma - mb) / std::sqrt(sp2 * (1.0 / a.size() + 1.0 / b.size()));
    const auto f = one_way_anova({a, b});
    EXPECT_NEAR(f.statistic, t * t, 1e-9 * std::max(1.0, t * t));
    EXPECT_NEAR(f.p_value, t_two_sided_p(t, static_cast<double>(a.size() + b.size() - 2)), 1e-9);
  }
}

TEST(Regression, MatchesNormalEquations) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x, y;
    for (int k = 0; k < 30; ++k) {
      x.push_back(rng.uniform(0, 10));
      y.push_back(2.0 - 0.3 * x.back() + rng.normal());
    }
    // Solve [n Sx; Sx Sxx] [b0 b1]' = [Sy Sxy]' directly.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int k = 0; k < 30; ++k) {
      sx += x[k];
      sy += y[k];
      sxx += x[k] * x[k];
      sxy += x[k] * y[k];
    }
    const double det = 30 * sxx - sx * sx;
    const double b1 = (30 * sxy - sx * sy) / det, b0 = (sxx * sy - sx * sxy) / det;
    const auto r = linear_regression(x, y);
    EXPECT_NEAR(r.slope, b1, 1e-9);
    EXPECT_NEAR(r.intercept, b0, 1e-9);
    const auto c = pearson(x, y);
    EXPECT_NEAR(c.r * c.r, r.r_squared, 1e-9);
    EXPECT_NEAR(c.p_value, r.p_value, 1e-9);
  }
}

TEST(Regression, PerfectFitAndErrors) {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  const auto r = linear_regression(x, y);
  EXPECT_DOUBLE_EQ(r.slope, 2.0);
  EXPECT_DOUBLE_EQ(r.p_value, 0.0);
  EXPECT_THROW(linear_regression(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DataError);
  EXPECT_THROW(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{4, 4, 4}), NumericError);
}

TEST(Bootstrap, IdenticalScoresGiveHighP) {
  Rng rng(6);
  std::vector<double> s;
  std::vector<bool> y;
  for (int i = 0; i < 100; ++i) {
    y.push_back(i % 3 == 0);
    s.push_back(rng.uniform() + (y.back() ? 0.3 : 0.0));
  }
  BootstrapConfig cfg;
  cfg.n_replicates = 500;
  cfg.seed = 1;
  const auto t = paired_bootstrap_auc_test(s, s, y, cfg);
  EXPECT_GE(t.p_value, 0.95);
  EXPECT_EQ(*t.point, 0.0);
}

TEST(Bootstrap, BitIdenticalAcrossThreadCounts) {
  Rng rng(7);
  std::vector<double> a, b;
  std::vector<bool> y;
  Clusters clusters;
  for (int i = 0; i < 120; ++i) {
    if (i % 4 == 0) clusters.emplace_back();
    clusters.back().push_back(i);
    y.push_back(rng.bernoulli(0.4));
    a.push_back(rng.uniform() + (y.back() ? 0.4 : 0.0));
    b.push_back(rng.uniform() + (y.back() ? 0.2 : 0.0));
  }
  BootstrapConfig cfg;
  cfg.n_replicates = 400;
  cfg.seed = 99;
  std::vector<double> reference;
  for (unsigned threads : {1u, 2u, 3u, 8u}) {
    cfg.threads = threads;
    const auto boot = bootstrap_auc(a, y, cfg, clusters);
    const auto test = paired_bootstrap_auc_test(a, b, y, cfg, clusters);
    std::vector<double> got = boot.values;
    got.push_back(test.p_value);
    got.push_back(*test.ci_low);
    if (reference.empty()) reference = got;
    else EXPECT_EQ(got, reference);
  }
}

TEST(Bootstrap, IntervalContainsPointAndCoversMean) {
  Rng rng(8);
  std::vector<double> v;
  for (int i = 0; i < 200; ++i) v.push_back(rng.normal(5, 2));
  BootstrapConfig cfg;
  cfg.n_replicates = 1000;
  cfg.seed = 3;
  const auto r = bootstrap_ci(v.size(), [&](std::span<const std::size_t> idx) {
    double s = 0;
    for (auto i : idx) s += v[i];
    return s / idx.size();
  }, cfg);
  EXPECT_LE(r.low, r.point);
  EXPECT_GE(r.high, r.point);
  // Percentile interval width near 2 * 1.96 * sd / sqrt(n).
  EXPECT_NEAR(r.high - r.low, 2 * 1.96 * 2 / std::sqrt(200.0), 0.12);
}

TEST(Bootstrap, UndefinedReplicatesAreRedrawnOrFail) {
  const std::vector<double> s{0.1, 0.9, 0.2, 0.8, 0.3};
  const std::vector<bool> y{false, true, false, false, false};
  BootstrapConfig cfg;
  cfg.n_replicates = 200;
  cfg.seed = 2;
  const auto r = bootstrap_auc(s, y, cfg);
  EXPECT_GT(r.redraws, 0);
  cfg.max_redraws = 0;
  EXPECT_THROW(bootstrap_auc(s, y, cfg), NumericError);
}

}  // namespace
}  // namespace stagelab
