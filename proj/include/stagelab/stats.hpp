#pragma once

// Bootstrap intervals, the paired bootstrap AUC test, chi-square, simple
// linear regression, one-way ANOVA and Pearson correlation.

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stagelab/error.hpp"
#include "stagelab/jsonl.hpp"
#include "stagelab/parallel.hpp"
#include "stagelab/rng.hpp"
#include "stagelab/roc.hpp"

namespace stagelab {

enum class ResamplingUnit { lesion, patient };

inline std::string_view to_string(ResamplingUnit u) { return u == ResamplingUnit::lesion ? "lesion" : "patient"; }
inline std::optional<ResamplingUnit> parse_resampling_unit(std::string_view s) {
  if (s == "lesion") return ResamplingUnit::lesion;
  if (s == "patient") return ResamplingUnit::patient;
  return std::nullopt;
}

struct BootstrapConfig {
  int n_replicates = 2000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  ResamplingUnit unit = ResamplingUnit::lesion;
  unsigned threads = 0;
  int max_redraws = 1000;  // total redraws of undefined replicates before giving up

  void validate() const {
    if (n_replicates < 100) throw UsageError("bootstrap needs at least 100 replicates");
    if (!(alpha > 0.0 && alpha < 0.5)) throw UsageError("alpha must lie in (0, 0.5)");
    if (max_redraws < 0) throw UsageError("max_redraws must be >= 0");
  }
};

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::optional<double> df1, df2;
  std::optional<double> point, ci_low, ci_high;
};

struct BootstrapResult {
  double point = 0.0;
  double low = 0.0;
  double high = 0.0;
  int replicates = 0;
  int redraws = 0;
  ResamplingUnit unit = ResamplingUnit::lesion;
  std::vector<double> values;  // replicate statistics in replicate order
};

// Observation indices grouped into resampling clusters.
using Clusters = std::vector<std::vector<std::size_t>>;

inline Clusters singleton_clusters(std::size_t n) {
  Clusters c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = {i};
  return c;
}

// Linear-interpolation quantile of sorted values.
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DataError("quantile of an empty sample");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace detail {

// Draws replicate r: clusters sampled with replacement, flattened into
// observation indices. Attempt a > 0 is a redraw after an undefined statistic.
inline std::vector<std::size_t> resample(const Clusters& clusters, std::uint64_t seed, std::size_t r, std::size_t a) {
  Rng rng(derive_seed(seed, r, a));
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const auto& c = clusters[rng.below(clusters.size())];
    idx.insert(idx.end(), c.begin(), c.end());
  }
  return idx;
}

// Replicate statistics; each replicate owns its seed stream so results do not
// depend on thread count. NumericError from the statistic marks a replicate
// undefined and triggers a redraw.
inline std::vector<double> replicate(const Clusters& clusters,
                                     const std::function<double(std::span<const std::size_t>)>& statistic,
                                     const BootstrapConfig& cfg, int& redraws_out) {
  const auto n = static_cast<std::size_t>(cfg.n_replicates);
  std::vector<double> values(n);
  std::vector<int> redraws(n, 0);
  parallel_for(n, cfg.threads, [&](std::size_t r) {
    for (std::size_t a = 0;; ++a) {
      const auto idx = resample(clusters, cfg.seed, r, a);
      try {
        values[r] = statistic(idx);
        return;
      } catch (const NumericError&) {
        if (++redraws[r] > cfg.max_redraws)
          throw NumericError("statistic undefined on " + std::to_string(redraws[r]) + " consecutive resamples");
      }
    }
  });
  long total = std::accumulate(redraws.begin(), redraws.end(), 0L);
  if (total > cfg.max_redraws)
    throw NumericError("statistic undefined on " + std::to_string(total) + " resamples (cap " +
                       std::to_string(cfg.max_redraws) + ")");
  redraws_out = static_cast<int>(total);
  return values;
}

}  // namespace detail

// Percentile bootstrap interval of `statistic` over resampled clusters. The
// interval is widened, if needed, to contain the point estimate.
inline BootstrapResult bootstrap_ci(const Clusters& clusters,
                                    const std::function<double(std::span<const std::size_t>)>& statistic,
                                    const BootstrapConfig& cfg) {
  cfg.validate();
  if (clusters.empty()) throw DataError("bootstrap of an empty sample");
  std::vector<std::size_t> all;
  for (const auto& c : clusters) all.insert(all.end(), c.begin(), c.end());
  BootstrapResult out;
  out.unit = cfg.unit;
  out.point = statistic(all);
  out.values = detail::replicate(clusters, statistic, cfg, out.redraws);
  out.replicates = cfg.n_replicates;
  std::vector<double> sorted = out.values;
  std::sort(sorted.begin(), sorted.end());
  out.low = std::min(sorted_quantile(sorted, cfg.alpha / 2.0), out.point);
  out.high = std::max(sorted_quantile(sorted, 1.0 - cfg.alpha / 2.0), out.point);
  return out;
}

inline BootstrapResult bootstrap_ci(std::size_t n, const std::function<double(std::span<const std::size_t>)>& statistic,
                                    const BootstrapConfig& cfg) {
  return bootstrap_ci(singleton_clusters(n), statistic, cfg);
}

// Bootstrap interval of AUC-ROC over resampled observations or clusters.
inline BootstrapResult bootstrap_auc(std::span<const double> scores, const std::vector<bool>& labels,
                                     const BootstrapConfig& cfg, const Clusters& clusters = {}) {
  check_scores(scores, labels);
  auto stat = [&](std::span<const std::size_t> idx) {
    std::vector<double> s;
    std::vector<bool> l;
    s.reserve(idx.size());
    for (auto i : idx) {
      s.push_back(scores[i]);
      l.push_back(labels[i]);
    }
    return auc_roc(s, l);
  };
  return bootstrap_ci(clusters.empty() ? singleton_clusters(scores.size()) : clusters, stat, cfg);
}

// Paired bootstrap test of a difference statistic d over jointly resampled
// clusters. Two-sided p = min(1, 2 min(P*(d <= 0), P*(d >= 0))).
inline TestResult paired_bootstrap_test(const Clusters& clusters,
                                        const std::function<double(std::span<const std::size_t>)>& delta,
                                        const BootstrapConfig& cfg) {
  const BootstrapResult boot = bootstrap_ci(clusters, delta, cfg);
  const double n = static_cast<double>(boot.values.size());
  const double le = static_cast<double>(std::count_if(boot.values.begin(), boot.values.end(), [](double d) { return d <= 0.0; }));
  const double ge = static_cast<double>(std::count_if(boot.values.begin(), boot.values.end(), [](double d) { return d >= 0.0; }));
  TestResult t;
  t.statistic = boot.point;
  t.point = boot.point;
  t.ci_low = boot.low;
  t.ci_high = boot.high;
  t.p_value = std::min(1.0, 2.0 * std::min(le, ge) / n);
  return t;
}

// AUC(a) - AUC(b) on the same observations, resampled jointly.
inline TestResult paired_bootstrap_auc_test(std::span<const double> scores_a, std::span<const double> scores_b,
                                            const std::vector<bool>& labels, const BootstrapConfig& cfg,
                                            const Clusters& clusters = {}) {
  check_scores(scores_a, labels);
  check_scores(scores_b, labels);
  auto delta = [&](std::span<const std::size_t> idx) {
    std::vector<double> a, b;
    std::vector<bool> l;
    for (auto i : idx) {
      a.push_back(scores_a[i]);
      b.push_back(scores_b[i]);
      l.push_back(labels[i]);
    }
    return auc_roc(a, l) - auc_roc(b, l);
  };
  return paired_bootstrap_test(clusters.empty() ? singleton_clusters(labels.size()) : clusters, delta, cfg);
}

// Pearson chi-square test of independence on an r x c table of counts.
// With `yates`, the 2 x 2 statistic uses the continuity correction.
inline TestResult chi_square_test(const std::vector<std::vector<double>>& table, bool yates = false) {
  const std::size_t r = table.size();
  if (r < 2) throw DataError("chi-square needs at least 2 rows");
  const std::size_t c = table[0].size();
  if (c < 2) throw DataError("chi-square needs at least 2 columns");
  std::vector<double> row(r, 0.0), col(c, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (table[i].size() != c) throw DataError("chi-square table rows differ in length");
    for (std::size_t j = 0; j < c; ++j) {
      const double v = table[i][j];
      if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("chi-square counts must be finite and >= 0");
      row[i] += v;
      col[j] += v;
      total += v;
    }
  }
  if (yates && (r != 2 || c != 2)) throw UsageError("continuity correction applies to 2x2 tables only");
  double stat = 0.0;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double expected = row[i] * col[j] / total;
      if (!(expected > 0.0))
        throw DataError("chi-square expected count is zero (row " + std::to_string(i) + ", column " +
                        std::to_string(j) + "); an exact test is required");
      double d = std::abs(table[i][j] - expected);
      if (yates) d = std::max(0.0, d - 0.5);
      stat += d * d / expected;
    }
  const double df = static_cast<double>((r - 1) * (c - 1));
  TestResult t;
  t.statistic = stat;
  t.df1 = df;
  t.p_value = stat > 0.0 ? boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), stat)) : 1.0;
  return t;
}

struct RegressionResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_se = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;  // two-sided, slope = 0
  std::size_t n = 0;
};

inline double mean_of(std::span<const double> v) {
  if (v.empty()) throw DataError("mean of an empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Two-sided p-value of a t statistic; infinite t gives 0.
inline double t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  if (std::isnan(t)) return 1.0;
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::abs(t))));
}

inline RegressionResult linear_regression(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("regression inputs differ in length");
  if (x.size() < 3) throw DataError("regression needs at least 3 points");
  const double mx = mean_of(x), my = mean_of(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw DataError("regression predictor is constant");
  RegressionResult out;
  out.n = x.size();
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (out.intercept + out.slope * x[i]);
    sse += e * e;
  }
  out.r_squared = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 0.0;
  const double df = static_cast<double>(x.size() - 2);
  out.slope_se = std::sqrt(sse / df / sxx);
  if (out.slope_se > 0.0) {
    out.t_statistic = out.slope / out.slope_se;
    out.p_value = t_two_sided_p(out.t_statistic, df);
  } else {
    out.t_statistic = out.slope == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), out.slope);
    out.p_value = out.slope == 0.0 ? 1.0 : 0.0;
  }
  return out;
}

// One-way ANOVA: F = MS_between / MS_within with df (k-1, n-k).
inline TestResult one_way_anova(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw DataError("ANOVA needs at least 2 groups");
  std::size_t n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) throw DataError("ANOVA group is empty");
    n += g.size();
    grand += std::accumulate(g.begin(), g.end(), 0.0);
  }
  const std::size_t k = groups.size();
  if (n <= k) throw DataError("ANOVA needs more observations than groups");
  grand /= static_cast<double>(n);
  double ssb = 0.0, ssw = 0.0;
  for (const auto& g : groups) {
    const double m = mean_of(g);
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) ssw += (v - m) * (v - m);
  }
  TestResult t;
  t.df1 = static_cast<double>(k - 1);
  t.df2 = static_cast<double>(n - k);
  if (ssw == 0.0) {
    t.statistic = ssb == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    t.p_value = ssb == 0.0 ? 1.0 : 0.0;
    return t;
  }
  t.statistic = (ssb / *t.df1) / (ssw / *t.df2);
  t.p_value = t.statistic > 0.0
                  ? boost::math::cdf(boost::math::complement(boost::math::fisher_f(*t.df1, *t.df2), t.statistic))
                  : 1.0;
  return t;
}

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("correlation inputs differ in length");
  if (x.size() < 3) throw DataError("correlation needs at least 3 points");
  const double mx = mean_of(x), my = mean_of(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("correlation is undefined for a constant variable");
  Correlation c;
  c.n = x.size();
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(x.size() - 2);
  const double denom = 1.0 - c.r * c.r;
  c.p_value = denom <= 0.0 ? 0.0 : t_two_sided_p(c.r * std::sqrt(df / denom), df);
  return c;
}

// ---------------------------------------------------------------------------
// JSON views for stats_report.json

inline Json to_json(const TestResult& t) {
  Json j{{"statistic", t.statistic}, {"p_value", t.p_value}};
  if (std::isinf(t.statistic)) j["statistic"] = "inf";
  if (t.df1) j["df1"] = *t.df1;
  if (t.df2) j["df2"] = *t.df2;
  if (t.point) j["point"] = *t.point;
  if (t.ci_low) j["ci_low"] = *t.ci_low;
  if (t.ci_high) j["ci_high"] = *t.ci_high;
  return j;
}

inline Json to_json(const BootstrapResult& b, double alpha) {
  return Json{{"point", b.point},   {"ci_low", b.low},         {"ci_high", b.high}, {"confidence", 1.0 - alpha},
              {"replicates", b.replicates}, {"redraws", b.redraws}, {"unit", to_string(b.unit)}, {"method", "percentile"}};
}

inline Json to_json(const RegressionResult& r) {
  return Json{{"slope", r.slope},     {"intercept", r.intercept}, {"r_squared", r.r_squared}, {"slope_se", r.slope_se},
              {"t_statistic", std::isfinite(r.t_statistic) ? Json(r.t_statistic) : Json("inf")},
              {"p_value", r.p_value}, {"n", r.n}};
}

inline Json to_json(const Correlation& c) { return Json{{"r", c.r}, {"p_value", c.p_value}, {"n", c.n}}; }

}  // namespace stagelab
