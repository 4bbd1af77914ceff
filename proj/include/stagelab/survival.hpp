#pragma once

// Kaplan-Meier estimation and the two-group Cox proportional-hazards fit.

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stagelab/classify.hpp"
#include "stagelab/error.hpp"
#include "stagelab/ingest.hpp"
#include "stagelab/jsonl.hpp"

namespace stagelab {

struct SurvivalSubject {
  double time = 0.0;  // days from operation, > 0
  bool event = false;
  PatientGroup group = PatientGroup::predicted_benign;
};

using SurvivalSample = std::vector<SurvivalSubject>;

inline void check_sample(const SurvivalSample& sample) {
  for (const auto& s : sample)
    if (!(s.time > 0.0) || !std::isfinite(s.time)) throw DataError("survival times must be finite and > 0");
}

inline SurvivalSample restrict_to(const SurvivalSample& sample, PatientGroup g) {
  SurvivalSample out;
  std::copy_if(sample.begin(), sample.end(), std::back_inserter(out), [g](const auto& s) { return s.group == g; });
  return out;
}

// One row per distinct observed time.
struct KMStep {
  double time = 0.0;
  double survival = 1.0;  // S(time), after the step
  std::size_t at_risk = 0;
  std::size_t events = 0;
  std::size_t censored = 0;
};

struct KMEstimate {
  std::vector<KMStep> steps;
  std::size_t subjects = 0;
};

inline KMEstimate kaplan_meier(const SurvivalSample& sample) {
  if (sample.empty()) throw DataError("Kaplan-Meier needs at least one subject");
  check_sample(sample);
  std::map<double, std::pair<std::size_t, std::size_t>> by_time;  // events, censored
  for (const auto& s : sample) (s.event ? by_time[s.time].first : by_time[s.time].second) += 1;
  KMEstimate km;
  km.subjects = sample.size();
  std::size_t at_risk = sample.size();
  double surv = 1.0;
  for (const auto& [t, counts] : by_time) {
    const auto [d, c] = counts;
    if (d > 0) surv *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
    km.steps.push_back({t, surv, at_risk, d, c});
    at_risk -= d + c;
  }
  return km;
}

// Right-continuous S(t); S(t) = 1 before the first step.
inline double survival_at(const KMEstimate& km, double t) {
  if (t < 0.0 || std::isnan(t)) throw DataError("survival_at requires t >= 0");
  double s = 1.0;
  for (const auto& step : km.steps) {
    if (step.time > t) break;
    s = step.survival;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Cox proportional hazards, single binary covariate (predicted_metastasis = 1)

struct CoxOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 50;
  bool throw_on_failure = true;  // otherwise return with converged = false
};

struct CoxFit {
  double beta = 0.0;  // log hazard ratio, metastasis vs benign group
  double hazard_ratio = 1.0;
  double standard_error = 0.0;
  double z = 0.0;
  double p_value = 1.0;  // Wald, two-sided
  double hr_ci_low = 0.0, hr_ci_high = 0.0;  // 95% Wald interval
  double lr_statistic = 0.0;
  double lr_p_value = 1.0;
  double gradient = 0.0;
  int iterations = 0;
  bool converged = false;
  std::size_t events_benign = 0, events_metastasis = 0;
};

// Risk-set summary at each distinct event time.
struct CoxRiskTable {
  struct Row {
    double at_risk_0 = 0.0, at_risk_1 = 0.0;
    double events = 0.0, events_1 = 0.0;
  };
  std::vector<Row> rows;
};

inline CoxRiskTable cox_risk_table(const SurvivalSample& sample) {
  std::map<double, std::array<double, 4>> at;  // n0 leaving, n1 leaving, d, d1
  for (const auto& s : sample) {
    auto& a = at[s.time];
    const bool x = s.group == PatientGroup::predicted_metastasis;
    a[x ? 1 : 0] += 1.0;
    if (s.event) {
      a[2] += 1.0;
      if (x) a[3] += 1.0;
    }
  }
  double n0 = 0.0, n1 = 0.0;
  for (const auto& [t, a] : at) {
    n0 += a[0];
    n1 += a[1];
  }
  CoxRiskTable table;
  for (const auto& [t, a] : at) {
    if (a[2] > 0.0) table.rows.push_back({n0, n1, a[2], a[3]});
    n0 -= a[0];
    n1 -= a[1];
  }
  return table;
}

// Breslow log partial likelihood.
inline double cox_log_likelihood(const CoxRiskTable& table, double beta) {
  double ll = 0.0;
  for (const auto& r : table.rows) ll += r.events_1 * beta - r.events * std::log(r.at_risk_0 + r.at_risk_1 * std::exp(beta));
  return ll;
}

inline CoxFit cox_fit(const SurvivalSample& sample, const CoxOptions& options = {}) {
  check_sample(sample);
  CoxFit fit;
  for (const auto& s : sample)
    if (s.event) (s.group == PatientGroup::predicted_metastasis ? fit.events_metastasis : fit.events_benign) += 1;
  const CoxRiskTable table = cox_risk_table(sample);

  auto derivatives = [&](double beta) {
    double u = 0.0, info = 0.0;
    const double e = std::exp(beta);
    for (const auto& r : table.rows) {
      const double denom = r.at_risk_0 + r.at_risk_1 * e;
      u += r.events_1 - r.events * r.at_risk_1 * e / denom;
      info += r.events * r.at_risk_0 * r.at_risk_1 * e / (denom * denom);
    }
    return std::pair{u, info};
  };

  auto fail = [&](const std::string& why) {
    if (options.throw_on_failure) throw NumericError("Cox fit did not converge: " + why);
    fit.converged = false;
    fit.hazard_ratio = std::exp(fit.beta);
    return fit;
  };
  if (fit.events_benign == 0 || fit.events_metastasis == 0)
    return fail("monotone likelihood, all events fall in one group (beta diverges to " +
                std::string(fit.events_metastasis == 0 ? "-inf" : "+inf") + ")");

  double beta = 0.0;
  double ll = cox_log_likelihood(table, beta);
  const double ll0 = ll;
  for (int it = 0; it <= options.max_iterations; ++it) {
    const auto [u, info] = derivatives(beta);
    fit.iterations = it;
    fit.gradient = u;
    fit.beta = beta;
    if (std::abs(u) < options.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    if (it == options.max_iterations) break;
    if (!(info > 0.0)) return fail("zero information at beta = " + std::to_string(beta));
    double step = u / info;
    double next = beta + step;
    double ll_next = cox_log_likelihood(table, next);
    while (!(ll_next >= ll) && std::abs(step) > 1e-12) {
      step /= 2.0;
      next = beta + step;
      ll_next = cox_log_likelihood(table, next);
    }
    beta = next;
    ll = ll_next;
  }
  if (!fit.converged)
    return fail("gradient " + std::to_string(fit.gradient) + " after " + std::to_string(fit.iterations) +
                " iterations, beta = " + std::to_string(fit.beta) + " (diverging)");

  const auto [u, info] = derivatives(fit.beta);
  (void)u;
  fit.hazard_ratio = std::exp(fit.beta);
  fit.standard_error = 1.0 / std::sqrt(info);
  fit.z = fit.beta / fit.standard_error;
  const boost::math::normal normal;
  fit.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(normal, std::abs(fit.z))));
  const double zq = boost::math::quantile(boost::math::complement(normal, 0.025));
  fit.hr_ci_low = std::exp(fit.beta - zq * fit.standard_error);
  fit.hr_ci_high = std::exp(fit.beta + zq * fit.standard_error);
  fit.lr_statistic = std::max(0.0, 2.0 * (cox_log_likelihood(table, fit.beta) - ll0));
  fit.lr_p_value = fit.lr_statistic > 0.0
                       ? boost::math::cdf(boost::math::complement(boost::math::chi_squared(1.0), fit.lr_statistic))
                       : 1.0;
  return fit;
}

// ---------------------------------------------------------------------------
// Building samples from outcomes and patient groups

enum class Endpoint { disease_free, peritoneal_carcinomatosis_free };

inline std::string_view to_string(Endpoint e) { return e == Endpoint::disease_free ? "dfs" : "pcfs"; }
inline std::optional<Endpoint> parse_endpoint(std::string_view s) {
  if (s == "dfs") return Endpoint::disease_free;
  if (s == "pcfs") return Endpoint::peritoneal_carcinomatosis_free;
  return std::nullopt;
}

struct SurvivalInput {
  SurvivalSample sample;
  std::vector<std::string> patient_ids;    // aligned with sample
  std::vector<std::string> missing_outcome;  // grouped patients without an outcome record
};

inline SurvivalInput survival_sample(const OutcomeSet& outcomes, const PatientScores& groups, Endpoint endpoint) {
  std::map<std::string, const OutcomeRecord*> by_id;
  for (const auto& o : outcomes) by_id[o.patient_id] = &o;
  SurvivalInput in;
  for (const auto& g : groups.scored) {
    auto it = by_id.find(g.patient_id);
    if (it == by_id.end()) {
      in.missing_outcome.push_back(g.patient_id);
      continue;
    }
    const OutcomeRecord& o = *it->second;
    const bool event = endpoint == Endpoint::disease_free ? o.recurrence_event : o.peritoneal_carcinomatosis_event;
    const std::optional<int> day = endpoint == Endpoint::disease_free ? o.recurrence_day : o.peritoneal_carcinomatosis_day;
    const double time = event ? static_cast<double>(*day) : static_cast<double>(o.followup_days);
    if (!(time > 0.0)) throw DataError("patient '" + o.patient_id + "' has a survival time of 0 days");
    in.sample.push_back({time, event, g.group});
    in.patient_ids.push_back(g.patient_id);
  }
  return in;
}

// ---------------------------------------------------------------------------
// km_curve.csv

inline std::string km_curve_csv(const std::vector<std::pair<PatientGroup, KMEstimate>>& curves) {
  std::ostringstream out;
  out.precision(17);
  out << "time,survival,at_risk,events,group\n";
  for (const auto& [group, km] : curves) {
    out << 0 << ',' << 1 << ',' << km.subjects << ',' << 0 << ',' << to_string(group) << '\n';
    for (const auto& s : km.steps)
      out << s.time << ',' << s.survival << ',' << s.at_risk << ',' << s.events << ',' << to_string(group) << '\n';
  }
  return out.str();
}

inline Json to_json(const CoxFit& f) {
  return Json{{"beta", f.beta},
              {"hazard_ratio", f.hazard_ratio},
              {"standard_error", f.standard_error},
              {"z", f.z},
              {"p_value", f.p_value},
              {"hazard_ratio_ci95", {f.hr_ci_low, f.hr_ci_high}},
              {"lr_statistic", f.lr_statistic},
              {"lr_p_value", f.lr_p_value},
              {"gradient", f.gradient},
              {"iterations", f.iterations},
              {"converged", f.converged},
              {"events", {{"predicted_benign", f.events_benign}, {"predicted_metastasis", f.events_metastasis}}}};
}

}  // namespace stagelab
