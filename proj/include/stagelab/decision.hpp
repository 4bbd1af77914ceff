#pragma once

// Biopsy-decision analytics: confusion matrices from yes/no decisions, the
// derived rates, the combined surgeon-or-model rule and policy deltas.

#include <optional>
#include <span>
#include <vector>

#include "stagelab/error.hpp"
#include "stagelab/jsonl.hpp"

namespace stagelab {

// decision = biopsy, label = metastasis
struct DecisionConfusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  friend bool operator==(const DecisionConfusion&, const DecisionConfusion&) = default;
};

inline DecisionConfusion confusion_from_decisions(const std::vector<bool>& biopsy, const std::vector<bool>& metastasis) {
  if (biopsy.size() != metastasis.size()) throw DataError("decisions and labels differ in length");
  DecisionConfusion cm;
  for (std::size_t i = 0; i < biopsy.size(); ++i) {
    if (biopsy[i]) (metastasis[i] ? cm.tp : cm.fp) += 1;
    else (metastasis[i] ? cm.fn : cm.tn) += 1;
  }
  return cm;
}

// Rates with a zero denominator are absent.
struct RateSet {
  std::optional<double> sensitivity, specificity, accuracy;
  std::optional<double> false_negative_rate, false_omission_rate, false_discovery_rate;
};

namespace detail {
inline std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace detail

inline RateSet rates(const DecisionConfusion& cm) {
  return {detail::ratio(cm.tp, cm.tp + cm.fn),           detail::ratio(cm.tn, cm.tn + cm.fp),
          detail::ratio(cm.tp + cm.tn, cm.total()),       detail::ratio(cm.fn, cm.tp + cm.fn),
          detail::ratio(cm.fn, cm.fn + cm.tn),            detail::ratio(cm.fp, cm.fp + cm.tp)};
}

// Biopsy when the surgeon (seeing the model output) says yes, or when the
// model probability is 0.5 or greater.
inline bool combined_rule(bool surgeon_with_model, double model_probability, double threshold = 0.5) {
  if (!(model_probability >= 0.0 && model_probability <= 1.0)) throw DataError("model probability must lie in [0, 1]");
  return surgeon_with_model || model_probability >= threshold;
}

inline std::vector<bool> combined_decisions(const std::vector<bool>& surgeon_with_model,
                                            std::span<const double> model_probability, double threshold = 0.5) {
  if (surgeon_with_model.size() != model_probability.size()) throw DataError("decisions and probabilities differ in length");
  std::vector<bool> out(surgeon_with_model.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = combined_rule(surgeon_with_model[i], model_probability[i], threshold);
  return out;
}

struct PolicyDelta {
  std::optional<double> sensitivity_change;  // absolute, new - baseline
  std::optional<double> unnecessary_biopsy_reduction;  // (fp_base - fp_new) / fp_base
};

inline PolicyDelta policy_delta(const DecisionConfusion& baseline, const DecisionConfusion& updated) {
  if (baseline.total() != updated.total()) throw DataError("policies are evaluated on different numbers of evaluations");
  PolicyDelta d;
  const auto sb = rates(baseline).sensitivity, su = rates(updated).sensitivity;
  if (sb && su) d.sensitivity_change = *su - *sb;
  if (baseline.fp > 0)
    d.unnecessary_biopsy_reduction =
        (static_cast<double>(baseline.fp) - static_cast<double>(updated.fp)) / static_cast<double>(baseline.fp);
  return d;
}

// Rates expressed directly in terms of sensitivity, specificity and prevalence.
inline double accuracy_from_rates(double sensitivity, double specificity, double prevalence) {
  return sensitivity * prevalence + specificity * (1.0 - prevalence);
}

inline double fp_reduction_from_specificity(double baseline_specificity, double new_specificity) {
  const double fp_base = 1.0 - baseline_specificity;
  if (!(fp_base > 0.0)) throw NumericError("baseline false positive rate is zero");
  return (fp_base - (1.0 - new_specificity)) / fp_base;
}

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline Json to_json(const DecisionConfusion& cm) {
  return Json{{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}};
}

inline Json to_json(const RateSet& r) {
  return Json{{"sensitivity", optional_json(r.sensitivity)},
              {"specificity", optional_json(r.specificity)},
              {"accuracy", optional_json(r.accuracy)},
              {"false_negative_rate", optional_json(r.false_negative_rate)},
              {"false_omission_rate", optional_json(r.false_omission_rate)},
              {"false_discovery_rate", optional_json(r.false_discovery_rate)}};
}

inline Json to_json(const PolicyDelta& d) {
  return Json{{"sensitivity_change", optional_json(d.sensitivity_change)},
              {"unnecessary_biopsy_reduction", optional_json(d.unnecessary_biopsy_reduction)}};
}

}  // namespace stagelab
