#pragma once

// Reader-study records (demographics, sessions, responses), a response
// simulator for desk-scale runs, and the survey analyses: surgeon alone vs
// surgeon with model vs the combined rule, AUC comparisons, the per-lesion
// surgeon-vs-model regression and the experience analyses.

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

#include "stagelab/decision.hpp"
#include "stagelab/error.hpp"
#include "stagelab/jsonl.hpp"
#include "stagelab/rng.hpp"
#include "stagelab/roc.hpp"
#include "stagelab/splitters.hpp"
#include "stagelab/stats.hpp"

namespace stagelab {

// ---------------------------------------------------------------------------
// Demographics

enum class Specialty { surgical_oncology, general_surgery, hpb_surgery, colorectal_surgery, other };
enum class PracticeYears { up_to_5, from_5_to_10, from_10_to_20, over_20 };
enum class Region { northeast, south, midwest, west, pacific, unknown };

inline constexpr std::array<std::pair<Specialty, std::string_view>, 5> kSpecialtyNames = {{
    {Specialty::surgical_oncology, "surgical_oncology"},
    {Specialty::general_surgery, "general_surgery"},
    {Specialty::hpb_surgery, "hpb_surgery"},
    {Specialty::colorectal_surgery, "colorectal_surgery"},
    {Specialty::other, "other"},
}};
inline constexpr std::array<std::pair<PracticeYears, std::string_view>, 4> kPracticeYearsNames = {{
    {PracticeYears::up_to_5, "0-5"},
    {PracticeYears::from_5_to_10, "5-10"},
    {PracticeYears::from_10_to_20, "10-20"},
    {PracticeYears::over_20, ">20"},
}};
inline constexpr std::array<std::pair<Region, std::string_view>, 6> kRegionNames = {{
    {Region::northeast, "northeast"},
    {Region::south, "south"},
    {Region::midwest, "midwest"},
    {Region::west, "west"},
    {Region::pacific, "pacific"},
    {Region::unknown, "unknown"},
}};

namespace detail {
template <class E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E v) {
  for (const auto& [e, n] : table)
    if (e == v) return n;
  return "?";
}
template <class E, std::size_t N>
std::optional<E> value_of(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s) {
  for (const auto& [e, n] : table)
    if (n == s) return e;
  return std::nullopt;
}
}  // namespace detail

inline std::string_view to_string(Specialty v) { return detail::name_of(kSpecialtyNames, v); }
inline std::string_view to_string(PracticeYears v) { return detail::name_of(kPracticeYearsNames, v); }
inline std::string_view to_string(Region v) { return detail::name_of(kRegionNames, v); }
inline std::optional<Specialty> parse_specialty(std::string_view s) { return detail::value_of(kSpecialtyNames, s); }
inline std::optional<PracticeYears> parse_practice_years(std::string_view s) {
  return detail::value_of(kPracticeYearsNames, s);
}
inline std::optional<Region> parse_region(std::string_view s) { return detail::value_of(kRegionNames, s); }

struct Demographics {
  Specialty specialty = Specialty::other;
  PracticeYears years_in_practice = PracticeYears::up_to_5;
  Region region = Region::unknown;
  double cancer_ops_per_month = 0.0;
  double staging_laps_per_month = 0.0;
  friend bool operator==(const Demographics&, const Demographics&) = default;
};

inline Json to_json(const Demographics& d) {
  return Json{{"specialty", to_string(d.specialty)},
              {"years_in_practice", to_string(d.years_in_practice)},
              {"region", to_string(d.region)},
              {"cancer_ops_per_month", d.cancer_ops_per_month},
              {"staging_laps_per_month", d.staging_laps_per_month}};
}

// Throws DataError naming the first missing or invalid field.
inline Demographics demographics_from_json(const Json& j, const Locator& at = {"demographics", 0}) {
  if (!j.is_object()) fail_at(at, "demographics must be an object");
  Demographics d;
  d.specialty = field::enumeration(j, "specialty", at, parse_specialty);
  d.years_in_practice = field::enumeration(j, "years_in_practice", at, parse_practice_years);
  d.region = field::enumeration(j, "region", at, parse_region);
  d.cancer_ops_per_month = field::number(j, "cancer_ops_per_month", at);
  d.staging_laps_per_month = field::number(j, "staging_laps_per_month", at);
  if (d.cancer_ops_per_month < 0.0 || d.staging_laps_per_month < 0.0)
    fail_at(at, "monthly operation counts must be >= 0");
  return d;
}

// ---------------------------------------------------------------------------
// Sessions and responses

struct SurveyResponse {
  std::string session_id;
  std::size_t item_index = 0;  // 0-based position in the session's 20 items
  std::string lesion_id;
  Arm arm = Arm::unlabeled;
  double probability = 0.0;  // respondent's 0-100 rating
  bool biopsy = false;
  std::optional<double> model_probability;  // raw value shown on labeled items
  std::string timestamp;
  friend bool operator==(const SurveyResponse&, const SurveyResponse&) = default;
};

struct SurveySession {
  std::string session_id;
  Demographics demographics;
  SurveyAssignment assignment;
  bool completed = false;
  std::string created;
};

struct SurveySet {
  std::vector<SurveySession> sessions;
  std::vector<SurveyResponse> responses;

  const SurveySession* find_session(const std::string& id) const {
    for (const auto& s : sessions)
      if (s.session_id == id) return &s;
    return nullptr;
  }
};

inline void check_response(const SurveyResponse& r) {
  if (!(r.probability >= 0.0 && r.probability <= 100.0))
    throw DataError("response probability must lie in [0, 100]");
  if (r.model_probability && !(*r.model_probability >= 0.0 && *r.model_probability <= 1.0))
    throw DataError("model probability must lie in [0, 1]");
}

inline Json response_to_json(const SurveyResponse& r) {
  Json j{{"type", "response"},      {"session_id", r.session_id}, {"item_index", r.item_index},
         {"lesion_id", r.lesion_id}, {"arm", to_string(r.arm)},    {"probability", r.probability},
         {"biopsy", r.biopsy},       {"timestamp", r.timestamp}};
  if (r.model_probability) j["model_probability"] = *r.model_probability;
  return j;
}

inline SurveyResponse response_from_json(const Json& j, const Locator& at) {
  SurveyResponse r;
  r.session_id = field::string(j, "session_id", at);
  const auto idx = field::integer(j, "item_index", at);
  if (idx < 0 || idx >= static_cast<std::int64_t>(2 * kItemsPerArm)) fail_at(at, "item_index out of range");
  r.item_index = static_cast<std::size_t>(idx);
  r.lesion_id = field::string(j, "lesion_id", at);
  r.arm = field::enumeration(j, "arm", at, parse_arm);
  r.probability = field::number(j, "probability", at);
  if (r.probability < 0.0 || r.probability > 100.0) fail_at(at, "probability must lie in [0, 100]");
  r.biopsy = field::boolean(j, "biopsy", at);
  if (j.contains("model_probability")) r.model_probability = field::probability(j, "model_probability", at);
  r.timestamp = j.contains("timestamp") ? field::string(j, "timestamp", at) : "";
  return r;
}

inline Json session_to_json(const SurveySession& s) {
  Json items = Json::array();
  for (const auto& it : s.assignment.items) items.push_back(Json{{"lesion_id", it.lesion_id}, {"arm", to_string(it.arm)}});
  return Json{{"type", "session"},
              {"session_id", s.session_id},
              {"respondent_id", s.assignment.respondent_id},
              {"demographics", to_json(s.demographics)},
              {"items", std::move(items)},
              {"completed", s.completed},
              {"created", s.created}};
}

inline SurveySession session_from_json(const Json& j, const Locator& at) {
  SurveySession s;
  s.session_id = field::string(j, "session_id", at);
  s.demographics = demographics_from_json(field::require(j, "demographics", at), at);
  s.assignment.respondent_id = field::string(j, "respondent_id", at);
  for (const auto& it : field::require(j, "items", at))
    s.assignment.items.push_back({field::string(it, "lesion_id", at), field::enumeration(it, "arm", at, parse_arm)});
  s.completed = field::boolean(j, "completed", at);
  s.created = j.contains("created") ? field::string(j, "created", at) : "";
  return s;
}

inline std::string survey_set_text(const SurveySet& set) {
  std::vector<Json> records;
  for (const auto& s : set.sessions) records.push_back(session_to_json(s));
  for (const auto& r : set.responses) records.push_back(response_to_json(r));
  return to_jsonl(make_header("survey_responses"), records);
}

inline void write_survey_set(const SurveySet& set, const std::filesystem::path& path) {
  write_text_atomic(path, survey_set_text(set));
}

inline SurveySet load_survey_set(const std::filesystem::path& path) {
  const JsonlContent content = read_jsonl(path, "survey_responses");
  SurveySet set;
  std::map<std::pair<std::string, std::size_t>, bool> seen;
  for (const auto& [at, j] : content.records) {
    const std::string type = field::string(j, "type", at);
    if (type == "session") {
      set.sessions.push_back(session_from_json(j, at));
    } else if (type == "response") {
      SurveyResponse r = response_from_json(j, at);
      if (!seen.emplace(std::pair{r.session_id, r.item_index}, true).second)
        fail_at(at, "duplicate response for session '" + r.session_id + "' item " + std::to_string(r.item_index));
      set.responses.push_back(std::move(r));
    } else {
      fail_at(at, "unknown record type '" + type + "'");
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Response simulation

// What the analyses need to know about a surveyed lesion.
struct SurveyLesion {
  std::string lesion_id;
  bool metastasis = false;
  double model_probability = 0.0;
};

struct ResponseModel {
  double skill_mean = 0.6, skill_sd = 0.25;          // separation of the respondent's latent rating
  double threshold_mean = 0.4, threshold_sd = 0.12;  // biopsy when own probability >= threshold
  double trust_low = 0.3, trust_high = 0.8;          // weight on the model probability when labeled
};

// Respondent demographics drawn from the published respondent mix.
inline Demographics draw_demographics(Rng& rng) {
  auto pick = [&rng](std::initializer_list<double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.uniform() * total;
    std::size_t i = 0;
    for (double w : weights) {
      if (u < w) return i;
      u -= w;
      ++i;
    }
    return weights.size() - 1;
  };
  Demographics d;
  d.specialty = kSpecialtyNames[pick({52, 26, 15, 11, 7})].first;
  d.years_in_practice = kPracticeYearsNames[pick({23, 17, 33, 38})].first;
  d.region = kRegionNames[pick({45, 31, 17, 12, 0, 6})].first;
  d.cancer_ops_per_month = std::max(0.0, std::round(rng.normal(12.0, 9.0)));
  d.staging_laps_per_month = std::max(0.0, std::round(rng.normal(3.0, 4.0)));
  return d;
}

// Simulates `n_respondents` completed sessions over the lesions, with the
// block-randomized assignment.
inline SurveySet simulate_survey(const std::vector<SurveyLesion>& lesions, std::size_t n_respondents, std::uint64_t seed,
                                 const ResponseModel& model = {}) {
  std::vector<std::string> ids;
  std::map<std::string, const SurveyLesion*> by_id;
  for (const auto& l : lesions) {
    ids.push_back(l.lesion_id);
    by_id[l.lesion_id] = &l;
  }
  SurveyBalancer balancer(ids, derive_seed(seed, 0));
  const boost::math::normal normal;
  SurveySet set;
  for (std::size_t r = 0; r < n_respondents; ++r) {
    Rng rng(derive_seed(seed, 1, r));
    SurveySession s;
    s.session_id = "S" + std::to_string(100000 + r).substr(1);
    s.demographics = draw_demographics(rng);
    s.assignment = balancer.next(s.session_id);
    s.completed = true;
    const double skill = std::max(0.0, rng.normal(model.skill_mean, model.skill_sd));
    const double threshold = std::clamp(rng.normal(model.threshold_mean, model.threshold_sd), 0.05, 0.95);
    const double trust = rng.uniform(model.trust_low, model.trust_high);
    for (std::size_t i = 0; i < s.assignment.items.size(); ++i) {
      const SurveyItem& item = s.assignment.items[i];
      const SurveyLesion& lesion = *by_id.at(item.lesion_id);
      const double own = boost::math::cdf(normal, skill * (lesion.metastasis ? 1.0 : -1.0) + rng.normal());
      SurveyResponse resp;
      resp.session_id = s.session_id;
      resp.item_index = i;
      resp.lesion_id = item.lesion_id;
      resp.arm = item.arm;
      double p = own;
      if (item.arm == Arm::labeled) {
        p = trust * lesion.model_probability + (1.0 - trust) * own;
        resp.model_probability = lesion.model_probability;
      }
      resp.probability = std::round(100.0 * p);
      resp.biopsy = p >= threshold;
      set.responses.push_back(std::move(resp));
    }
    set.sessions.push_back(std::move(s));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Analyses

struct PolicyReport {
  std::string name;
  DecisionConfusion confusion;
  RateSet rates;
};

struct ChiSquareComparison {
  std::string baseline, other, measure;  // measure: accuracy | sensitivity | specificity
  TestResult result;
};

struct AucReport {
  std::string name;
  std::size_t evaluations = 0;
  BootstrapResult auc;
};

struct AucComparison {
  std::string a, b;
  TestResult result;  // statistic = AUC(a) - AUC(b)
};

struct SurveyReport {
  std::size_t sessions = 0, completed_sessions = 0;
  std::size_t evaluations_unlabeled = 0, evaluations_labeled = 0;
  std::vector<std::string> unknown_lesions;  // responses to lesions without truth, ignored
  std::vector<PolicyReport> policies;        // surgeon_alone, surgeon_with_model, combined, model_alone
  std::vector<PolicyDelta> deltas;           // with_model vs alone, combined vs alone
  std::vector<ChiSquareComparison> chi_square;
  std::vector<AucReport> aucs;
  std::vector<AucComparison> auc_tests;
  std::optional<RegressionResult> surgeon_vs_model;  // per-lesion mean unlabeled rating on model probability
  std::vector<std::tuple<std::string, double, double, bool>> surgeon_vs_model_points;  // lesion, model, surgeon mean, metastasis
  std::optional<TestResult> accuracy_by_experience;   // ANOVA over practice-year brackets
  std::optional<RegressionResult> accuracy_vs_cancer_ops, accuracy_vs_staging_laps;
  std::optional<PolicyReport> lesion_majority;        // unlabeled arm, majority of respondents per lesion
  std::vector<std::string> notes;
};

namespace detail {

inline std::vector<std::vector<double>> correctness_table(const DecisionConfusion& a, const DecisionConfusion& b,
                                                          const std::string& measure) {
  auto row = [&](const DecisionConfusion& c) -> std::vector<double> {
    if (measure == "sensitivity") return {static_cast<double>(c.tp), static_cast<double>(c.fn)};
    if (measure == "specificity") return {static_cast<double>(c.tn), static_cast<double>(c.fp)};
    return {static_cast<double>(c.tp + c.tn), static_cast<double>(c.fp + c.fn)};
  };
  return {row(a), row(b)};
}

}  // namespace detail

// Evaluation-level analyses of a survey against lesion truth and model
// probabilities. Bootstrap resampling is by lesion.
inline SurveyReport analyze_survey(const SurveySet& set, const std::vector<SurveyLesion>& lesions,
                                   const BootstrapConfig& cfg, double threshold = 0.5) {
  std::map<std::string, std::size_t> lesion_index;
  for (std::size_t i = 0; i < lesions.size(); ++i) lesion_index[lesions[i].lesion_id] = i;

  SurveyReport rep;
  rep.sessions = set.sessions.size();
  rep.completed_sessions =
      static_cast<std::size_t>(std::count_if(set.sessions.begin(), set.sessions.end(), [](const auto& s) { return s.completed; }));

  struct Eval {
    std::size_t lesion;
    const SurveyResponse* response;
  };
  std::vector<Eval> unlabeled, labeled;
  for (const auto& r : set.responses) {
    auto it = lesion_index.find(r.lesion_id);
    if (it == lesion_index.end()) {
      rep.unknown_lesions.push_back(r.lesion_id);
      continue;
    }
    (r.arm == Arm::unlabeled ? unlabeled : labeled).push_back({it->second, &r});
  }
  std::sort(rep.unknown_lesions.begin(), rep.unknown_lesions.end());
  rep.unknown_lesions.erase(std::unique(rep.unknown_lesions.begin(), rep.unknown_lesions.end()), rep.unknown_lesions.end());
  rep.evaluations_unlabeled = unlabeled.size();
  rep.evaluations_labeled = labeled.size();

  auto decisions = [&](const std::vector<Eval>& evals, auto decide) {
    std::vector<bool> d, y;
    for (const auto& e : evals) {
      d.push_back(decide(e));
      y.push_back(lesions[e.lesion].metastasis);
    }
    return confusion_from_decisions(d, y);
  };
  const DecisionConfusion alone = decisions(unlabeled, [](const Eval& e) { return e.response->biopsy; });
  const DecisionConfusion with_model = decisions(labeled, [](const Eval& e) { return e.response->biopsy; });
  const DecisionConfusion combined = decisions(labeled, [&](const Eval& e) {
    return combined_rule(e.response->biopsy, lesions[e.lesion].model_probability, threshold);
  });
  const DecisionConfusion model_alone =
      decisions(labeled, [&](const Eval& e) { return lesions[e.lesion].model_probability >= threshold; });
  rep.policies = {{"surgeon_alone", alone, rates(alone)},
                  {"surgeon_with_model", with_model, rates(with_model)},
                  {"combined", combined, rates(combined)},
                  {"model_alone", model_alone, rates(model_alone)}};

  // Deltas compare rates across arms of different sizes, so they are formed
  // from per-evaluation rates rather than raw counts.
  auto rate_delta = [](const DecisionConfusion& base, const DecisionConfusion& other) {
    PolicyDelta d;
    const RateSet rb = rates(base), ro = rates(other);
    if (rb.sensitivity && ro.sensitivity) d.sensitivity_change = *ro.sensitivity - *rb.sensitivity;
    if (rb.specificity && ro.specificity && *rb.specificity < 1.0)
      d.unnecessary_biopsy_reduction = fp_reduction_from_specificity(*rb.specificity, *ro.specificity);
    return d;
  };
  rep.deltas = {rate_delta(alone, with_model), rate_delta(alone, combined)};

  for (const auto& [name, other] : {std::pair{"surgeon_with_model", with_model}, std::pair{"combined", combined}})
    for (const std::string measure : {"accuracy", "sensitivity", "specificity"}) {
      try {
        rep.chi_square.push_back(
            {"surgeon_alone", name, measure, chi_square_test(detail::correctness_table(alone, other, measure))});
      } catch (const DataError& e) {
        rep.notes.push_back(std::string("chi-square ") + name + " " + measure + ": " + e.what());
      }
    }

  // AUCs: surgeon ratings per evaluation, model per lesion. Each replicate
  // resamples lesions and recomputes every AUC on the drawn lesions.
  std::vector<std::vector<std::size_t>> unl_by_lesion(lesions.size()), lab_by_lesion(lesions.size());
  for (std::size_t i = 0; i < unlabeled.size(); ++i) unl_by_lesion[unlabeled[i].lesion].push_back(i);
  for (std::size_t i = 0; i < labeled.size(); ++i) lab_by_lesion[labeled[i].lesion].push_back(i);
  auto arm_auc = [&](const std::vector<Eval>& evals, const std::vector<std::vector<std::size_t>>& by_lesion,
                     std::span<const std::size_t> drawn) {
    std::vector<double> s;
    std::vector<bool> y;
    for (auto l : drawn)
      for (auto i : by_lesion[l]) {
        s.push_back(evals[i].response->probability / 100.0);
        y.push_back(lesions[l].metastasis);
      }
    return auc_roc(s, y);
  };
  auto model_auc = [&](std::span<const std::size_t> drawn) {
    std::vector<double> s;
    std::vector<bool> y;
    for (auto l : drawn) {
      s.push_back(lesions[l].model_probability);
      y.push_back(lesions[l].metastasis);
    }
    return auc_roc(s, y);
  };
  std::vector<std::size_t> surveyed;
  for (std::size_t l = 0; l < lesions.size(); ++l)
    if (!unl_by_lesion[l].empty() || !lab_by_lesion[l].empty()) surveyed.push_back(l);
  const Clusters clusters = [&] {
    Clusters c;
    for (auto l : surveyed) c.push_back({l});
    return c;
  }();
  using Stat = std::function<double(std::span<const std::size_t>)>;
  const Stat s_alone = [&](auto d) { return arm_auc(unlabeled, unl_by_lesion, d); };
  const Stat s_with = [&](auto d) { return arm_auc(labeled, lab_by_lesion, d); };
  const Stat s_model = model_auc;
  const std::vector<std::pair<std::string, Stat>> named = {
      {"surgeon_alone", s_alone}, {"model_alone", s_model}, {"surgeon_with_model", s_with}};
  std::map<std::string, bool> defined;
  for (const auto& [name, stat] : named) {
    try {
      AucReport a{name, 0, bootstrap_ci(clusters, stat, cfg)};
      a.evaluations = name == "surgeon_alone" ? unlabeled.size() : name == "surgeon_with_model" ? labeled.size() : surveyed.size();
      rep.aucs.push_back(std::move(a));
      defined[name] = true;
    } catch (const Error& e) {
      rep.notes.push_back("AUC " + name + ": " + e.what());
    }
  }
  for (const auto& [a, b] : {std::pair{"model_alone", "surgeon_alone"}, std::pair{"surgeon_with_model", "surgeon_alone"},
                             std::pair{"surgeon_with_model", "model_alone"}}) {
    if (!defined[a] || !defined[b]) continue;
    const Stat& sa = std::find_if(named.begin(), named.end(), [&](const auto& n) { return n.first == a; })->second;
    const Stat& sb = std::find_if(named.begin(), named.end(), [&](const auto& n) { return n.first == b; })->second;
    try {
      rep.auc_tests.push_back({a, b, paired_bootstrap_test(clusters, [&](auto d) { return sa(d) - sb(d); }, cfg)});
    } catch (const Error& e) {
      rep.notes.push_back(std::string("AUC test ") + a + " vs " + b + ": " + e.what());
    }
  }

  // Per-lesion mean unlabeled rating against the model probability.
  std::vector<double> xs, ys;
  for (std::size_t l = 0; l < lesions.size(); ++l) {
    if (unl_by_lesion[l].empty()) continue;
    double m = 0.0;
    for (auto i : unl_by_lesion[l]) m += unlabeled[i].response->probability;
    m /= static_cast<double>(unl_by_lesion[l].size());
    xs.push_back(lesions[l].model_probability);
    ys.push_back(m / 100.0);
    rep.surgeon_vs_model_points.emplace_back(lesions[l].lesion_id, xs.back(), ys.back(), lesions[l].metastasis);
  }
  try {
    rep.surgeon_vs_model = linear_regression(xs, ys);
  } catch (const DataError& e) {
    rep.notes.push_back(std::string("surgeon vs model regression: ") + e.what());
  }

  // Experience: each respondent's unlabeled-arm accuracy.
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_session;  // correct, total
  for (const auto& e : unlabeled) {
    auto& c = per_session[e.response->session_id];
    c.first += e.response->biopsy == lesions[e.lesion].metastasis ? 1 : 0;
    c.second += 1;
  }
  std::vector<std::vector<double>> by_years(kPracticeYearsNames.size());
  std::vector<double> acc, ops, laps;
  for (const auto& s : set.sessions) {
    auto it = per_session.find(s.session_id);
    if (it == per_session.end() || it->second.second == 0) continue;
    const double a = static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
    by_years[static_cast<std::size_t>(s.demographics.years_in_practice)].push_back(a);
    acc.push_back(a);
    ops.push_back(s.demographics.cancer_ops_per_month);
    laps.push_back(s.demographics.staging_laps_per_month);
  }
  std::erase_if(by_years, [](const auto& g) { return g.empty(); });
  try {
    rep.accuracy_by_experience = one_way_anova(by_years);
  } catch (const DataError& e) {
    rep.notes.push_back(std::string("experience ANOVA: ") + e.what());
  }
  try {
    rep.accuracy_vs_cancer_ops = linear_regression(ops, acc);
  } catch (const DataError& e) {
    rep.notes.push_back(std::string("accuracy vs cancer operations: ") + e.what());
  }
  try {
    rep.accuracy_vs_staging_laps = linear_regression(laps, acc);
  } catch (const DataError& e) {
    rep.notes.push_back(std::string("accuracy vs staging laparoscopies: ") + e.what());
  }

  // Lesion-level view: majority of unlabeled decisions per lesion (ties biopsy).
  std::vector<bool> maj, truth;
  for (std::size_t l = 0; l < lesions.size(); ++l) {
    if (unl_by_lesion[l].empty()) continue;
    std::size_t yes = 0;
    for (auto i : unl_by_lesion[l]) yes += unlabeled[i].response->biopsy ? 1 : 0;
    maj.push_back(2 * yes >= unl_by_lesion[l].size());
    truth.push_back(lesions[l].metastasis);
  }
  if (!maj.empty()) {
    const auto cm = confusion_from_decisions(maj, truth);
    rep.lesion_majority = PolicyReport{"surgeon_alone_lesion_majority", cm, rates(cm)};
  }
  return rep;
}

inline Json to_json(const PolicyReport& p) {
  return Json{{"policy", p.name}, {"confusion", to_json(p.confusion)}, {"rates", to_json(p.rates)}};
}

inline Json to_json(const SurveyReport& r, const BootstrapConfig& cfg) {
  Json j;
  j["sessions"] = r.sessions;
  j["completed_sessions"] = r.completed_sessions;
  j["evaluations"] = {{"unlabeled", r.evaluations_unlabeled}, {"labeled", r.evaluations_labeled}};
  j["unknown_lesions"] = r.unknown_lesions;
  j["policies"] = Json::array();
  for (const auto& p : r.policies) j["policies"].push_back(to_json(p));
  j["deltas"] = {{"surgeon_with_model_vs_alone", to_json(r.deltas.at(0))},
                 {"combined_vs_alone", to_json(r.deltas.at(1))}};
  j["chi_square"] = Json::array();
  for (const auto& c : r.chi_square) {
    Json t = to_json(c.result);
    t["baseline"] = c.baseline;
    t["other"] = c.other;
    t["measure"] = c.measure;
    j["chi_square"].push_back(std::move(t));
  }
  j["auc"] = Json::array();
  for (const auto& a : r.aucs) {
    Json t = to_json(a.auc, cfg.alpha);
    t["name"] = a.name;
    t["evaluations"] = a.evaluations;
    j["auc"].push_back(std::move(t));
  }
  j["auc_tests"] = Json::array();
  for (const auto& a : r.auc_tests) {
    Json t = to_json(a.result);
    t["a"] = a.a;
    t["b"] = a.b;
    j["auc_tests"].push_back(std::move(t));
  }
  if (r.surgeon_vs_model) j["surgeon_vs_model_regression"] = to_json(*r.surgeon_vs_model);
  if (r.accuracy_by_experience) j["accuracy_by_experience_anova"] = to_json(*r.accuracy_by_experience);
  if (r.accuracy_vs_cancer_ops) j["accuracy_vs_cancer_ops_regression"] = to_json(*r.accuracy_vs_cancer_ops);
  if (r.accuracy_vs_staging_laps) j["accuracy_vs_staging_laps_regression"] = to_json(*r.accuracy_vs_staging_laps);
  if (r.lesion_majority) j["lesion_majority"] = to_json(*r.lesion_majority);
  j["notes"] = r.notes;
  return j;
}

}  // namespace stagelab
