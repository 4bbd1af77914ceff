#pragma once

// Leakage-safe dataset splitting and block-randomized survey assignment.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "stagelab/core.hpp"
#include "stagelab/error.hpp"
#include "stagelab/jsonl.hpp"
#include "stagelab/rng.hpp"

namespace stagelab {

enum class SplitLevel { patient, lesion };

inline std::string_view to_string(SplitLevel l) { return l == SplitLevel::patient ? "patient" : "lesion"; }

struct SplitPlan {
  int trial_index = 0;
  SplitLevel level = SplitLevel::patient;
  std::uint64_t seed = 0;
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

// Splits `total` into integer parts proportional to `weights` using the
// largest-remainder rule; ties go to the earlier part.
template <std::size_t N>
std::array<std::size_t, N> largest_remainder(std::size_t total, const std::array<double, N>& weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::array<std::size_t, N> counts{};
  std::array<double, N> remainders{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const double quota = static_cast<double>(total) * weights[i] / sum;
    counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    remainders[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, N> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % N]];
  return counts;
}

// Fractions of patients in each partition; defaults reproduce 94 / 11 / 27 of
// 132 (a 105-patient training pool with 11 held out for validation).
struct PatientSplitFractions {
  double train = 94.0;
  double validation = 11.0;
  double test = 27.0;
};

inline std::vector<SplitPlan> patient_level_splits(const std::vector<std::string>& patient_ids, int n_trials,
                                                   std::uint64_t seed, PatientSplitFractions fractions = {}) {
  if (n_trials < 1) throw UsageError("n_trials must be >= 1");
  if (fractions.train <= 0 || fractions.validation < 0 || fractions.test <= 0)
    throw UsageError("split fractions must be positive");
  const auto counts = largest_remainder<3>(patient_ids.size(), {fractions.train, fractions.validation, fractions.test});
  if (counts[0] == 0 || counts[2] == 0 || (fractions.validation > 0 && counts[1] == 0))
    throw DataError("too few patients (" + std::to_string(patient_ids.size()) +
                    ") to fill every partition of the requested split");
  std::unordered_set<std::string> unique(patient_ids.begin(), patient_ids.end());
  if (unique.size() != patient_ids.size()) throw DataError("duplicate patient ids passed to splitter");

  std::vector<SplitPlan> plans;
  for (int t = 0; t < n_trials; ++t) {
    const std::uint64_t trial_seed = derive_seed(seed, static_cast<std::uint64_t>(t));
    std::vector<std::string> ids = patient_ids;
    Rng rng(trial_seed);
    rng.shuffle(ids);
    SplitPlan plan{t, SplitLevel::patient, trial_seed, {}, {}, {}};
    plan.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(counts[0]));
    plan.validation.assign(ids.begin() + static_cast<std::ptrdiff_t>(counts[0]),
                           ids.begin() + static_cast<std::ptrdiff_t>(counts[0] + counts[1]));
    plan.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(counts[0] + counts[1]), ids.end());
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.validation.begin(), plan.validation.end());
    std::sort(plan.test.begin(), plan.test.end());
    plans.push_back(std::move(plan));
  }
  return plans;
}

inline std::vector<SplitPlan> patient_level_splits(const DatasetBundle& bundle, int n_trials, std::uint64_t seed,
                                                   PatientSplitFractions fractions = {}) {
  return patient_level_splits(bundle.patient_ids(), n_trials, seed, fractions);
}

// k folds over lesion ids; fold sizes differ by at most one and each lesion is
// tested exactly once. A lesion's patches follow its id, so they never straddle.
inline std::vector<SplitPlan> lesion_kfold(const std::vector<std::string>& lesion_ids, int k, std::uint64_t seed) {
  if (k < 2) throw UsageError("k must be >= 2");
  if (static_cast<std::size_t>(k) > lesion_ids.size())
    throw DataError("k = " + std::to_string(k) + " exceeds the number of lesions (" +
                    std::to_string(lesion_ids.size()) + ")");
  std::vector<std::string> ids = lesion_ids;
  Rng rng(seed);
  rng.shuffle(ids);
  const std::size_t n = ids.size();
  const std::size_t base = n / static_cast<std::size_t>(k), extra = n % static_cast<std::size_t>(k);
  std::vector<SplitPlan> plans;
  std::size_t start = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    SplitPlan plan{f, SplitLevel::lesion, seed, {}, {}, {}};
    plan.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(start),
                     ids.begin() + static_cast<std::ptrdiff_t>(start + size));
    plan.train.insert(plan.train.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(start));
    plan.train.insert(plan.train.end(), ids.begin() + static_cast<std::ptrdiff_t>(start + size), ids.end());
    std::sort(plan.train.begin(), plan.train.end());
    std::sort(plan.test.begin(), plan.test.end());
    plans.push_back(std::move(plan));
    start += size;
  }
  return plans;
}

// Label-stratified variant: lesions are shuffled, grouped by label and dealt
// round-robin, so fold sizes still differ by at most one and every fold's
// class balance is within one lesion of the others.
inline std::vector<SplitPlan> stratified_lesion_kfold(const std::vector<std::string>& lesion_ids,
                                                      const std::vector<bool>& labels, int k, std::uint64_t seed) {
  if (labels.size() != lesion_ids.size()) throw DataError("one label per lesion is required");
  if (k < 2) throw UsageError("k must be >= 2");
  if (static_cast<std::size_t>(k) > lesion_ids.size())
    throw DataError("k = " + std::to_string(k) + " exceeds the number of lesions (" +
                    std::to_string(lesion_ids.size()) + ")");
  std::vector<std::size_t> order(lesion_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::stable_partition(order.begin(), order.end(), [&](std::size_t i) { return labels[i]; });
  std::vector<SplitPlan> plans;
  for (int f = 0; f < k; ++f) plans.push_back(SplitPlan{f, SplitLevel::lesion, seed, {}, {}, {}});
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto fold = pos % static_cast<std::size_t>(k);
    for (std::size_t f = 0; f < plans.size(); ++f)
      (f == fold ? plans[f].test : plans[f].train).push_back(lesion_ids[order[pos]]);
  }
  for (auto& p : plans) {
    std::sort(p.train.begin(), p.train.end());
    std::sort(p.test.begin(), p.test.end());
  }
  return plans;
}

inline constexpr int kDistinctValidationRetryCap = 1000;

// n (sub-train, validation) pairs whose validation sets are pairwise distinct.
// Stored as SplitPlans with an empty test set.
inline std::vector<SplitPlan> random_subsplits(const std::vector<std::string>& training_ids, int n,
                                               double validation_fraction, std::uint64_t seed) {
  if (n < 1) throw UsageError("number of subsplits must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw UsageError("validation_fraction must lie in (0, 1)");
  const std::size_t total = training_ids.size();
  const auto val_size = static_cast<std::size_t>(std::lround(validation_fraction * static_cast<double>(total)));
  if (val_size < 1 || val_size >= total)
    throw DataError("training set of " + std::to_string(total) + " ids is too small for validation fraction " +
                    Json(validation_fraction).dump());

  std::set<std::vector<std::string>> seen;
  std::vector<SplitPlan> plans;
  Rng rng(seed);
  for (int s = 0; s < n; ++s) {
    bool accepted = false;
    for (int attempt = 0; attempt < kDistinctValidationRetryCap && !accepted; ++attempt) {
      std::vector<std::string> ids = training_ids;
      rng.shuffle(ids);
      std::vector<std::string> validation(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(val_size));
      std::sort(validation.begin(), validation.end());
      if (!seen.insert(validation).second) continue;
      std::vector<std::string> train(ids.begin() + static_cast<std::ptrdiff_t>(val_size), ids.end());
      std::sort(train.begin(), train.end());
      plans.push_back({s, SplitLevel::lesion, seed, std::move(train), std::move(validation), {}});
      accepted = true;
    }
    if (!accepted)
      throw DataError("could not draw " + std::to_string(n) + " distinct validation sets from " +
                      std::to_string(total) + " ids");
  }
  return plans;
}

// ---------------------------------------------------------------------------
// Split files

inline Json split_to_json(const SplitPlan& p) {
  return Json{{"type", "split"},       {"trial_index", p.trial_index}, {"level", to_string(p.level)},
              {"seed", p.seed},        {"train", p.train},             {"validation", p.validation},
              {"test", p.test}};
}

inline void write_splits(const std::vector<SplitPlan>& plans, const std::filesystem::path& path) {
  std::vector<Json> records;
  for (const auto& p : plans) records.push_back(split_to_json(p));
  write_jsonl(path, make_header("splits"), records);
}

inline std::vector<SplitPlan> load_splits(const std::filesystem::path& path) {
  const JsonlContent content = read_jsonl(path, "splits");
  std::vector<SplitPlan> plans;
  for (const auto& [at, j] : content.records) {
    SplitPlan p;
    p.trial_index = static_cast<int>(field::integer(j, "trial_index", at));
    const auto level = field::string(j, "level", at);
    if (level != "patient" && level != "lesion") fail_at(at, "unknown split level '" + level + "'");
    p.level = level == "patient" ? SplitLevel::patient : SplitLevel::lesion;
    const Json& seed = field::require(j, "seed", at);
    if (!seed.is_number_unsigned()) fail_at(at, "seed must be an unsigned integer");
    p.seed = seed.get<std::uint64_t>();
    p.train = field::require(j, "train", at).get<std::vector<std::string>>();
    p.validation = field::require(j, "validation", at).get<std::vector<std::string>>();
    p.test = field::require(j, "test", at).get<std::vector<std::string>>();
    plans.push_back(std::move(p));
  }
  return plans;
}

// ---------------------------------------------------------------------------
// Survey block randomization

inline constexpr std::size_t kItemsPerArm = 10;

enum class Arm { unlabeled, labeled };

inline std::string_view to_string(Arm a) { return a == Arm::unlabeled ? "unlabeled" : "labeled"; }
inline std::optional<Arm> parse_arm(std::string_view s) {
  if (s == "unlabeled") return Arm::unlabeled;
  if (s == "labeled") return Arm::labeled;
  return std::nullopt;
}

struct SurveyItem {
  std::string lesion_id;
  Arm arm = Arm::unlabeled;
  friend bool operator==(const SurveyItem&, const SurveyItem&) = default;
};

// 10 unlabeled items followed by 10 labeled items, all lesions distinct.
struct SurveyAssignment {
  std::string respondent_id;
  std::vector<SurveyItem> items;
  friend bool operator==(const SurveyAssignment&, const SurveyAssignment&) = default;
};

// Streams assignments so per-arm exposure stays balanced (max - min <= 1)
// after every respondent.
//
// Both arms consume one stream of permuted blocks, each block a random
// permutation of all lesions, ten positions per respondent. The labeled arm
// reads every block rotated by half its length, so the two windows of one
// respondent never overlap inside a block. Where a window straddles two
// blocks, the next block is drawn so that its leading positions avoid the
// lesions the other arm took from the tail of the previous block.
//
// The whole state is (lesions, seed, respondents served); blocks are
// regenerated from derived seeds, so persisting the count survives restarts.
class SurveyBalancer {
 public:
  SurveyBalancer(std::vector<std::string> lesion_ids, std::uint64_t seed, std::size_t already_assigned = 0)
      : lesions_(std::move(lesion_ids)), seed_(seed) {
    if (lesions_.size() < 2 * kItemsPerArm)
      throw DataError("survey needs at least " + std::to_string(2 * kItemsPerArm) + " lesions, got " +
                      std::to_string(lesions_.size()));
    std::unordered_set<std::string> unique(lesions_.begin(), lesions_.end());
    if (unique.size() != lesions_.size()) throw DataError("duplicate lesion ids in survey pool");
    half_ = lesions_.size() / 2;
    for (std::size_t i = 0; i < already_assigned; ++i) next(std::string());
  }

  std::size_t assigned() const noexcept { return assigned_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<std::string>& lesions() const noexcept { return lesions_; }

  SurveyAssignment next(std::string respondent_id) {
    const std::size_t start = assigned_ * kItemsPerArm;
    SurveyAssignment a{std::move(respondent_id), {}};
    for (std::size_t k = 0; k < kItemsPerArm; ++k) a.items.push_back({unlabeled_at(start + k), Arm::unlabeled});
    for (std::size_t k = 0; k < kItemsPerArm; ++k) a.items.push_back({labeled_at(start + k), Arm::labeled});
    ++assigned_;
    // Blocks wholly behind both windows are no longer needed.
    const std::size_t live = (assigned_ * kItemsPerArm) / lesions_.size();
    while (first_block_ + 1 < live && !blocks_.empty()) {
      blocks_.erase(blocks_.begin());
      ++first_block_;
    }
    return a;
  }

 private:
  const std::vector<std::string>& block(std::size_t j) {
    while (first_block_ + blocks_.size() <= j) build_block(first_block_ + blocks_.size());
    return blocks_[j - first_block_];
  }

  const std::string& unlabeled_at(std::size_t pos) {
    return block(pos / lesions_.size())[pos % lesions_.size()];
  }
  const std::string& labeled_at(std::size_t pos) {
    const std::size_t n = lesions_.size();
    return block(pos / n)[(pos % n + half_) % n];
  }

  void build_block(std::size_t j) {
    const std::size_t n = lesions_.size();
    Rng rng(derive_seed(seed_, j));
    std::vector<std::string> perm = lesions_;
    rng.shuffle(perm);
    const std::size_t boundary = j * n;
    const std::size_t tail = boundary % kItemsPerArm;  // positions of the straddling window before the boundary
    if (j == 0 || tail == 0) {
      blocks_.push_back(std::move(perm));
      return;
    }
    const std::size_t lead = kItemsPerArm - tail;  // positions after the boundary
    const auto& prev = blocks_.back();
    // Lesions already shown to the straddling respondent (either arm).
    std::unordered_set<std::string> taken;
    for (std::size_t p = n - tail; p < n; ++p) {
      taken.insert(prev[p]);
      taken.insert(prev[(p + half_) % n]);
    }
    // Positions [0, lead) feed the unlabeled arm; [half, half + lead) the labeled arm.
    std::vector<std::string> front, middle, rest;
    std::unordered_set<std::string> used;
    for (const auto& id : perm)
      if (front.size() < lead && !taken.contains(id)) {
        front.push_back(id);
        used.insert(id);
      }
    for (const auto& id : perm)
      if (middle.size() < lead && !used.contains(id) && !taken.contains(id)) {
        middle.push_back(id);
        used.insert(id);
      }
    for (const auto& id : perm)
      if (!used.contains(id)) rest.push_back(id);
    std::vector<std::string> block(n);
    std::size_t r = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p < lead)
        block[p] = front[p];
      else if (p >= half_ && p < half_ + lead)
        block[p] = middle[p - half_];
      else
        block[p] = rest[r++];
    }
    blocks_.push_back(std::move(block));
  }

  std::vector<std::string> lesions_;
  std::uint64_t seed_;
  std::size_t half_ = 0;
  std::size_t assigned_ = 0;
  std::size_t first_block_ = 0;
  std::vector<std::vector<std::string>> blocks_;
};

inline std::vector<SurveyAssignment> block_randomize_survey(const std::vector<std::string>& lesion_ids,
                                                            const std::vector<std::string>& respondents,
                                                            std::uint64_t seed) {
  SurveyBalancer balancer(lesion_ids, seed);
  std::vector<SurveyAssignment> out;
  out.reserve(respondents.size());
  for (const auto& r : respondents) out.push_back(balancer.next(r));
  return out;
}

// Per-arm exposure counts over every lesion in `lesion_ids`.
struct ExposureCounts {
  std::map<std::string, std::size_t> unlabeled;
  std::map<std::string, std::size_t> labeled;

  static std::size_t spread(const std::map<std::string, std::size_t>& m) {
    if (m.empty()) return 0;
    auto [lo, hi] = std::minmax_element(m.begin(), m.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; });
    return hi->second - lo->second;
  }
};

inline ExposureCounts exposure_counts(const std::vector<std::string>& lesion_ids,
                                      const std::vector<SurveyAssignment>& assignments) {
  ExposureCounts c;
  for (const auto& id : lesion_ids) c.unlabeled[id] = c.labeled[id] = 0;
  for (const auto& a : assignments)
    for (const auto& item : a.items) ++(item.arm == Arm::unlabeled ? c.unlabeled : c.labeled)[item.lesion_id];
  return c;
}

inline Json assignment_to_json(const SurveyAssignment& a) {
  Json items = Json::array();
  for (const auto& i : a.items) items.push_back(Json{{"lesion_id", i.lesion_id}, {"arm", to_string(i.arm)}});
  return Json{{"type", "assignment"}, {"respondent_id", a.respondent_id}, {"items", std::move(items)}};
}

inline SurveyAssignment assignment_from_json(const Json& j, const Locator& at) {
  SurveyAssignment a;
  a.respondent_id = field::string(j, "respondent_id", at);
  const Json& items = field::require(j, "items", at);
  if (!items.is_array()) fail_at(at, "items must be an array");
  for (const auto& i : items)
    a.items.push_back({field::string(i, "lesion_id", at), field::enumeration(i, "arm", at, parse_arm)});
  return a;
}

inline void write_assignments(const std::vector<SurveyAssignment>& assignments, const std::filesystem::path& path,
                              std::uint64_t seed) {
  std::vector<Json> records;
  for (const auto& a : assignments) records.push_back(assignment_to_json(a));
  Json header = make_header("assignments");
  header["seed"] = seed;
  write_jsonl(path, header, records);
}

inline std::vector<SurveyAssignment> load_assignments(const std::filesystem::path& path) {
  const JsonlContent content = read_jsonl(path, "assignments");
  std::vector<SurveyAssignment> out;
  for (const auto& [at, j] : content.records) out.push_back(assignment_from_json(j, at));
  return out;
}

}  // namespace stagelab
