#pragma once

// Subcommand implementations behind the stagelab executable. Each takes
// resolved options, writes its artifacts under `out` and returns a JSON
// summary that the executable prints.

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stagelab/classify.hpp"
#include "stagelab/config.hpp"
#include "stagelab/decision.hpp"
#include "stagelab/detect_eval.hpp"
#include "stagelab/ingest.hpp"
#include "stagelab/parallel.hpp"
#include "stagelab/pipeline.hpp"
#include "stagelab/plot.hpp"
#include "stagelab/roc.hpp"
#include "stagelab/splitters.hpp"
#include "stagelab/stats.hpp"
#include "stagelab/survey.hpp"
#include "stagelab/survival.hpp"
#include "stagelab/synthetic.hpp"

namespace stagelab::cli {

namespace fs = std::filesystem;

inline constexpr const char* kSeedVariable = "STAGELAB_SEED";

inline std::uint64_t parse_seed(std::string_view text, std::string_view source) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw UsageError(std::string(source) + " is not an unsigned integer: '" + std::string(text) + "'");
  return v;
}

// --seed, else STAGELAB_SEED, else `fallback`, else a usage error.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> fallback = {}) {
  if (flag) return *flag;
  if (const char* env = std::getenv(kSeedVariable); env && *env) return parse_seed(env, kSeedVariable);
  if (fallback) return *fallback;
  throw UsageError(std::string("a seed is required: pass --seed or set ") + kSeedVariable);
}

inline void write_json(const fs::path& path, const Json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

// Loads a bundle and refuses one with validation errors.
inline DatasetBundle load_valid_bundle(const fs::path& path) {
  DatasetBundle bundle = load_bundle(path);
  const ValidationReport report = validate_bundle(bundle);
  if (!report.valid()) {
    std::string msg = path.string() + ": " + std::to_string(report.error_count()) + " validation error(s)";
    for (const auto& f : report.findings)
      if (f.severity == Severity::error) {
        msg += "; first: " + f.record_id + ": " + f.message;
        break;
      }
    throw DataError(msg);
  }
  return bundle;
}

inline fs::path default_image_root(const fs::path& bundle_path) {
  return bundle_path.has_parent_path() ? bundle_path.parent_path() : fs::path(".");
}

// Score records of one scorer; the scorer may be omitted when the file holds
// exactly one.
inline std::vector<ScoreRecord> select_scores(const PredictionSet& set, const std::string& scorer) {
  const auto ids = set.scorer_ids();
  if (ids.empty()) throw DataError("predictions contain no score records");
  std::string chosen = scorer;
  if (chosen.empty()) {
    if (ids.size() > 1) {
      std::string list;
      for (const auto& id : ids) list += (list.empty() ? "" : ", ") + id;
      throw UsageError("predictions hold several scorers (" + list + "); choose one with --scorer");
    }
    chosen = ids.front();
  } else if (std::find(ids.begin(), ids.end(), chosen) == ids.end()) {
    throw DataError("no scores from scorer '" + chosen + "'");
  }
  std::vector<ScoreRecord> out;
  for (const auto& s : set.scores)
    if (s.scorer_id == chosen) out.push_back(s);
  return out;
}

inline std::vector<ScoreRecord> load_scores(const fs::path& path, const DatasetBundle& bundle, const std::string& scorer) {
  return select_scores(load_predictions(path, bundle), scorer);
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  fs::path out;
};

inline Json run_synth(const SynthOptions& o) {
  SyntheticConfig cfg = o.config ? synthetic_config_from(KeyValueConfig::load(*o.config)) : SyntheticConfig{};
  cfg.seed = resolve_seed(o.seed, cfg.seed);
  const SyntheticCohort cohort = generate_synthetic_cohort(cfg);
  write_cohort(cohort, o.out);
  std::size_t biopsied = 0, metastases = 0;
  for (const auto& l : cohort.bundle.lesions) {
    biopsied += l.biopsied ? 1 : 0;
    metastases += l.is_metastasis() ? 1 : 0;
  }
  return Json{{"out", o.out.string()},
              {"seed", *cfg.seed},
              {"patients", cohort.bundle.patients.size()},
              {"lesions", cohort.bundle.lesions.size()},
              {"biopsied_lesions", biopsied},
              {"metastases", metastases},
              {"images", cohort.bundle.images.size()}};
}

// ---------------------------------------------------------------------------
// validate

struct ValidateOptions {
  fs::path bundle;
  std::optional<fs::path> images;  // also decode every image under this root
};

inline Json run_validate(const ValidateOptions& o) {
  const DatasetBundle bundle = load_bundle(o.bundle);
  ValidationOptions opts;
  opts.image_root = o.images;
  const ValidationReport report = validate_bundle(bundle, opts);
  Json findings = Json::array();
  for (const auto& f : report.findings)
    findings.push_back(Json{{"severity", f.severity == Severity::error ? "error" : "warning"},
                            {"record_id", f.record_id},
                            {"message", f.message}});
  return Json{{"valid", report.valid()},
              {"errors", report.error_count()},
              {"warnings", report.warning_count()},
              {"patients", bundle.patients.size()},
              {"lesions", bundle.lesions.size()},
              {"images", bundle.images.size()},
              {"findings", std::move(findings)}};
}

// ---------------------------------------------------------------------------
// split

enum class SplitKind { patient, kfold, subsplits };

struct SplitOptions {
  SplitKind kind = SplitKind::patient;
  fs::path bundle;
  std::optional<std::uint64_t> seed;
  fs::path out;
  int trials = 10;     // patient
  int folds = 10;      // kfold
  bool stratified = false;
  int n = kDefaultCandidates;  // subsplits
  double validation_fraction = 0.15;
};

inline Json run_split(const SplitOptions& o) {
  const DatasetBundle bundle = load_valid_bundle(o.bundle);
  const std::uint64_t seed = resolve_seed(o.seed);
  std::vector<std::string> lesions;
  std::vector<bool> labels;
  for (const LesionRecord* l : bundle.eligible_lesions()) {
    lesions.push_back(l->lesion_id);
    labels.push_back(l->is_metastasis());
  }
  std::vector<SplitPlan> plans;
  switch (o.kind) {
    case SplitKind::patient: plans = patient_level_splits(bundle, o.trials, seed); break;
    case SplitKind::kfold:
      plans = o.stratified ? stratified_lesion_kfold(lesions, labels, o.folds, seed) : lesion_kfold(lesions, o.folds, seed);
      break;
    case SplitKind::subsplits: plans = random_subsplits(lesions, o.n, o.validation_fraction, seed); break;
  }
  write_splits(plans, o.out);
  Json sizes = Json::array();
  for (const auto& p : plans)
    sizes.push_back(Json{{"trial_index", p.trial_index},
                         {"train", p.train.size()},
                         {"validation", p.validation.size()},
                         {"test", p.test.size()}});
  return Json{{"out", o.out.string()}, {"seed", seed}, {"plans", plans.size()}, {"sizes", std::move(sizes)}};
}

// ---------------------------------------------------------------------------
// eval-detect

struct DetectOptions {
  fs::path bundle;
  std::optional<fs::path> predictions;
  std::optional<fs::path> perfect_from;  // sidecar: every true box at confidence 1
  fs::path out;
  double iou_threshold = 0.5;
  double confidence_threshold = 0.3;
  HitRule hit_rule = HitRule::at_least;
  PRIntegration integration = PRIntegration::step;
  std::optional<int> bootstrap;  // replicates over images
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

inline Json run_eval_detect(const DetectOptions& o) {
  if (o.predictions.has_value() == o.perfect_from.has_value())
    throw UsageError("give exactly one of --preds and --perfect-from");
  if (!(o.iou_threshold > 0.0 && o.iou_threshold <= 1.0)) throw UsageError("--iou-threshold must lie in (0, 1]");
  if (!(o.confidence_threshold >= 0.0 && o.confidence_threshold <= 1.0))
    throw UsageError("--conf-threshold must lie in [0, 1]");
  const DatasetBundle bundle = load_valid_bundle(o.bundle);
  PredictionSet preds;
  if (o.predictions) {
    preds = load_predictions(*o.predictions, bundle);
    if (preds.detections.empty()) throw DataError(o.predictions->string() + " holds no detection records");
  } else {
    preds = perfect_detections(load_sidecar(*o.perfect_from));
    check_prediction_ids(preds, bundle);
  }
  const MatchOptions match{o.iou_threshold, o.hit_rule};
  const auto matches = match_by_image(preds.detections, ground_truth_boxes(bundle), match);
  const PRCurve curve = pr_curve(matches, o.integration);
  const OperatingPoint op = operating_point(curve, o.confidence_threshold);

  DetectionConfusion cm;
  cm.total_ground_truth = curve.total_ground_truth;
  for (const auto& im : matches)
    for (const auto& h : im.hits) {
      const bool above = h.confidence >= o.confidence_threshold;
      ++(h.hit ? (above ? cm.tp : cm.fn) : (above ? cm.fp : cm.tn));
    }
  cm.missed_ground_truth = cm.total_ground_truth - cm.tp;

  CsvTable csv({"threshold", "precision", "recall"});
  Series series{"detector", {}, true};
  for (const auto& p : curve.points) {
    csv.row(p.threshold, p.precision, p.recall);
    series.points.emplace_back(p.recall, p.precision);
  }
  fs::create_directories(o.out);
  write_text_atomic(o.out / "pr_curve.csv", csv.str());
  write_text_atomic(o.out / "pr_curve.svg",
                    svg_line_chart({series}, {"Precision-recall", "Recall", "Precision", 480, 360,
                                              std::pair{0.0, 1.0}, std::pair{0.0, 1.0}}));

  Json report{{"auc_pr", curve.auc_pr},
              {"integration", o.integration == PRIntegration::step ? "step" : "trapezoid"},
              {"iou_threshold", o.iou_threshold},
              {"hit_rule", o.hit_rule == HitRule::at_least ? "at_least" : "greater_than"},
              {"confidence_threshold", o.confidence_threshold},
              {"operating_point", {{"precision", optional_json(op.precision)}, {"recall", op.recall}}},
              {"confusion",
               {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}, {"missed_ground_truth", cm.missed_ground_truth}}},
              {"images", matches.size()},
              {"predictions", preds.detections.size()},
              {"ground_truth", curve.total_ground_truth}};
  if (o.bootstrap) {
    BootstrapConfig cfg;
    cfg.n_replicates = *o.bootstrap;
    cfg.seed = resolve_seed(o.seed);
    cfg.threads = o.threads;
    const auto boot = bootstrap_ci(
        matches.size(),
        [&](std::span<const std::size_t> idx) {
          std::vector<ImageMatch> drawn;
          std::size_t gt = 0;
          for (auto i : idx) {
            drawn.push_back(matches[i]);
            gt += matches[i].ground_truth_count;
          }
          if (gt == 0) throw NumericError("replicate without ground truth");
          return pr_curve(drawn, o.integration).auc_pr;
        },
        cfg);
    report["auc_pr_bootstrap"] = to_json(boot, cfg.alpha);
    report["auc_pr_bootstrap"]["unit"] = "image";
  }
  write_json(o.out / "detect_report.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// eval-classify

struct ClassifyOptions {
  fs::path bundle;
  std::optional<fs::path> scores;
  std::string scorer;
  bool train_toy = false;
  std::optional<fs::path> images;
  int folds = 10;
  std::optional<std::uint64_t> seed;
  fs::path out;
  int replicates = 2000;
  ResamplingUnit unit = ResamplingUnit::lesion;
  unsigned threads = 0;
  EnsembleOptions ensemble;
};

namespace detail {

struct LevelEval {
  std::vector<double> scores;
  std::vector<bool> labels;
  Clusters clusters;
};

inline Json evaluate_level(const LevelEval& e, const BootstrapConfig& cfg) {
  const auto [pos, neg] = class_counts(e.labels);
  Json j{{"n", e.scores.size()}, {"positives", pos}, {"negatives", neg},
         {"accuracy_at_0_5", accuracy_at(e.scores, e.labels, kDecisionThreshold)}};
  const BootstrapResult boot = bootstrap_auc(e.scores, e.labels, cfg, e.clusters);
  j["auc_roc"] = boot.point;
  j["auc_roc_bootstrap"] = to_json(boot, cfg.alpha);
  return j;
}

}  // namespace detail

// AUC and accuracy at patch and lesion level for scores on eligible lesions.
inline Json evaluate_classification(const DatasetBundle& bundle, const std::vector<ScoreRecord>& scores,
                                    const BootstrapConfig& cfg, const fs::path& out) {
  std::map<std::string, const LesionRecord*> eligible;
  for (const LesionRecord* l : bundle.eligible_lesions()) eligible[l->lesion_id] = l;
  auto cluster_key = [&](const LesionRecord& l) { return cfg.unit == ResamplingUnit::patient ? l.patient_id : l.lesion_id; };

  detail::LevelEval patch, lesion;
  std::map<std::string, std::size_t> patch_cluster, lesion_cluster;
  std::size_t ignored = 0;
  for (const auto& s : scores) {
    auto it = eligible.find(s.lesion_id);
    if (it == eligible.end()) {
      ++ignored;
      continue;
    }
    const auto [c, fresh] = patch_cluster.emplace(cluster_key(*it->second), patch.clusters.size());
    if (fresh) patch.clusters.emplace_back();
    patch.clusters[c->second].push_back(patch.scores.size());
    patch.scores.push_back(s.probability);
    patch.labels.push_back(it->second->is_metastasis());
  }
  if (patch.scores.empty()) throw DataError("no scores for classification-eligible lesions");
  for (const auto& [id, p] : lesion_probabilities(scores)) {
    auto it = eligible.find(id);
    if (it == eligible.end()) continue;
    const auto [c, fresh] = lesion_cluster.emplace(cluster_key(*it->second), lesion.clusters.size());
    if (fresh) lesion.clusters.emplace_back();
    lesion.clusters[c->second].push_back(lesion.scores.size());
    lesion.scores.push_back(p);
    lesion.labels.push_back(it->second->is_metastasis());
  }

  Json report{{"ignored_scores_without_pathology", ignored}, {"resampling_unit", to_string(cfg.unit)}};
  report["patch"] = detail::evaluate_level(patch, cfg);
  report["lesion"] = detail::evaluate_level(lesion, cfg);

  CsvTable csv({"level", "threshold", "fpr", "tpr"});
  std::vector<Series> series;
  for (const auto& [name, level] : {std::pair{"patch", &patch}, std::pair{"lesion", &lesion}}) {
    const ROCCurve roc = roc_curve(level->scores, level->labels);
    Series s{name, {}, false};
    for (const auto& p : roc.points) {
      csv.row(name, p.threshold, p.fpr, p.tpr);
      s.points.emplace_back(p.fpr, p.tpr);
    }
    series.push_back(std::move(s));
  }
  fs::create_directories(out);
  write_text_atomic(out / "roc_curve.csv", csv.str());
  write_text_atomic(out / "roc_curve.svg", svg_line_chart(series, {"ROC", "False positive rate", "True positive rate", 480,
                                                                    360, std::pair{0.0, 1.0}, std::pair{0.0, 1.0}}));
  return report;
}

inline Json run_eval_classify(const ClassifyOptions& o) {
  if (o.scores.has_value() == o.train_toy) throw UsageError("give exactly one of --scores and --train-toy");
  const DatasetBundle bundle = load_valid_bundle(o.bundle);
  const std::uint64_t seed = resolve_seed(o.seed);
  BootstrapConfig cfg;
  cfg.n_replicates = o.replicates;
  cfg.seed = derive_seed(seed, 7);
  cfg.unit = o.unit;
  cfg.threads = o.threads;
  cfg.validate();

  std::vector<ScoreRecord> scores;
  Json folds = nullptr;
  if (o.train_toy) {
    const DiskImageSource images(bundle, o.images.value_or(default_image_root(o.bundle)));
    ToyPipelineOptions popts;
    popts.folds = o.folds;
    popts.ensemble = o.ensemble;
    popts.ensemble.threads = o.threads;
    const ToyCvResult cv = run_toy_cv(bundle, images, seed, popts);
    scores = cv.patch_scores;
    PredictionSet set;
    set.scores = scores;
    fs::create_directories(o.out);
    write_predictions(set, o.out / "scores.jsonl");
    folds = Json::array();
    for (const auto& f : cv.folds)
      folds.push_back(Json{{"fold", f.fold},
                           {"train_lesions", f.train_lesions},
                           {"test_lesions", f.test_lesions},
                           {"member_candidates", f.member_candidates},
                           {"member_validation_aucs", f.member_validation_aucs},
                           {"skipped_candidates", f.skipped_candidates}});
  } else {
    scores = load_scores(*o.scores, bundle, o.scorer);
  }
  Json report = evaluate_classification(bundle, scores, cfg, o.out);
  report["seed"] = seed;
  report["scorer"] = scores.front().scorer_id;
  if (!folds.is_null()) report["folds"] = std::move(folds);
  write_json(o.out / "classify_report.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// ensemble

struct EnsembleCliOptions {
  fs::path train;  // bundle whose eligible lesions are the training set
  std::optional<fs::path> images;
  std::optional<fs::path> score;  // bundle to score with the trained ensemble
  std::optional<fs::path> score_images;
  std::optional<std::uint64_t> seed;
  fs::path out;
  EnsembleOptions ensemble;
  int patch_size = kDefaultPatchSize;
};

// Ensemble probability of every patch of every lesion in `bundle`.
inline std::vector<ScoreRecord> score_bundle(const Ensemble& ensemble, const DatasetBundle& bundle,
                                             const ImageSource& images, int patch_size, unsigned threads) {
  std::vector<std::vector<ScoreRecord>> per_lesion(bundle.lesions.size());
  parallel_for(bundle.lesions.size(), threads, [&](std::size_t i) {
    const LesionRecord& l = bundle.lesions[i];
    for (std::size_t k = 0; k < l.patches.size(); ++k) {
      const Patch raw{extract_region(images, l.patches[k]), l.lesion_id, static_cast<int>(k)};
      per_lesion[i].push_back({l.lesion_id, static_cast<int>(k),
                               ensemble.predict(preprocess_patch(raw, patch_size).pixels), kToyEnsembleScorer});
    }
  });
  std::vector<ScoreRecord> out;
  for (auto& v : per_lesion) out.insert(out.end(), v.begin(), v.end());
  return out;
}

inline Json run_ensemble(const EnsembleCliOptions& o) {
  const DatasetBundle train = load_valid_bundle(o.train);
  const std::uint64_t seed = resolve_seed(o.seed);
  const DiskImageSource images(train, o.images.value_or(default_image_root(o.train)));
  const auto patches = extract_training_patches(train, images, o.patch_size, o.ensemble.threads);
  const Ensemble ensemble = build_ensemble(patches, seed, o.ensemble);
  fs::create_directories(o.out);
  write_json(o.out / "ensemble.json", ensemble_to_json(ensemble));
  Json summary{{"seed", seed},
               {"training_patches", patches.size()},
               {"members", ensemble.members.size()},
               {"validation_aucs", ensemble.validation_aucs},
               {"skipped_candidates", ensemble.skipped}};
  if (o.score) {
    const DatasetBundle target = load_valid_bundle(*o.score);
    const DiskImageSource target_images(target, o.score_images.value_or(default_image_root(*o.score)));
    PredictionSet set;
    set.scores = score_bundle(ensemble, target, target_images, o.patch_size, o.ensemble.threads);
    write_predictions(set, o.out / "scores.jsonl");
    summary["scored_patches"] = set.scores.size();
  }
  return summary;
}

// ---------------------------------------------------------------------------
// groups

enum class LesionFilter { all, biopsied, nonbiopsied };

struct GroupsOptions {
  fs::path bundle;
  fs::path scores;
  std::string scorer;
  fs::path out;  // groups.jsonl
  double threshold = kDecisionThreshold;
  LesionFilter lesions = LesionFilter::nonbiopsied;
};

inline PatientScores patient_groups(const DatasetBundle& bundle, const std::vector<ScoreRecord>& scores,
                                    LesionFilter filter, double threshold) {
  const auto probs = lesion_probabilities(scores);
  std::map<std::string, std::vector<double>> by_patient;
  for (const auto& l : bundle.lesions) {
    if ((filter == LesionFilter::biopsied && !l.biopsied) || (filter == LesionFilter::nonbiopsied && l.biopsied)) continue;
    if (auto it = probs.find(l.lesion_id); it != probs.end()) by_patient[l.patient_id].push_back(it->second);
  }
  return patient_max_probability(bundle.patient_ids(), by_patient, threshold);
}

inline Json run_groups(const GroupsOptions& o) {
  if (!(o.threshold >= 0.0 && o.threshold <= 1.0)) throw UsageError("--threshold must lie in [0, 1]");
  const DatasetBundle bundle = load_valid_bundle(o.bundle);
  const PatientScores groups = patient_groups(bundle, load_scores(o.scores, bundle, o.scorer), o.lesions, o.threshold);
  if (groups.scored.empty()) throw DataError("no patient has a scored lesion");
  write_groups(groups, o.out, o.threshold);
  std::size_t positive = 0;
  for (const auto& g : groups.scored) positive += g.group == PatientGroup::predicted_metastasis ? 1 : 0;
  return Json{{"out", o.out.string()},
              {"predicted_metastasis", positive},
              {"predicted_benign", groups.scored.size() - positive},
              {"excluded_without_scored_lesion", groups.excluded}};
}

// ---------------------------------------------------------------------------
// survival

struct SurvivalOptions {
  fs::path outcomes;  // .jsonl or .csv
  fs::path groups;
  Endpoint endpoint = Endpoint::disease_free;
  fs::path out;
};

inline OutcomeSet load_outcomes_any(const fs::path& path) {
  return path.extension() == ".csv" ? load_outcomes_csv(path) : load_outcomes(path);
}

inline Json run_survival(const SurvivalOptions& o) {
  const SurvivalInput in = survival_sample(load_outcomes_any(o.outcomes), load_groups(o.groups), o.endpoint);
  if (in.sample.empty()) throw DataError("no grouped patient has an outcome record");
  std::size_t events = 0;
  for (const auto& s : in.sample) events += s.event ? 1 : 0;
  if (events == 0) throw DataError("no " + std::string(to_string(o.endpoint)) + " events in either group; survival comparison is undefined");

  std::vector<std::pair<PatientGroup, KMEstimate>> curves;
  Json groups = Json::object();
  std::vector<Series> series;
  for (const PatientGroup g : {PatientGroup::predicted_benign, PatientGroup::predicted_metastasis}) {
    const SurvivalSample part = restrict_to(in.sample, g);
    if (part.empty()) continue;
    const KMEstimate km = kaplan_meier(part);
    Json at = Json::object();
    for (int year : {1, 2, 3}) at[std::to_string(year) + "y"] = survival_at(km, 365.0 * year);
    std::size_t ev = 0;
    for (const auto& s : part) ev += s.event ? 1 : 0;
    groups[std::string(to_string(g))] = {{"patients", part.size()}, {"events", ev}, {"survival_at", at}};
    Series s{std::string(to_string(g)), {{0.0, 1.0}}, true};
    for (const auto& step : km.steps) s.points.emplace_back(step.time, step.survival);
    series.push_back(std::move(s));
    curves.emplace_back(g, km);
  }
  fs::create_directories(o.out);
  write_text_atomic(o.out / "km_curve.csv", km_curve_csv(curves));
  write_text_atomic(o.out / "km_curve.svg",
                    svg_line_chart(series, {"Kaplan-Meier", "Days", "Survival", 480, 360, std::nullopt, std::pair{0.0, 1.0}}));

  Json report{{"endpoint", to_string(o.endpoint)},
              {"patients", in.sample.size()},
              {"events", events},
              {"missing_outcome", in.missing_outcome},
              {"groups", groups}};
  try {
    report["cox"] = to_json(cox_fit(in.sample));
  } catch (const NumericError& e) {
    report["cox"] = {{"converged", false}, {"error", e.what()}};
    write_json(o.out / "survival_report.json", report);
    throw;
  }
  write_json(o.out / "survival_report.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// survey

inline std::vector<SurveyLesion> survey_lesions(const DatasetBundle& bundle, const std::vector<ScoreRecord>& scores) {
  const auto probs = lesion_probabilities(scores);
  std::vector<SurveyLesion> out;
  for (const LesionRecord* l : bundle.eligible_lesions())
    if (auto it = probs.find(l->lesion_id); it != probs.end())
      out.push_back({l->lesion_id, l->is_metastasis(), it->second});
  if (out.empty()) throw DataError("no classification-eligible lesion has a model probability");
  return out;
}

struct SurveyPlanOptions {
  fs::path bundle, scores;
  std::string scorer;
  std::size_t respondents = 111;
  std::optional<std::uint64_t> seed;
  fs::path out;  // assignments.jsonl
};

inline std::vector<std::string> respondent_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("R" + std::to_string(10000 + i + 1).substr(1));
  return ids;
}

inline Json run_survey_plan(const SurveyPlanOptions& o) {
  const DatasetBundle bundle = load_valid_bundle(o.bundle);
  const std::uint64_t seed = resolve_seed(o.seed);
  std::vector<std::string> ids;
  for (const auto& l : survey_lesions(bundle, load_scores(o.scores, bundle, o.scorer))) ids.push_back(l.lesion_id);
  const auto assignments = block_randomize_survey(ids, respondent_ids(o.respondents), seed);
  write_assignments(assignments, o.out, seed);
  const ExposureCounts c = exposure_counts(ids, assignments);
  return Json{{"out", o.out.string()},
              {"seed", seed},
              {"lesions", ids.size()},
              {"respondents", assignments.size()},
              {"exposure_spread", {{"unlabeled", ExposureCounts::spread(c.unlabeled)},
                                   {"labeled", ExposureCounts::spread(c.labeled)}}}};
}

struct SurveySimulateOptions {
  fs::path bundle, scores;
  std::string scorer;
  std::size_t respondents = 111;
  std::optional<std::uint64_t> seed;
  fs::path out;  // responses.jsonl
};

inline Json run_survey_simulate(const SurveySimulateOptions& o) {
  const DatasetBundle bundle = load_valid_bundle(o.bundle);
  const std::uint64_t seed = resolve_seed(o.seed);
  const SurveySet set = simulate_survey(survey_lesions(bundle, load_scores(o.scores, bundle, o.scorer)), o.respondents, seed);
  write_survey_set(set, o.out);
  return Json{{"out", o.out.string()}, {"seed", seed}, {"sessions", set.sessions.size()}, {"responses", set.responses.size()}};
}

struct SurveyReportOptions {
  fs::path bundle, scores, responses;
  std::string scorer;
  std::optional<std::uint64_t> seed;
  int replicates = 2000;
  unsigned threads = 0;
  double threshold = kDecisionThreshold;
  fs::path out;
};

inline Json run_survey_report(const SurveyReportOptions& o) {
  const DatasetBundle bundle = load_valid_bundle(o.bundle);
  BootstrapConfig cfg;
  cfg.seed = resolve_seed(o.seed);
  cfg.n_replicates = o.replicates;
  cfg.threads = o.threads;
  const auto lesions = survey_lesions(bundle, load_scores(o.scores, bundle, o.scorer));
  const SurveyReport rep = analyze_survey(load_survey_set(o.responses), lesions, cfg, o.threshold);
  const Json full = to_json(rep, cfg);

  Json decision{{"threshold", o.threshold}, {"policies", full["policies"]}, {"deltas", full["deltas"]},
                {"chi_square", full["chi_square"]}};
  if (full.contains("lesion_majority")) decision["lesion_majority"] = full["lesion_majority"];
  Json stats = full;
  stats.erase("policies");
  stats.erase("deltas");
  stats["seed"] = cfg.seed;
  stats["bootstrap_replicates"] = cfg.n_replicates;

  CsvTable fig4({"policy", "tp", "fp", "fn", "tn", "accuracy", "sensitivity", "specificity"});
  auto cell = [](const std::optional<double>& v) { return v ? Json(*v).dump() : std::string(); };
  for (const auto& p : rep.policies)
    fig4.row(p.name, p.confusion.tp, p.confusion.fp, p.confusion.fn, p.confusion.tn, cell(p.rates.accuracy),
             cell(p.rates.sensitivity), cell(p.rates.specificity));
  CsvTable fig5({"lesion_id", "model_probability", "surgeon_mean_probability", "metastasis"});
  Series pts{"lesions", {}, false, true}, fit{"least squares", {}, false, false};
  for (const auto& [id, x, y, m] : rep.surgeon_vs_model_points) {
    fig5.row(id, x, y, m ? 1 : 0);
    pts.points.emplace_back(x, y);
  }
  if (rep.surgeon_vs_model)
    for (double x : {0.0, 1.0}) fit.points.emplace_back(x, rep.surgeon_vs_model->intercept + rep.surgeon_vs_model->slope * x);

  fs::create_directories(o.out);
  write_json(o.out / "decision_report.json", decision);
  write_json(o.out / "stats_report.json", stats);
  write_text_atomic(o.out / "confusion_matrices.csv", fig4.str());
  write_text_atomic(o.out / "surgeon_vs_model.csv", fig5.str());
  write_text_atomic(o.out / "surgeon_vs_model.svg",
                    svg_line_chart({pts, fit}, {"Surgeon vs model", "Model probability", "Surgeon mean probability", 480, 360,
                                           std::pair{0.0, 1.0}, std::pair{0.0, 1.0}}));
  return Json{{"decision", decision}, {"stats", stats}};
}

// ---------------------------------------------------------------------------
// report --all

struct ReportOptions {
  fs::path cohort;  // directory written by synth
  std::optional<std::uint64_t> seed;
  fs::path out;
  int replicates = 2000;
  std::size_t respondents = 111;
  std::string scorer;
  unsigned threads = 0;
};

// Runs every analysis over a cohort directory. A failing section is recorded
// with its error and the remaining sections still run.
inline Json run_report(const ReportOptions& o) {
  const std::uint64_t seed = resolve_seed(o.seed);
  const fs::path bundle = o.cohort / "bundle.jsonl", preds = o.cohort / "predictions.jsonl";
  if (!fs::exists(bundle)) throw IoError("'" + bundle.string() + "' not found");
  Json report{{"seed", seed}, {"cohort", o.cohort.string()}, {"sections", Json::object()}};
  std::size_t failures = 0;
  auto section = [&](const std::string& name, auto&& body) {
    try {
      report["sections"][name] = body();
    } catch (const Error& e) {
      ++failures;
      report["sections"][name] = {{"error", e.what()}, {"exit_code", static_cast<int>(e.exit_code())}};
    }
  };

  section("detection", [&] {
    DetectOptions d;
    d.bundle = bundle;
    const bool has_detections = !read_predictions(preds).detections.empty();
    if (has_detections) d.predictions = preds;
    else d.perfect_from = o.cohort / "sidecar.jsonl";
    d.out = o.out / "detection";
    return run_eval_detect(d);
  });
  section("classification", [&] {
    ClassifyOptions c;
    c.bundle = bundle;
    c.scores = preds;
    c.scorer = o.scorer;
    c.seed = seed;
    c.replicates = o.replicates;
    c.threads = o.threads;
    c.out = o.out / "classification";
    return run_eval_classify(c);
  });
  section("groups", [&] {
    GroupsOptions g;
    g.bundle = bundle;
    g.scores = preds;
    g.scorer = o.scorer;
    g.out = o.out / "groups.jsonl";
    return run_groups(g);
  });
  for (const Endpoint e : {Endpoint::disease_free, Endpoint::peritoneal_carcinomatosis_free}) {
    const std::string name = "survival_" + std::string(to_string(e));
    section(name, [&] {
      SurvivalOptions s;
      s.outcomes = o.cohort / "outcomes.jsonl";
      s.groups = o.out / "groups.jsonl";
      s.endpoint = e;
      s.out = o.out / name;
      return run_survival(s);
    });
  }
  section("survey", [&] {
    SurveySimulateOptions sim;
    sim.bundle = bundle;
    sim.scores = preds;
    sim.scorer = o.scorer;
    sim.respondents = o.respondents;
    sim.seed = derive_seed(seed, 11);
    sim.out = o.out / "survey" / "responses.jsonl";
    run_survey_simulate(sim);
    SurveyReportOptions r;
    r.bundle = bundle;
    r.scores = preds;
    r.scorer = o.scorer;
    r.responses = sim.out;
    r.seed = derive_seed(seed, 12);
    r.replicates = o.replicates;
    r.threads = o.threads;
    r.out = o.out / "survey";
    return run_survey_report(r);
  });
  report["failed_sections"] = failures;
  write_json(o.out / "report.json", report);
  return report;
}

}  // namespace stagelab::cli
