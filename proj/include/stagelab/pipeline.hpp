#pragma once

// Cross-validated toy classification run over a bundle: patch extraction,
// lesion-level folds, one ensemble per fold, out-of-fold patch and lesion
// probabilities.

#include <map>
#include <string>
#include <vector>

#include "stagelab/classify.hpp"
#include "stagelab/ingest.hpp"
#include "stagelab/parallel.hpp"
#include "stagelab/splitters.hpp"
#include "stagelab/synthetic.hpp"

namespace stagelab {

inline constexpr const char* kToyEnsembleScorer = "toy-ensemble";

struct ToyPipelineOptions {
  int folds = 10;
  int patch_size = kDefaultPatchSize;
  bool stratified = true;  // balance labels across folds
  EnsembleOptions ensemble;
};

struct FoldSummary {
  int fold = 0;
  std::size_t train_lesions = 0, test_lesions = 0;
  std::vector<double> member_validation_aucs;
  std::vector<int> member_candidates;
  std::size_t skipped_candidates = 0;
};

struct ToyCvResult {
  std::vector<ScoreRecord> patch_scores;              // out-of-fold, one per patch
  std::map<std::string, double> lesion_probability;   // mean of the lesion's patch scores
  std::map<std::string, bool> lesion_metastasis;
  std::vector<FoldSummary> folds;
};

// Preprocessed, featurized patches of every classification-eligible lesion,
// in bundle order.
inline std::vector<TrainingPatch> extract_training_patches(const DatasetBundle& bundle, const ImageSource& images,
                                                           int patch_size = kDefaultPatchSize, unsigned threads = 0) {
  const auto lesions = bundle.eligible_lesions();
  std::vector<std::vector<TrainingPatch>> per_lesion(lesions.size());
  parallel_for(lesions.size(), threads, [&](std::size_t i) {
    const LesionRecord& l = *lesions[i];
    for (std::size_t k = 0; k < l.patches.size(); ++k) {
      Patch raw{extract_region(images, l.patches[k]), l.lesion_id, static_cast<int>(k)};
      per_lesion[i].push_back(
          make_training_patch(l.lesion_id, preprocess_patch(raw, patch_size).pixels, l.is_metastasis()));
    }
  });
  std::vector<TrainingPatch> out;
  for (auto& v : per_lesion)
    for (auto& p : v) out.push_back(std::move(p));
  return out;
}

inline ToyCvResult run_toy_cv(const DatasetBundle& bundle, const ImageSource& images, std::uint64_t seed,
                              const ToyPipelineOptions& options = {}) {
  const std::vector<TrainingPatch> patches =
      extract_training_patches(bundle, images, options.patch_size, options.ensemble.threads);
  std::vector<std::string> lesion_ids;
  std::map<std::string, std::vector<std::size_t>> by_lesion;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    auto& v = by_lesion[patches[i].lesion_id];
    if (v.empty()) lesion_ids.push_back(patches[i].lesion_id);
    v.push_back(i);
  }
  if (lesion_ids.empty()) throw DataError("no classification-eligible lesions with patches");

  ToyCvResult result;
  std::vector<bool> labels;
  for (const auto& id : lesion_ids) labels.push_back(patches[by_lesion[id].front()].metastasis);
  const auto plans = options.stratified ? stratified_lesion_kfold(lesion_ids, labels, options.folds, derive_seed(seed, 0))
                                        : lesion_kfold(lesion_ids, options.folds, derive_seed(seed, 0));
  std::map<std::string, std::vector<double>> lesion_scores;
  for (const SplitPlan& plan : plans) {
    std::vector<TrainingPatch> train;
    for (const auto& id : plan.train)
      for (auto i : by_lesion[id]) train.push_back(patches[i]);
    const Ensemble ensemble = build_ensemble(train, derive_seed(seed, 1, static_cast<std::uint64_t>(plan.trial_index)),
                                             options.ensemble);
    FoldSummary summary{plan.trial_index, plan.train.size(), plan.test.size(), ensemble.validation_aucs, {},
                        ensemble.skipped.size()};
    for (const auto& m : ensemble.members) summary.member_candidates.push_back(m.provenance().candidate_index);
    result.folds.push_back(std::move(summary));
    for (const auto& id : plan.test)
      for (auto i : by_lesion[id]) {
        const TrainingPatch& p = patches[i];
        const double s = ensemble.predict(p.features);
        lesion_scores[id].push_back(s);
        result.patch_scores.push_back(
            {id, static_cast<int>(lesion_scores[id].size() - 1), s, kToyEnsembleScorer});
      }
  }
  std::sort(result.patch_scores.begin(), result.patch_scores.end(), [](const ScoreRecord& a, const ScoreRecord& b) {
    return std::tie(a.lesion_id, a.patch_index) < std::tie(b.lesion_id, b.patch_index);
  });
  for (const auto& [id, scores] : lesion_scores) result.lesion_probability[id] = mean_probability(scores);
  for (const auto& p : patches) result.lesion_metastasis[p.lesion_id] = p.metastasis;
  return result;
}

inline InMemoryImageSource image_source(const SyntheticCohort& cohort) {
  std::map<std::string, std::string> id_by_file;
  for (const auto& img : cohort.bundle.images) id_by_file[img.file_path] = img.image_id;
  InMemoryImageSource source;
  for (const auto& img : cohort.images) source.add(id_by_file.at(img.file_path), img.pixels);
  return source;
}

// Mean probability per lesion from score records of one scorer (all scorers
// when `scorer_id` is empty).
inline std::map<std::string, double> lesion_probabilities(const std::vector<ScoreRecord>& scores,
                                                          const std::string& scorer_id = "") {
  std::map<std::string, std::vector<double>> grouped;
  for (const auto& s : scores)
    if (scorer_id.empty() || s.scorer_id == scorer_id) grouped[s.lesion_id].push_back(s.probability);
  std::map<std::string, double> out;
  for (const auto& [id, v] : grouped) out[id] = mean_probability(v);
  return out;
}

}  // namespace stagelab
