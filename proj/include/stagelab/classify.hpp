#pragma once

// Classification pipeline: patch extraction and preprocessing, the scorer
// interface with a reference logistic scorer over patch summary statistics,
// the 30-candidate / top-5 ensemble protocol, and lesion / patient
// aggregation of probabilities.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stagelab/core.hpp"
#include "stagelab/image.hpp"
#include "stagelab/jsonl.hpp"
#include "stagelab/parallel.hpp"
#include "stagelab/rng.hpp"
#include "stagelab/roc.hpp"
#include "stagelab/splitters.hpp"

namespace stagelab {

inline constexpr int kDefaultPatchSize = 64;
inline constexpr double kDecisionThreshold = 0.5;

// ---------------------------------------------------------------------------
// Image access

class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual const RgbImage& image(const std::string& image_id) const = 0;
};

class InMemoryImageSource final : public ImageSource {
 public:
  void add(std::string image_id, RgbImage img) { images_[std::move(image_id)] = std::move(img); }
  const RgbImage& image(const std::string& image_id) const override {
    auto it = images_.find(image_id);
    if (it == images_.end()) throw DataError("unknown image '" + image_id + "'");
    return it->second;
  }

 private:
  std::unordered_map<std::string, RgbImage> images_;
};

// Loads PNGs lazily relative to `root`; thread-safe.
class DiskImageSource final : public ImageSource {
 public:
  DiskImageSource(const DatasetBundle& bundle, std::filesystem::path root) : root_(std::move(root)) {
    for (const auto& img : bundle.images) paths_[img.image_id] = img.file_path;
  }
  const RgbImage& image(const std::string& image_id) const override {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(image_id); it != cache_.end()) return *it->second;
    auto p = paths_.find(image_id);
    if (p == paths_.end()) throw DataError("unknown image '" + image_id + "'");
    std::filesystem::path path(p->second);
    if (path.is_relative()) path = root_ / path;
    auto img = std::make_unique<RgbImage>(read_png(path));
    return *cache_.emplace(image_id, std::move(img)).first->second;
  }

 private:
  std::filesystem::path root_;
  std::unordered_map<std::string, std::string> paths_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, std::unique_ptr<RgbImage>> cache_;
};

// ---------------------------------------------------------------------------
// Patches

struct Patch {
  RgbImage pixels;
  std::string lesion_id;
  int patch_index = 0;
};

inline RgbImage extract_region(const ImageSource& source, const ImageRegion& region) {
  const RgbImage& img = source.image(region.image_id);
  const PixelRect rect = covering_rect(region.box.x_min(), region.box.y_min(), region.box.x_max(),
                                       region.box.y_max(), img.width(), img.height());
  return crop(img, rect);
}

// Resize to target x target (bilinear), then equalize luminance.
inline Patch preprocess_patch(const Patch& patch, int target_size = kDefaultPatchSize) {
  if (patch.pixels.empty()) throw DataError("patch of lesion '" + patch.lesion_id + "' has zero area");
  return {equalize_luminance(resize_bilinear(patch.pixels, target_size, target_size)), patch.lesion_id,
          patch.patch_index};
}

// ---------------------------------------------------------------------------
// Patch summary statistics

inline constexpr std::size_t kFeatureCount = 9;
using FeatureVector = std::array<double, kFeatureCount>;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "mean_r", "mean_g", "mean_b", "sd_r", "sd_g", "sd_b", "gradient_energy", "luma_skewness", "luma_kurtosis"};

inline FeatureVector patch_features(const RgbImage& img) {
  if (img.empty()) throw DataError("cannot featurize an empty patch");
  const double n = static_cast<double>(img.pixel_count());
  std::array<double, 3> sum{}, sum_sq{};
  std::vector<double> luma(img.pixel_count());
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const Rgb& p = img.pixels()[i];
    const double c[3] = {p.r / 255.0, p.g / 255.0, p.b / 255.0};
    for (int k = 0; k < 3; ++k) {
      sum[k] += c[k];
      sum_sq[k] += c[k] * c[k];
    }
    luma[i] = luminance(p) / 255.0;
  }
  FeatureVector f{};
  for (int k = 0; k < 3; ++k) {
    f[k] = sum[k] / n;
    f[3 + k] = std::sqrt(std::max(0.0, sum_sq[k] / n - f[k] * f[k]));
  }
  double grad = 0.0;
  std::size_t grad_terms = 0;
  const int w = img.width(), h = img.height();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = luma[static_cast<std::size_t>(y * w + x)];
      if (x + 1 < w) {
        const double d = luma[static_cast<std::size_t>(y * w + x + 1)] - v;
        grad += d * d;
        ++grad_terms;
      }
      if (y + 1 < h) {
        const double d = luma[static_cast<std::size_t>((y + 1) * w + x)] - v;
        grad += d * d;
        ++grad_terms;
      }
    }
  f[6] = grad_terms ? grad / static_cast<double>(grad_terms) : 0.0;
  const double mean = std::accumulate(luma.begin(), luma.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : luma) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  f[7] = m2 > 1e-12 ? m3 / std::pow(m2, 1.5) : 0.0;
  f[8] = m2 > 1e-12 ? m4 / (m2 * m2) - 3.0 : 0.0;
  return f;
}

// ---------------------------------------------------------------------------
// L2-regularized logistic regression

struct LogisticFitOptions {
  double l2 = 1e-3;
  double gradient_tolerance = 1e-8;
  int max_iterations = 100;
};

struct LogisticModel {
  std::vector<std::size_t> features;  // indices into FeatureVector
  std::vector<double> center, scale;  // standardization, per used feature
  std::vector<double> weights;
  double intercept = 0.0;
  int iterations = 0;
  bool converged = false;

  double predict(const FeatureVector& f) const {
    double z = intercept;
    for (std::size_t k = 0; k < features.size(); ++k) z += weights[k] * (f[features[k]] - center[k]) / scale[k];
    return 1.0 / (1.0 + std::exp(-z));
  }
};

// Minimizes mean logistic loss + l2/2 * |w|^2 (intercept unpenalized) by
// damped Newton iteration until the gradient's max-norm is below tolerance.
// Labels may be soft (in [0, 1]).
inline LogisticModel fit_logistic(const std::vector<FeatureVector>& x, std::span<const double> y,
                                  std::vector<std::size_t> features, const LogisticFitOptions& options = {}) {
  if (x.size() != y.size()) throw DataError("features and labels differ in length");
  if (x.empty()) throw DataError("cannot fit on an empty training set");
  if (features.empty()) throw UsageError("at least one feature is required");
  const std::size_t n = x.size(), d = features.size();
  const double nd = static_cast<double>(n);

  LogisticModel model;
  model.features = std::move(features);
  model.center.assign(d, 0.0);
  model.scale.assign(d, 1.0);
  for (std::size_t k = 0; k < d; ++k) {
    double s = 0.0, ss = 0.0;
    for (const auto& row : x) {
      s += row[model.features[k]];
      ss += row[model.features[k]] * row[model.features[k]];
    }
    model.center[k] = s / nd;
    const double var = ss / nd - model.center[k] * model.center[k];
    model.scale[k] = var > 1e-18 ? std::sqrt(var) : 1.0;
  }

  Eigen::MatrixXd design(n, d + 1);
  for (std::size_t i = 0; i < n; ++i) {
    design(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (std::size_t k = 0; k < d; ++k)
      design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k + 1)) =
          (x[i][model.features[k]] - model.center[k]) / model.scale[k];
  }
  const Eigen::Map<const Eigen::VectorXd> target(y.data(), static_cast<Eigen::Index>(n));
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d + 1), options.l2);
  penalty(0) = 0.0;

  auto objective = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd z = design * beta;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      // log(1 + exp(z)) - y z, computed stably
      const double lz = z(i) > 0 ? z(i) + std::log1p(std::exp(-z(i))) : std::log1p(std::exp(z(i)));
      loss += lz - target(i) * z(i);
    }
    return loss / nd + 0.5 * beta.cwiseProduct(penalty).dot(beta);
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d + 1));
  double current = objective(beta);
  for (int it = 0; it < options.max_iterations; ++it) {
    const Eigen::VectorXd z = design * beta;
    const Eigen::VectorXd p = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    const Eigen::VectorXd grad = design.transpose() * (p - target) / nd + penalty.cwiseProduct(beta);
    model.iterations = it;
    if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      model.converged = true;
      break;
    }
    const Eigen::VectorXd w = p.cwiseProduct((Eigen::VectorXd::Ones(p.size()) - p)).cwiseMax(1e-12);
    Eigen::MatrixXd hess = design.transpose() * w.asDiagonal() * design / nd;
    hess.diagonal() += penalty;
    hess.diagonal().array() += 1e-12;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = beta - step;
    double value = objective(next);
    const double slack = 1e-13 * std::max(1.0, std::abs(current));
    while (value > current + slack && t > 1e-10) {
      t /= 2.0;
      next = beta - t * step;
      value = objective(next);
    }
    beta = next;
    current = value;
  }
  model.intercept = beta(0);
  model.weights.assign(beta.data() + 1, beta.data() + beta.size());
  return model;
}

// ---------------------------------------------------------------------------
// Scorers

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual const std::string& id() const = 0;
  // Probability of metastasis in [0, 1] for a preprocessed patch.
  virtual double score(const RgbImage& preprocessed_patch) const = 0;
};

struct ToyHyperparameters {
  double l2 = 1e-3;
  std::vector<std::size_t> features = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  double cutmix_fraction = 0.0;  // extra CutMix samples as a fraction of the training set
};

// Random draw from the candidate range: log-uniform L2 strength, a random
// feature subset of at least four statistics, and a CutMix augmentation rate.
inline ToyHyperparameters draw_hyperparameters(Rng& rng) {
  ToyHyperparameters h;
  h.l2 = std::pow(10.0, rng.uniform(-4.0, -1.0));
  do {
    h.features.clear();
    for (std::size_t k = 0; k < kFeatureCount; ++k)
      if (rng.bernoulli(0.75)) h.features.push_back(k);
  } while (h.features.size() < 4);
  h.cutmix_fraction = rng.uniform(0.0, 0.5);
  return h;
}

struct ScorerProvenance {
  int candidate_index = -1;
  int split_index = -1;
  std::uint64_t seed = 0;
};

class ToyScorer final : public Scorer {
 public:
  ToyScorer(std::string id, LogisticModel model, ToyHyperparameters hyper, ScorerProvenance provenance)
      : id_(std::move(id)), model_(std::move(model)), hyper_(std::move(hyper)), provenance_(provenance) {}

  const std::string& id() const override { return id_; }
  double score(const RgbImage& preprocessed_patch) const override { return score(patch_features(preprocessed_patch)); }
  double score(const FeatureVector& f) const { return model_.predict(f); }

  const LogisticModel& model() const noexcept { return model_; }
  const ToyHyperparameters& hyperparameters() const noexcept { return hyper_; }
  const ScorerProvenance& provenance() const noexcept { return provenance_; }

 private:
  std::string id_;
  LogisticModel model_;
  ToyHyperparameters hyper_;
  ScorerProvenance provenance_;
};

// A preprocessed training patch with its cached features.
struct TrainingPatch {
  std::string lesion_id;
  RgbImage pixels;
  FeatureVector features{};
  bool metastasis = false;
};

inline TrainingPatch make_training_patch(std::string lesion_id, RgbImage preprocessed, bool metastasis) {
  TrainingPatch p{std::move(lesion_id), std::move(preprocessed), {}, metastasis};
  p.features = patch_features(p.pixels);
  return p;
}

inline ToyScorer train_toy_scorer(std::span<const TrainingPatch* const> patches, const ToyHyperparameters& hyper,
                                  std::uint64_t seed, std::string id = "toy", ScorerProvenance provenance = {}) {
  const auto positives = std::count_if(patches.begin(), patches.end(), [](const auto* p) { return p->metastasis; });
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(patches.size()))
    throw DataError("toy scorer needs both classes in its training set");

  std::vector<FeatureVector> x;
  std::vector<double> y;
  for (const auto* p : patches) {
    x.push_back(p->features);
    y.push_back(p->metastasis ? 1.0 : 0.0);
  }
  Rng rng(seed);
  const auto n_mix = static_cast<std::size_t>(std::lround(hyper.cutmix_fraction * static_cast<double>(patches.size())));
  for (std::size_t m = 0; m < n_mix; ++m) {
    const TrainingPatch& a = *patches[rng.below(patches.size())];
    const TrainingPatch& b = *patches[rng.below(patches.size())];
    if (a.pixels.width() != b.pixels.width() || a.pixels.height() != b.pixels.height()) continue;
    MixedPatch mixed = cutmix(a.pixels, a.metastasis ? 1.0 : 0.0, b.pixels, b.metastasis ? 1.0 : 0.0, rng);
    x.push_back(patch_features(mixed.image));
    y.push_back(mixed.label);
  }
  provenance.seed = seed;
  LogisticModel model = fit_logistic(x, y, hyper.features, {hyper.l2, 1e-8, 100});
  return ToyScorer(std::move(id), std::move(model), hyper, provenance);
}

// ---------------------------------------------------------------------------
// Ensemble protocol

inline constexpr int kDefaultCandidates = 30;
inline constexpr int kDefaultEnsembleSize = 5;

struct CandidateScore {
  int index = 0;
  double validation_auc = 0.0;
};

// Indices of the `keep` best candidates by validation AUC; ties go to the
// lower candidate index. Independent of the input order.
inline std::vector<int> select_top(std::vector<CandidateScore> candidates, int keep) {
  if (keep < 1) throw UsageError("ensemble size must be >= 1");
  if (candidates.size() < static_cast<std::size_t>(keep))
    throw DataError("only " + std::to_string(candidates.size()) + " trainable candidates for an ensemble of " +
                    std::to_string(keep));
  std::sort(candidates.begin(), candidates.end(), [](const CandidateScore& a, const CandidateScore& b) {
    if (a.validation_auc != b.validation_auc) return a.validation_auc > b.validation_auc;
    return a.index < b.index;
  });
  std::vector<int> out;
  for (int k = 0; k < keep; ++k) out.push_back(candidates[static_cast<std::size_t>(k)].index);
  return out;
}

struct Ensemble {
  std::vector<ToyScorer> members;
  std::vector<double> validation_aucs;          // per member
  std::vector<CandidateScore> candidates;       // every trainable candidate
  std::vector<int> skipped;                     // candidates that could not be trained or validated

  double predict(const FeatureVector& f) const {
    if (members.empty()) throw DataError("ensemble has no members");
    double sum = 0.0;
    for (const auto& m : members) sum += m.score(f);
    return sum / static_cast<double>(members.size());
  }
  // Mean of member probabilities; the majority vote is predict >= 0.5.
  double predict(const RgbImage& preprocessed_patch) const { return predict(patch_features(preprocessed_patch)); }
  bool vote(const RgbImage& preprocessed_patch) const { return predict(preprocessed_patch) >= kDecisionThreshold; }
};

struct EnsembleOptions {
  int candidates = kDefaultCandidates;
  int keep = kDefaultEnsembleSize;
  double validation_fraction = 0.15;
  unsigned threads = 0;  // 0: hardware concurrency
};

// Trains one candidate per lesion-level subsplit (random hyperparameters),
// scores each on its own validation lesions' patches and keeps the top `keep`.
inline Ensemble build_ensemble(const std::vector<TrainingPatch>& training, std::uint64_t seed,
                               const EnsembleOptions& options = {}) {
  std::vector<std::string> lesion_ids;
  for (const auto& p : training)
    if (lesion_ids.empty() || lesion_ids.back() != p.lesion_id) lesion_ids.push_back(p.lesion_id);
  std::sort(lesion_ids.begin(), lesion_ids.end());
  lesion_ids.erase(std::unique(lesion_ids.begin(), lesion_ids.end()), lesion_ids.end());
  const auto plans = random_subsplits(lesion_ids, options.candidates, options.validation_fraction, derive_seed(seed, 0));

  std::unordered_map<std::string, std::vector<const TrainingPatch*>> by_lesion;
  for (const auto& p : training) by_lesion[p.lesion_id].push_back(&p);

  struct Outcome {
    std::optional<ToyScorer> scorer;
    double auc = 0.0;
  };
  std::vector<Outcome> outcomes(plans.size());

  auto run = [&](std::size_t i) {
    const SplitPlan& plan = plans[i];
    Rng hyper_rng(derive_seed(seed, 1, i));
    const ToyHyperparameters hyper = draw_hyperparameters(hyper_rng);
    std::vector<const TrainingPatch*> sub_train, validation;
    for (const auto& id : plan.train) for (const auto* p : by_lesion[id]) sub_train.push_back(p);
    for (const auto& id : plan.validation) for (const auto* p : by_lesion[id]) validation.push_back(p);
    try {
      ToyScorer scorer = train_toy_scorer(sub_train, hyper, derive_seed(seed, 2, i), "candidate-" + std::to_string(i),
                                          {static_cast<int>(i), plan.trial_index, 0});
      std::vector<double> s;
      std::vector<bool> labels;
      for (const auto* p : validation) {
        s.push_back(scorer.score(p->features));
        labels.push_back(p->metastasis);
      }
      outcomes[i].auc = auc_roc(s, labels);
      outcomes[i].scorer.emplace(std::move(scorer));
    } catch (const Error&) {
      outcomes[i].scorer.reset();
    }
  };

  parallel_for(plans.size(), options.threads, run);

  Ensemble ensemble;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].scorer)
      ensemble.candidates.push_back({static_cast<int>(i), outcomes[i].auc});
    else
      ensemble.skipped.push_back(static_cast<int>(i));
  }
  for (int idx : select_top(ensemble.candidates, options.keep)) {
    ensemble.members.push_back(*outcomes[static_cast<std::size_t>(idx)].scorer);
    ensemble.validation_aucs.push_back(outcomes[static_cast<std::size_t>(idx)].auc);
  }
  return ensemble;
}

// ---------------------------------------------------------------------------
// Aggregation

inline double mean_probability(std::span<const double> values) {
  if (values.empty()) throw DataError("cannot average an empty list of probabilities");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

// Patch-level ensemble output (mean of members).
inline double ensemble_predict(const Ensemble& ensemble, const RgbImage& preprocessed_patch) {
  return ensemble.predict(preprocessed_patch);
}

// Lesion-level output: mean of its patch-level outputs.
inline double lesion_probability(const Ensemble& ensemble, std::span<const RgbImage> preprocessed_patches) {
  if (preprocessed_patches.empty()) throw DataError("lesion has no patches to score");
  std::vector<double> outputs;
  for (const auto& p : preprocessed_patches) outputs.push_back(ensemble.predict(p));
  return mean_probability(outputs);
}

enum class PatientGroup { predicted_benign, predicted_metastasis };

inline std::string_view to_string(PatientGroup g) {
  return g == PatientGroup::predicted_benign ? "predicted_benign" : "predicted_metastasis";
}
inline std::optional<PatientGroup> parse_patient_group(std::string_view s) {
  if (s == "predicted_benign") return PatientGroup::predicted_benign;
  if (s == "predicted_metastasis") return PatientGroup::predicted_metastasis;
  return std::nullopt;
}

// "0.5 or greater" is a predicted metastasis.
inline PatientGroup classify_patient(double score, double threshold = kDecisionThreshold) {
  return score >= threshold ? PatientGroup::predicted_metastasis : PatientGroup::predicted_benign;
}

struct PatientScore {
  std::string patient_id;
  double max_probability = 0.0;
  PatientGroup group = PatientGroup::predicted_benign;
};

struct PatientScores {
  std::vector<PatientScore> scored;
  std::vector<std::string> excluded;  // patients with no scored lesion
};

// Each patient takes the maximum of its lesions' probabilities.
inline PatientScores patient_max_probability(const std::vector<std::string>& patient_ids,
                                             const std::map<std::string, std::vector<double>>& lesion_probs_by_patient,
                                             double threshold = kDecisionThreshold) {
  PatientScores out;
  for (const auto& id : patient_ids) {
    auto it = lesion_probs_by_patient.find(id);
    if (it == lesion_probs_by_patient.end() || it->second.empty()) {
      out.excluded.push_back(id);
      continue;
    }
    const double m = *std::max_element(it->second.begin(), it->second.end());
    out.scored.push_back({id, m, classify_patient(m, threshold)});
  }
  return out;
}

inline void write_groups(const PatientScores& groups, const std::filesystem::path& path, double threshold) {
  std::vector<Json> records;
  for (const auto& s : groups.scored)
    records.push_back(Json{{"type", "group"},
                           {"patient_id", s.patient_id},
                           {"max_probability", s.max_probability},
                           {"group", to_string(s.group)}});
  Json header = make_header("groups");
  header["threshold"] = threshold;
  header["excluded"] = groups.excluded;
  write_jsonl(path, header, records);
}

inline PatientScores load_groups(const std::filesystem::path& path) {
  const JsonlContent content = read_jsonl(path, "groups");
  PatientScores out;
  if (!content.header.is_null() && content.header.contains("excluded"))
    out.excluded = content.header["excluded"].get<std::vector<std::string>>();
  for (const auto& [at, j] : content.records)
    out.scored.push_back({field::string(j, "patient_id", at), field::probability(j, "max_probability", at),
                          field::enumeration(j, "group", at, parse_patient_group)});
  return out;
}

// ---------------------------------------------------------------------------
// ensemble.json

inline Json scorer_to_json(const ToyScorer& s) {
  const auto& m = s.model();
  return Json{{"scorer_id", s.id()},
              {"candidate_index", s.provenance().candidate_index},
              {"split_index", s.provenance().split_index},
              {"seed", s.provenance().seed},
              {"hyperparameters",
               {{"l2", s.hyperparameters().l2},
                {"features", s.hyperparameters().features},
                {"cutmix_fraction", s.hyperparameters().cutmix_fraction}}},
              {"model",
               {{"features", m.features},
                {"center", m.center},
                {"scale", m.scale},
                {"weights", m.weights},
                {"intercept", m.intercept},
                {"iterations", m.iterations},
                {"converged", m.converged}}}};
}

inline ToyScorer scorer_from_json(const Json& j, const Locator& at) {
  const Json& h = field::require(j, "hyperparameters", at);
  const Json& m = field::require(j, "model", at);
  ToyHyperparameters hyper{field::number(h, "l2", at), field::require(h, "features", at).get<std::vector<std::size_t>>(),
                           field::number(h, "cutmix_fraction", at)};
  LogisticModel model;
  model.features = field::require(m, "features", at).get<std::vector<std::size_t>>();
  model.center = field::require(m, "center", at).get<std::vector<double>>();
  model.scale = field::require(m, "scale", at).get<std::vector<double>>();
  model.weights = field::require(m, "weights", at).get<std::vector<double>>();
  model.intercept = field::number(m, "intercept", at);
  model.iterations = static_cast<int>(field::integer(m, "iterations", at));
  model.converged = field::boolean(m, "converged", at);
  const std::size_t d = model.features.size();
  if (model.center.size() != d || model.scale.size() != d || model.weights.size() != d)
    fail_at(at, "model parameter vectors differ in length");
  for (auto f : model.features)
    if (f >= kFeatureCount) fail_at(at, "feature index out of range");
  ScorerProvenance prov{static_cast<int>(field::integer(j, "candidate_index", at)),
                        static_cast<int>(field::integer(j, "split_index", at)),
                        field::require(j, "seed", at).get<std::uint64_t>()};
  return ToyScorer(field::string(j, "scorer_id", at), std::move(model), std::move(hyper), prov);
}

inline Json ensemble_to_json(const Ensemble& e) {
  Json members = Json::array();
  for (std::size_t i = 0; i < e.members.size(); ++i) {
    Json m = scorer_to_json(e.members[i]);
    m["validation_auc"] = e.validation_aucs[i];
    members.push_back(std::move(m));
  }
  Json candidates = Json::array();
  for (const auto& c : e.candidates) candidates.push_back(Json{{"index", c.index}, {"validation_auc", c.validation_auc}});
  return Json{{"schema_version", kSchemaVersion}, {"kind", "ensemble"}, {"members", std::move(members)},
              {"candidates", std::move(candidates)}, {"skipped", e.skipped}};
}

inline Ensemble ensemble_from_json(const Json& j, const std::string& file = "ensemble.json") {
  const Locator at{file, 1};
  if (field::integer(j, "schema_version", at) != kSchemaVersion) fail_at(at, "unsupported schema_version");
  if (field::string(j, "kind", at) != "ensemble") fail_at(at, "not an ensemble file");
  Ensemble e;
  for (const auto& m : field::require(j, "members", at)) {
    e.members.push_back(scorer_from_json(m, at));
    e.validation_aucs.push_back(field::number(m, "validation_auc", at));
  }
  for (const auto& c : field::require(j, "candidates", at))
    e.candidates.push_back({static_cast<int>(field::integer(c, "index", at)), field::number(c, "validation_auc", at)});
  e.skipped = field::require(j, "skipped", at).get<std::vector<int>>();
  return e;
}

}  // namespace stagelab
