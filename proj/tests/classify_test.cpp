#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "stagelab/classify.hpp"
#include "stagelab/pipeline.hpp"
#include "support.hpp"

namespace stagelab {
namespace {

FeatureVector random_features(Rng& rng) {
  FeatureVector f{};
  for (auto& v : f) v = rng.normal(3.0, 2.0);
  return f;
}

// Gradient of mean logistic loss + l2/2 |w|^2 in the model's standardized
// coordinates, recomputed from the fitted model's predictions.
std::vector<double> objective_gradient(const LogisticModel& m, const std::vector<FeatureVector>& x,
                                       const std::vector<double>& y, double l2) {
  std::vector<double> g(m.features.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = m.predict(x[i]) - y[i];
    g[0] += r / x.size();
    for (std::size_t k = 0; k < m.features.size(); ++k)
      g[k + 1] += r * (x[i][m.features[k]] - m.center[k]) / m.scale[k] / x.size();
  }
  for (std::size_t k = 0; k < m.weights.size(); ++k) g[k + 1] += l2 * m.weights[k];
  return g;
}

TEST(Logistic, FitIsStationaryPoint) {
  Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    std::vector<FeatureVector> x;
    std::vector<double> y;
    for (int i = 0; i < 200; ++i) {
      x.push_back(random_features(rng));
      y.push_back(rng.bernoulli(1.0 / (1.0 + std::exp(-(x.back()[0] - 3.0)))) ? 1.0 : 0.0);
    }
    if (t % 2) y[0] = 0.3;  // soft label
    const double l2 = std::pow(10.0, rng.uniform(-4.0, -1.0));
    const auto m = fit_logistic(x, y, {0, 2, 5}, {l2, 1e-10, 100});
    EXPECT_TRUE(m.converged);
    for (double g : objective_gradient(m, x, y, l2)) EXPECT_NEAR(g, 0.0, 1e-8);
    EXPECT_GT(m.weights[0], 0.0);
  }
}

TEST(Logistic, RejectsBadInput) {
  EXPECT_THROW(fit_logistic({}, std::vector<double>{}, {0}), DataError);
  EXPECT_THROW(fit_logistic({FeatureVector{}}, std::vector<double>{1.0}, {}), UsageError);
}

TEST(Hyperparameters, WithinRanges) {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto h = draw_hyperparameters(rng);
    EXPECT_GE(h.l2, 1e-4);
    EXPECT_LE(h.l2, 1e-1);
    EXPECT_GE(h.features.size(), 4u);
    EXPECT_TRUE(std::is_sorted(h.features.begin(), h.features.end()));
    EXPECT_GE(h.cutmix_fraction, 0.0);
    EXPECT_LT(h.cutmix_fraction, 0.5);
  }
}

TEST(SelectTop, InvariantUnderPermutation) {
  std::vector<CandidateScore> c{{0, 0.7}, {1, 0.9}, {2, 0.7}, {3, 0.95}, {4, 0.6}, {5, 0.9}, {6, 0.1}};
  const std::vector<int> expected{3, 1, 5, 0, 2};
  std::vector<std::size_t> order(c.size());
  std::iota(order.begin(), order.end(), 0);
  do {
    std::vector<CandidateScore> shuffled;
    for (auto i : order) shuffled.push_back(c[i]);
    ASSERT_EQ(select_top(shuffled, 5), expected);
  } while (std::next_permutation(order.begin(), order.end()));
  EXPECT_THROW(select_top(c, 8), DataError);
  EXPECT_THROW(select_top(c, 0), UsageError);
}

TEST(Aggregation, MeanAndPatientMax) {
  EXPECT_DOUBLE_EQ(mean_probability(std::vector<double>{0.2, 0.4, 0.9}), 0.5);
  EXPECT_THROW(mean_probability(std::vector<double>{}), DataError);
  const auto groups = patient_max_probability(
      {"P1", "P2", "P3", "P4"}, {{"P1", {0.2, 0.7, 0.4}}, {"P2", {0.49}}, {"P3", {0.5, 0.1}}});
  ASSERT_EQ(groups.scored.size(), 3u);
  EXPECT_DOUBLE_EQ(groups.scored[0].max_probability, 0.7);
  EXPECT_EQ(groups.scored[0].group, PatientGroup::predicted_metastasis);
  EXPECT_EQ(groups.scored[1].group, PatientGroup::predicted_benign);
  EXPECT_EQ(groups.scored[2].group, PatientGroup::predicted_metastasis);
  EXPECT_EQ(groups.excluded, std::vector<std::string>{"P4"});
}

TEST(Aggregation, GroupsRoundTrip) {
  testing::TempDir dir;
  const auto groups = patient_max_probability({"A", "B", "C"}, {{"A", {0.9}}, {"B", {0.1}}});
  write_groups(groups, dir / "g.jsonl", 0.5);
  const auto loaded = load_groups(dir / "g.jsonl");
  ASSERT_EQ(loaded.scored.size(), 2u);
  EXPECT_EQ(loaded.scored[1].group, PatientGroup::predicted_benign);
  EXPECT_EQ(loaded.excluded, groups.excluded);
}

class ToyPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    auto cfg = testing::small_config(31, 24, 1.0);
    cfg.prevalence = 0.5;
    cohort_ = new SyntheticCohort(generate_synthetic_cohort(cfg));
    source_ = new InMemoryImageSource(image_source(*cohort_));
    patches_ = new std::vector<TrainingPatch>(extract_training_patches(cohort_->bundle, *source_, 32));
  }
  static void TearDownTestSuite() {
    delete patches_;
    delete source_;
    delete cohort_;
  }
  static SyntheticCohort* cohort_;
  static InMemoryImageSource* source_;
  static std::vector<TrainingPatch>* patches_;
};
SyntheticCohort* ToyPipeline::cohort_ = nullptr;
InMemoryImageSource* ToyPipeline::source_ = nullptr;
std::vector<TrainingPatch>* ToyPipeline::patches_ = nullptr;

TEST_F(ToyPipeline, SingleClassTrainingThrows) {
  std::vector<const TrainingPatch*> benign;
  for (const auto& p : *patches_)
    if (!p.metastasis) benign.push_back(&p);
  EXPECT_THROW(train_toy_scorer(benign, {}, 1), DataError);
}

TEST_F(ToyPipeline, EnsembleDeterministicAcrossThreadsAndRoundTrips) {
  EnsembleOptions opts;
  opts.candidates = 8;
  opts.keep = 3;
  opts.threads = 1;
  const auto a = build_ensemble(*patches_, 5, opts);
  opts.threads = 4;
  const auto b = build_ensemble(*patches_, 5, opts);
  EXPECT_EQ(ensemble_to_json(a).dump(), ensemble_to_json(b).dump());
  ASSERT_EQ(a.members.size(), 3u);
  EXPECT_TRUE(std::is_sorted(a.validation_aucs.rbegin(), a.validation_aucs.rend()));

  const auto c = ensemble_from_json(Json::parse(ensemble_to_json(a).dump()));
  for (const auto& p : *patches_) EXPECT_DOUBLE_EQ(c.predict(p.features), a.predict(p.features));
}

TEST_F(ToyPipeline, SeparableDataGivesHighLesionAuc) {
  ToyPipelineOptions opts;
  opts.folds = 4;
  opts.patch_size = 32;
  opts.ensemble.candidates = 6;
  opts.ensemble.keep = 3;
  const auto result = run_toy_cv(cohort_->bundle, *source_, 9, opts);
  std::vector<double> s;
  std::vector<bool> y;
  for (const auto& [id, p] : result.lesion_probability) {
    s.push_back(p);
    y.push_back(result.lesion_metastasis.at(id));
  }
  EXPECT_GE(auc_roc(s, y), 0.95);
  EXPECT_EQ(result.patch_scores.size(), patches_->size());
}

}  // namespace
}  // namespace stagelab
