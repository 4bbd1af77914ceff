#include <gtest/gtest.h>

#include "stagelab/config.hpp"
#include "stagelab/roc.hpp"
#include "stagelab/synthetic.hpp"
#include "support.hpp"

namespace stagelab {
namespace {

TEST(Synthetic, RequiresSeed) {
  SyntheticConfig cfg;
  EXPECT_THROW(generate_synthetic_cohort(cfg), UsageError);
}

TEST(Synthetic, DeterministicForSeed) {
  const auto a = generate_synthetic_cohort(testing::small_config(21));
  const auto b = generate_synthetic_cohort(testing::small_config(21));
  const auto c = generate_synthetic_cohort(testing::small_config(22));
  EXPECT_EQ(a.bundle, b.bundle);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.outcomes, b.outcomes);
  EXPECT_NE(a.bundle, c.bundle);
}

TEST(Synthetic, BundleValidatesWithImagesOnDisk) {
  testing::TempDir dir;
  const auto cohort = generate_synthetic_cohort(testing::small_config(4));
  write_cohort(cohort, dir.path());
  const auto report = validate_bundle(load_bundle(dir / "bundle.jsonl"), {dir.path()});
  EXPECT_EQ(report.error_count(), 0u);
  EXPECT_EQ(report.warning_count(), 0u);
  EXPECT_EQ(cohort.bundle.provenance.created, "");
}

TEST(Synthetic, BiopsiedLesionsCarryTenPatchesAndScores) {
  const auto cohort = generate_synthetic_cohort(testing::small_config(6, 12));
  std::map<std::string, int> scores;
  for (const auto& s : cohort.predictions.scores) ++scores[s.lesion_id];
  for (const auto& l : cohort.bundle.lesions) {
    EXPECT_EQ(scores[l.lesion_id], static_cast<int>(l.patches.size()));
    if (l.biopsied) EXPECT_EQ(l.patches.size(), kExpectedPatchesPerLesion);
    else EXPECT_EQ(l.pathology, Pathology::none);
  }
}

TEST(Synthetic, PatchScoreAucTracksSeparability) {
  auto cfg = testing::small_config(8, 200, 0.8);
  const auto cohort = generate_synthetic_cohort(cfg);
  std::vector<double> s;
  std::vector<bool> y;
  for (const auto& rec : cohort.predictions.scores) {
    const auto* l = cohort.bundle.find_lesion(rec.lesion_id);
    if (!l->classification_eligible()) continue;
    s.push_back(rec.probability);
    y.push_back(l->is_metastasis());
  }
  EXPECT_NEAR(roc_curve(s, y).auc_roc, 0.8, 0.03);
}

TEST(Synthetic, PerfectSeparabilityIsDisjoint) {
  const auto cohort = generate_synthetic_cohort(testing::small_config(8, 30, 1.0));
  std::vector<double> s;
  std::vector<bool> y;
  for (const auto& rec : cohort.predictions.scores) {
    const auto* l = cohort.bundle.find_lesion(rec.lesion_id);
    if (!l->classification_eligible()) continue;
    s.push_back(rec.probability);
    y.push_back(l->is_metastasis());
  }
  EXPECT_DOUBLE_EQ(roc_curve(s, y).auc_roc, 1.0);
}

TEST(Config, ParsesKeysAndRejectsUnknown) {
  const auto kv = KeyValueConfig::parse("# cohort\nseed = 5\nn_patients = 3\n\nseparability = perfect\n");
  const auto cfg = synthetic_config_from(kv);
  EXPECT_EQ(cfg.seed, 5u);
  EXPECT_EQ(cfg.n_patients, 3);
  EXPECT_DOUBLE_EQ(cfg.separability, 1.0);
  EXPECT_DOUBLE_EQ(synthetic_config_from(KeyValueConfig::parse("separability = 0.9")).separability, 0.9);
  EXPECT_THROW(synthetic_config_from(KeyValueConfig::parse("seed = 5\nn_patiants = 3")), UsageError);
  EXPECT_THROW(KeyValueConfig::parse("seed = 1\nseed = 2"), DataError);
  EXPECT_THROW(synthetic_config_from(KeyValueConfig::parse("n_patients = many")), DataError);
}

}  // namespace
}  // namespace stagelab
