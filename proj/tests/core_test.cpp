#include <gtest/gtest.h>

#include "stagelab/core.hpp"
#include "stagelab/rng.hpp"

namespace stagelab {
namespace {

DatasetBundle tiny_bundle() {
  DatasetBundle b;
  b.patients = {{"P1", CancerSite::stomach, 64}, {"P2", CancerSite::pancreas, std::nullopt}};
  b.images = {{"I1", "images/I1.png", 100, 80}, {"I2", "images/I2.png", 50, 50}};
  LesionRecord l1{"L1", "P1", LesionSite::parietal, true, Pathology::metastasis, {"I1", {10, 10, 30, 30}}, {}};
  for (int k = 0; k < 10; ++k) l1.patches.push_back({"I2", {0, 0, 20, 20}});
  LesionRecord l2{"L2", "P2", LesionSite::liver_surface, false, Pathology::none, {"I1", {40, 40, 60, 60}}, {}};
  b.lesions = {l1, l2};
  return b;
}

bool has_message(const ValidationReport& r, const std::string& needle) {
  for (const auto& f : r.findings)
    if (f.message.find(needle) != std::string::npos) return true;
  return false;
}

TEST(BoundingBox, RejectsDegenerateAndNegative) {
  EXPECT_THROW(BoundingBox(5, 5, 5, 10), DataError);
  EXPECT_THROW(BoundingBox(5, 5, 10, 4), DataError);
  EXPECT_THROW(BoundingBox(-1, 0, 10, 10), DataError);
  EXPECT_NO_THROW(BoundingBox(0, 0, 0.5, 0.5));
}

TEST(BoundingBox, AreaAndBounds) {
  const BoundingBox b(2, 3, 12, 8);
  EXPECT_DOUBLE_EQ(b.area(), 50.0);
  EXPECT_TRUE(b.fits_within(12, 8));
  EXPECT_FALSE(b.fits_within(11, 8));
}

TEST(Enums, NamesRoundTrip) {
  for (auto s : {CancerSite::stomach, CancerSite::pancreas, CancerSite::biliary, CancerSite::small_intestine,
                 CancerSite::other})
    EXPECT_EQ(parse_cancer_site(to_string(s)), s);
  for (auto s : {LesionSite::parietal, LesionSite::liver_surface, LesionSite::other_visceral})
    EXPECT_EQ(parse_lesion_site(to_string(s)), s);
  for (auto p : {Pathology::benign, Pathology::metastasis, Pathology::indeterminate, Pathology::none})
    EXPECT_EQ(parse_pathology(to_string(p)), p);
  EXPECT_FALSE(parse_pathology("malignant"));
}

TEST(Lesion, ClassificationEligibility) {
  LesionRecord l;
  l.biopsied = true;
  l.pathology = Pathology::benign;
  EXPECT_TRUE(l.classification_eligible());
  l.pathology = Pathology::indeterminate;
  EXPECT_FALSE(l.classification_eligible());
  l.biopsied = false;
  l.pathology = Pathology::metastasis;
  EXPECT_FALSE(l.classification_eligible());
}

TEST(Validate, CleanBundleHasNoFindings) {
  const auto report = validate_bundle(tiny_bundle());
  EXPECT_TRUE(report.empty()) << report.findings.front().message;
}

TEST(Validate, ReportsEveryProblem) {
  auto b = tiny_bundle();
  b.patients.push_back({"P1", CancerSite::other, 12});
  b.lesions[1].patient_id = "P9";
  b.lesions[1].pathology = Pathology::benign;
  b.lesions[0].detection.box = BoundingBox(90, 70, 110, 90);
  b.lesions[0].patches.pop_back();
  b.images.push_back({"I1", "x.png", 0, 10});
  const auto r = validate_bundle(b);
  EXPECT_TRUE(has_message(r, "duplicate patient_id"));
  EXPECT_TRUE(has_message(r, "below 18"));
  EXPECT_TRUE(has_message(r, "missing patient"));
  EXPECT_TRUE(has_message(r, "non-biopsied lesion carries"));
  EXPECT_TRUE(has_message(r, "exceeds bounds"));
  EXPECT_TRUE(has_message(r, "duplicate image_id"));
  EXPECT_TRUE(has_message(r, "dimensions must be positive"));
  EXPECT_TRUE(has_message(r, "expected 10"));
  EXPECT_FALSE(r.valid());
  EXPECT_EQ(r.warning_count(), 1u);
}

TEST(Validate, IndeterminateIsWarningOnly) {
  auto b = tiny_bundle();
  b.lesions[0].pathology = Pathology::indeterminate;
  const auto r = validate_bundle(b);
  EXPECT_TRUE(r.valid());
  EXPECT_EQ(r.warning_count(), 1u);
  EXPECT_TRUE(b.eligible_lesions().empty());
}

TEST(Validate, UnknownImageReference) {
  auto b = tiny_bundle();
  b.lesions[0].patches[3].image_id = "nope";
  EXPECT_TRUE(has_message(validate_bundle(b), "unknown image 'nope'"));
}

TEST(Validate, MissingImageFileWithRoot) {
  const auto r = validate_bundle(tiny_bundle(), {std::filesystem::temp_directory_path() / "stagelab-absent"});
  EXPECT_EQ(r.error_count(), 2u);
}

TEST(Rng, DeterministicAndSeedSensitive) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_NE(Rng(42).uniform(), c.uniform());
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
}

TEST(Rng, BelowStaysInRange) {
  Rng r(7);
  std::vector<int> counts(5);
  for (int i = 0; i < 5000; ++i) ++counts[r.below(5)];
  for (int c : counts) EXPECT_GT(c, 850);
}

}  // namespace
}  // namespace stagelab
