#include <set>

#include <gtest/gtest.h>

#include "stagelab/splitters.hpp"
#include "support.hpp"

namespace stagelab {
namespace {

std::vector<std::string> ids(const char* prefix, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

TEST(PatientSplit, DefaultCountsFor132) {
  const auto plans = patient_level_splits(ids("P", 132), 3, 1);
  ASSERT_EQ(plans.size(), 3u);
  for (const auto& p : plans) {
    EXPECT_EQ(p.train.size(), 94u);
    EXPECT_EQ(p.validation.size(), 11u);
    EXPECT_EQ(p.test.size(), 27u);
  }
  EXPECT_NE(plans[0].test, plans[1].test);
}

TEST(PatientSplit, PartitionsAreDisjointAndCover) {
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    const int n = 12 + static_cast<int>(rng.below(200));
    const auto all = ids("P", n);
    for (const auto& p : patient_level_splits(all, 2, rng.next_u64())) {
      std::set<std::string> seen;
      for (const auto* part : {&p.train, &p.validation, &p.test})
        for (const auto& id : *part) EXPECT_TRUE(seen.insert(id).second);
      EXPECT_EQ(seen, as_set(all));
    }
  }
}

TEST(PatientSplit, DeterministicAndRejectsDuplicates) {
  EXPECT_EQ(patient_level_splits(ids("P", 40), 5, 3), patient_level_splits(ids("P", 40), 5, 3));
  EXPECT_THROW(patient_level_splits({"A", "A", "B"}, 1, 1), DataError);
  EXPECT_THROW(patient_level_splits(ids("P", 10), 0, 1), UsageError);
}

TEST(LesionKfold, EachLesionTestedOnce) {
  const auto all = ids("L", 103);
  const auto plans = lesion_kfold(all, 10, 4);
  std::map<std::string, int> tested;
  for (const auto& p : plans) {
    EXPECT_TRUE(p.test.size() == 10 || p.test.size() == 11);
    EXPECT_EQ(p.train.size() + p.test.size(), all.size());
    for (const auto& id : p.test) ++tested[id];
    auto train = as_set(p.train);
    for (const auto& id : p.test) EXPECT_FALSE(train.contains(id));
  }
  for (const auto& id : all) EXPECT_EQ(tested[id], 1);
  EXPECT_THROW(lesion_kfold(ids("L", 3), 4, 1), DataError);
  EXPECT_THROW(lesion_kfold(all, 1, 1), UsageError);
}

TEST(LesionKfold, StratifiedBalancesLabels) {
  const auto all = ids("L", 50);
  std::vector<bool> labels(50);
  for (int i = 0; i < 50; ++i) labels[i] = i % 5 == 0;
  const auto plans = stratified_lesion_kfold(all, labels, 5, 2);
  for (const auto& p : plans) {
    int pos = 0;
    for (const auto& id : p.test) pos += std::stoi(id.substr(1)) % 5 == 0;
    EXPECT_EQ(pos, 2);
    EXPECT_EQ(p.test.size(), 10u);
  }
}

TEST(Subsplits, DistinctValidationSets) {
  const auto plans = random_subsplits(ids("L", 30), 200, 0.2, 6);
  std::set<std::vector<std::string>> seen;
  for (const auto& p : plans) {
    EXPECT_EQ(p.validation.size(), 6u);
    EXPECT_EQ(p.train.size(), 24u);
    EXPECT_TRUE(seen.insert(p.validation).second);
  }
  // C(4, 2) = 6 distinct sets exist.
  EXPECT_NO_THROW(random_subsplits(ids("L", 4), 6, 0.5, 1));
  EXPECT_THROW(random_subsplits(ids("L", 4), 7, 0.5, 1), DataError);
}

TEST(Splits, JsonlRoundTrip) {
  testing::TempDir dir;
  auto plans = patient_level_splits(ids("P", 20), 3, 8);
  write_splits(plans, dir / "s.jsonl");
  EXPECT_EQ(load_splits(dir / "s.jsonl"), plans);
}

}  // namespace
}  // namespace stagelab
