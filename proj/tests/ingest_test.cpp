#include <fstream>

#include <gtest/gtest.h>

#include "stagelab/ingest.hpp"
#include "stagelab/synthetic.hpp"
#include "support.hpp"

namespace stagelab {
namespace {

using testing::TempDir;

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << "\n";
}

TEST(Bundle, RoundTripsThroughJsonl) {
  TempDir dir;
  const auto cohort = generate_synthetic_cohort(testing::small_config(3));
  write_bundle(cohort.bundle, dir / "bundle.jsonl");
  EXPECT_EQ(load_bundle(dir / "bundle.jsonl"), cohort.bundle);
}

TEST(Bundle, RejectsWrongKindAndVersion) {
  TempDir dir;
  write_lines(dir / "a.jsonl", {R"({"schema_version":1,"kind":"predictions"})"});
  EXPECT_THROW(load_bundle(dir / "a.jsonl"), DataError);
  write_lines(dir / "b.jsonl", {R"({"schema_version":2,"kind":"bundle"})"});
  EXPECT_THROW(load_bundle(dir / "b.jsonl"), DataError);
}

TEST(Bundle, MissingFileIsIoError) {
  EXPECT_THROW(load_bundle("/nonexistent/bundle.jsonl"), IoError);
}

TEST(Jsonl, MalformedLineNamesFileAndLine) {
  TempDir dir;
  write_lines(dir / "p.jsonl", {R"({"schema_version":1,"kind":"predictions"})", "{oops"});
  try {
    read_predictions(dir / "p.jsonl");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("p.jsonl:2"), std::string::npos) << e.what();
  }
}

TEST(Predictions, RoundTripAndValidation) {
  TempDir dir;
  PredictionSet set;
  set.detections.push_back({"I1", {1, 2, 3, 4}, 0.9});
  set.scores.push_back({"L1", 0, 0.25, "m"});
  set.scores.push_back({"L1", 1, 0.75, "m"});
  write_predictions(set, dir / "p.jsonl");
  EXPECT_EQ(read_predictions(dir / "p.jsonl"), set);
  EXPECT_EQ(set.scorer_ids(), std::vector<std::string>{"m"});

  DatasetBundle bundle;
  bundle.lesions.push_back({});
  bundle.lesions[0].lesion_id = "L2";
  bundle.images.push_back({"I1", "x", 10, 10});
  try {
    load_predictions(dir / "p.jsonl", bundle);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("lesion:L1"), std::string::npos);
  }
}

TEST(Predictions, RejectsOutOfRangeProbabilityAndDuplicates) {
  TempDir dir;
  const std::string header = R"({"schema_version":1,"kind":"predictions"})";
  write_lines(dir / "a.jsonl",
              {header, R"({"type":"score","lesion_id":"L","patch_index":0,"probability":1.5,"scorer_id":"s"})"});
  EXPECT_THROW(read_predictions(dir / "a.jsonl"), DataError);
  const std::string rec = R"({"type":"score","lesion_id":"L","patch_index":0,"probability":0.5,"scorer_id":"s"})";
  write_lines(dir / "b.jsonl", {header, rec, rec});
  EXPECT_THROW(read_predictions(dir / "b.jsonl"), DataError);
  write_lines(dir / "c.jsonl",
              {header, R"({"type":"detection","image_id":"I","box":[5,5,5,9],"confidence":0.5})"});
  EXPECT_THROW(read_predictions(dir / "c.jsonl"), DataError);
}

TEST(Outcomes, JsonlAndCsvAgree) {
  TempDir dir;
  const auto cohort = generate_synthetic_cohort(testing::small_config(5, 20));
  write_outcomes(cohort.outcomes, dir / "o.jsonl");
  write_outcomes_csv(cohort.outcomes, dir / "o.csv");
  EXPECT_EQ(load_outcomes(dir / "o.jsonl"), cohort.outcomes);
  EXPECT_EQ(load_outcomes(dir / "o.csv"), cohort.outcomes);
}

TEST(Outcomes, RejectsInconsistentEvents) {
  TempDir dir;
  const std::string header(kOutcomeCsvHeader);
  write_lines(dir / "a.csv", {header, "P1,100,1,,0,"});
  EXPECT_THROW(load_outcomes(dir / "a.csv"), DataError);
  write_lines(dir / "b.csv", {header, "P1,100,1,150,0,"});
  EXPECT_THROW(load_outcomes(dir / "b.csv"), DataError);
  write_lines(dir / "c.csv", {header, "P1,100,0,,0,", "P1,90,0,,0,"});
  EXPECT_THROW(load_outcomes(dir / "c.csv"), DataError);
  write_lines(dir / "d.csv", {"id,days", "P1,100"});
  EXPECT_THROW(load_outcomes(dir / "d.csv"), DataError);
  write_lines(dir / "e.csv", {header, "P1,100,0,,0,"});
  EXPECT_EQ(load_outcomes(dir / "e.csv").size(), 1u);
}

TEST(Sidecar, RoundTripAndPerfectDetections) {
  TempDir dir;
  const auto cohort = generate_synthetic_cohort(testing::small_config(9));
  write_sidecar(cohort.sidecar, dir / "s.jsonl");
  const Sidecar loaded = load_sidecar(dir / "s.jsonl");
  EXPECT_EQ(loaded, cohort.sidecar);
  const auto perfect = perfect_detections(loaded);
  ASSERT_EQ(perfect.detections.size(), cohort.bundle.lesions.size());
  for (const auto& d : perfect.detections) EXPECT_EQ(d.confidence, 1.0);
}

}  // namespace
}  // namespace stagelab
