#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "stagelab/ingest.hpp"
#include "stagelab/survey.hpp"
#include "stagelab/survival.hpp"
#include "support.hpp"

namespace stagelab {
namespace {

namespace fs = std::filesystem;

int run(const std::string& args, const fs::path& log = {}) {
  std::string cmd = std::string("env -u STAGELAB_SEED ") + STAGELAB_CLI + " " + args;
  cmd += log.empty() ? " > /dev/null 2>&1" : " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Json run_json(const std::string& args, const fs::path& log) {
  EXPECT_EQ(run(args, log), 0) << read_text(log);
  return Json::parse(read_text(log));
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir();
    write_text_atomic(*dir_ / "cohort.cfg",
                      "n_patients = 30\nlesions_per_patient_mean = 10\nlesions_per_patient_sd = 5\n");
    write_text_atomic(*dir_ / "perfect.cfg",
                      "n_patients = 20\nlesions_per_patient_mean = 4\nlesions_per_patient_sd = 2\n"
                      "separability = perfect\nprevalence = 0.5\n");
    ASSERT_EQ(run("synth --config " + path("cohort.cfg") + " --seed 11 --out " + path("cohort")), 0);
    ASSERT_EQ(run("synth --config " + path("perfect.cfg") + " --seed 12 --out " + path("perfect")), 0);
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::string path(const std::string& name) { return "'" + (*dir_ / name).string() + "'"; }
  static fs::path file(const std::string& name) { return *dir_ / name; }

  static testing::TempDir* dir_;
};
testing::TempDir* Cli::dir_ = nullptr;

TEST_F(Cli, SynthIsDeterministic) {
  ASSERT_EQ(run("synth --config " + path("cohort.cfg") + " --seed 11 --out " + path("again")), 0);
  for (const char* f : {"bundle.jsonl", "predictions.jsonl", "outcomes.jsonl", "outcomes.csv", "sidecar.jsonl"})
    EXPECT_EQ(read_text(file("cohort") / f), read_text(file("again") / f)) << f;
}

TEST_F(Cli, SeedFromEnvironmentAndMissingSeed) {
  EXPECT_EQ(run("synth --config " + path("cohort.cfg") + " --out " + path("noseed")), 1);
  const std::string cmd = std::string("STAGELAB_SEED=11 ") + STAGELAB_CLI + " synth --config " + path("cohort.cfg") +
                          " --out " + path("envseed") + " > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(read_text(file("cohort") / "bundle.jsonl"), read_text(file("envseed") / "bundle.jsonl"));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("validate --bundle " + path("cohort/bundle.jsonl") + " --check-images"), 0);
  EXPECT_EQ(run("validate --bundle " + path("missing.jsonl")), 2);
  EXPECT_EQ(run("validate"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("--help"), 0);
  write_text_atomic(file("broken.jsonl"), "{\"schema_version\":1,\"kind\":\"bundle\"}\n{bad\n");
  EXPECT_EQ(run("validate --bundle " + path("broken.jsonl")), 2);
  EXPECT_EQ(run("eval-classify --bundle " + path("cohort/bundle.jsonl") + " --out " + path("x")), 1);
}

TEST_F(Cli, PerfectDetectionHasUnitAucPr) {
  const fs::path log = file("detect.log");
  run_json("eval-detect --bundle " + path("cohort/bundle.jsonl") + " --perfect-from " + path("cohort/sidecar.jsonl") +
               " --bootstrap 100 --seed 1 --out " + path("detect"),
           log);
  const Json report = Json::parse(read_text(file("detect") / "detect_report.json"));
  EXPECT_DOUBLE_EQ(report["auc_pr"].get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(file("detect") / "pr_curve.csv"));
  EXPECT_TRUE(fs::exists(file("detect") / "pr_curve.svg"));
}

TEST_F(Cli, ToyTrainingOnSeparableDataAndReingestion) {
  const fs::path log = file("toy.log");
  run_json("eval-classify --bundle " + path("perfect/bundle.jsonl") +
               " --train-toy --folds 4 --candidates 8 --keep 3 --replicates 100 --seed 3 --out " + path("toy"),
           log);
  const Json report = Json::parse(read_text(file("toy") / "classify_report.json"));
  EXPECT_GE(report["lesion"]["auc_roc"].get<double>(), 0.95);
  const auto bundle = load_bundle(file("perfect") / "bundle.jsonl");
  const auto scores = load_predictions(file("toy") / "scores.jsonl", bundle);
  EXPECT_FALSE(scores.scores.empty());

  // Same seed, same bytes, regardless of thread count.
  run_json("--threads 1 eval-classify --bundle " + path("perfect/bundle.jsonl") +
               " --train-toy --folds 4 --candidates 8 --keep 3 --replicates 100 --seed 3 --out " + path("toy1"),
           log);
  EXPECT_EQ(read_text(file("toy") / "scores.jsonl"), read_text(file("toy1") / "scores.jsonl"));
  EXPECT_EQ(read_text(file("toy") / "classify_report.json"), read_text(file("toy1") / "classify_report.json"));
}

TEST_F(Cli, GroupsAndSurvival) {
  const fs::path log = file("surv.log");
  run_json("groups --bundle " + path("cohort/bundle.jsonl") + " --scores " + path("cohort/predictions.jsonl") +
               " --out " + path("groups.jsonl"),
           log);
  const auto groups = load_groups(file("groups.jsonl"));
  EXPECT_FALSE(groups.scored.empty());
  run_json("survival --outcomes " + path("cohort/outcomes.csv") + " --groups " + path("groups.jsonl") +
               " --endpoint dfs --out " + path("surv"),
           log);
  const Json report = Json::parse(read_text(file("surv") / "survival_report.json"));
  EXPECT_TRUE(report.contains("cox"));
  EXPECT_TRUE(fs::exists(file("surv") / "km_curve.csv"));

  OutcomeSet none;
  for (const auto& o : load_outcomes(file("cohort") / "outcomes.jsonl"))
    none.push_back({o.patient_id, o.followup_days, false, std::nullopt, false, std::nullopt});
  write_outcomes(none, file("none.jsonl"));
  EXPECT_EQ(run("survival --outcomes " + path("none.jsonl") + " --groups " + path("groups.jsonl") + " --out " +
                path("surv_none")),
            2);
}

TEST_F(Cli, SurveyPipeline) {
  const fs::path log = file("survey.log");
  const std::string common = " --bundle " + path("cohort/bundle.jsonl") + " --scores " + path("cohort/predictions.jsonl");
  const Json plan = run_json("survey plan" + common + " --respondents 30 --seed 2 --out " + path("assign.jsonl"), log);
  EXPECT_LE(plan["exposure_spread"]["unlabeled"].get<int>(), 1);
  EXPECT_EQ(load_assignments(file("assign.jsonl")).size(), 30u);
  run_json("survey simulate" + common + " --respondents 30 --seed 2 --out " + path("resp.jsonl"), log);
  EXPECT_EQ(load_survey_set(file("resp.jsonl")).responses.size(), 600u);
  run_json("survey report" + common + " --responses " + path("resp.jsonl") + " --replicates 100 --seed 2 --out " +
               path("sreport"),
           log);
  const Json decision = Json::parse(read_text(file("sreport") / "decision_report.json"));
  EXPECT_TRUE(decision.contains("policies"));
  EXPECT_TRUE(fs::exists(file("sreport") / "stats_report.json"));
  EXPECT_TRUE(fs::exists(file("sreport") / "surgeon_vs_model.svg"));
}

TEST_F(Cli, ReportAll) {
  const fs::path log = file("report.log");
  run_json("report --all --cohort " + path("cohort") + " --replicates 100 --respondents 20 --seed 4 --out " +
               path("report"),
           log);
  const Json report = Json::parse(read_text(file("report") / "report.json"));
  EXPECT_EQ(report["failed_sections"], 0) << report.dump(2);
}

}  // namespace
}  // namespace stagelab
