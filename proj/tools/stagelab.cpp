// stagelab: command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 numerical
// failure. STAGELAB_SEED supplies the seed when --seed is omitted.

// Eigen goes before httplib: <resolv.h> defines a `_res` macro.
#include "stagelab/cli.hpp"
#include "stagelab/study.hpp"

#include <httplib.h>

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "stagelab/study_http.hpp"

namespace fs = std::filesystem;
using namespace stagelab;

namespace {

struct ServeOptions {
  fs::path bundle, scores, journal;
  std::optional<fs::path> images;
  std::string scorer;
  std::optional<std::uint64_t> seed;
  std::string host = "127.0.0.1";
  int port = 8080;
};

int run_serve(const ServeOptions& o) {
  const DatasetBundle bundle = cli::load_valid_bundle(o.bundle);
  const std::uint64_t seed = cli::resolve_seed(o.seed);
  std::map<std::string, double> probs;
  for (const auto& l : cli::survey_lesions(bundle, cli::load_scores(o.scores, bundle, o.scorer)))
    probs[l.lesion_id] = l.model_probability;
  Study study(make_study_items(bundle, probs), seed, o.journal);
  if (!study.configured()) throw DataError("a study needs at least 20 lesions with model probabilities");

  httplib::Server server;
  const fs::path image_root = o.images.value_or(cli::default_image_root(o.bundle) / "images");
  mount_study_routes(server, study, image_root);
  if (!server.bind_to_port(o.host, o.port)) throw IoError("cannot bind " + o.host + ":" + std::to_string(o.port));
  std::cout << "serving " << probs.size() << " lesions on http://" << o.host << ':' << o.port << std::endl;
  server.listen_after_bind();
  return 0;
}

template <class E>
CLI::CheckedTransformer enum_option(const std::map<std::string, E>& names) {
  return CLI::CheckedTransformer(names, CLI::ignore_case);
}

void add_seed(CLI::App* cmd, std::optional<std::uint64_t>& seed) {
  cmd->add_option("--seed", seed, "random seed (default: $STAGELAB_SEED)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staging laparoscopy lesion analysis toolkit"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker threads (0: all cores)");
  Json result;
  std::function<Json()> action;

  cli::SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic cohort");
  c_synth->add_option("--config", synth.config, "key = value configuration file")->check(CLI::ExistingFile);
  add_seed(c_synth, synth.seed);
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->callback([&] { action = [&] { return cli::run_synth(synth); }; });

  cli::ValidateOptions validate;
  bool check_images = false;
  auto* c_validate = app.add_subcommand("validate", "validate a dataset bundle");
  c_validate->add_option("--bundle", validate.bundle)->required();
  c_validate->add_option("--images", validate.images, "decode images relative to this directory");
  c_validate->add_flag("--check-images", check_images, "decode images relative to the bundle directory");
  c_validate->callback([&] {
    if (check_images && !validate.images) validate.images = cli::default_image_root(validate.bundle);
    action = [&] {
      Json r = cli::run_validate(validate);
      if (!r["valid"].get<bool>()) {
        std::cout << r.dump(2) << '\n';
        throw DataError("bundle has " + std::to_string(r["errors"].get<std::size_t>()) + " validation error(s)");
      }
      return r;
    };
  });

  cli::SplitOptions split;
  auto* c_split = app.add_subcommand("split", "write train/validation/test split plans");
  c_split->require_subcommand(1);
  auto split_common = [&](CLI::App* cmd, cli::SplitKind kind) {
    cmd->add_option("--bundle", split.bundle)->required();
    cmd->add_option("--out", split.out, "splits.jsonl")->required();
    add_seed(cmd, split.seed);
    cmd->callback([&, kind] {
      split.kind = kind;
      action = [&] { return cli::run_split(split); };
    });
  };
  auto* c_split_patient = c_split->add_subcommand("patient", "patient-level train/validation/test trials");
  split_common(c_split_patient, cli::SplitKind::patient);
  c_split_patient->add_option("--trials", split.trials)->check(CLI::PositiveNumber);
  auto* c_split_kfold = c_split->add_subcommand("kfold", "lesion-level k folds");
  split_common(c_split_kfold, cli::SplitKind::kfold);
  c_split_kfold->add_option("--folds", split.folds);
  c_split_kfold->add_flag("--stratified", split.stratified, "balance labels across folds");
  auto* c_split_sub = c_split->add_subcommand("subsplits", "distinct train/validation subsplits of lesions");
  split_common(c_split_sub, cli::SplitKind::subsplits);
  c_split_sub->add_option("--n", split.n);
  c_split_sub->add_option("--validation-fraction", split.validation_fraction);

  cli::DetectOptions detect;
  auto* c_detect = app.add_subcommand("eval-detect", "precision-recall evaluation of lesion detections");
  c_detect->add_option("--bundle", detect.bundle)->required();
  auto* preds_opt = c_detect->add_option("--preds", detect.predictions, "predictions.jsonl with detection records");
  auto* perfect_opt = c_detect->add_option("--perfect-from", detect.perfect_from, "sidecar.jsonl; evaluate ground truth as predictions");
  preds_opt->excludes(perfect_opt);
  c_detect->add_option("--iou-threshold", detect.iou_threshold);
  c_detect->add_option("--conf-threshold", detect.confidence_threshold);
  c_detect->add_option("--hit-rule", detect.hit_rule)
      ->transform(enum_option<HitRule>({{"at_least", HitRule::at_least}, {"greater_than", HitRule::greater_than}}));
  c_detect->add_option("--integration", detect.integration)
      ->transform(enum_option<PRIntegration>({{"step", PRIntegration::step}, {"trapezoid", PRIntegration::trapezoid}}));
  c_detect->add_option("--bootstrap", detect.bootstrap, "bootstrap replicates over images");
  add_seed(c_detect, detect.seed);
  c_detect->add_option("--out", detect.out)->required();
  c_detect->callback([&] {
    detect.threads = threads;
    action = [&] { return cli::run_eval_detect(detect); };
  });

  cli::ClassifyOptions classify;
  auto* c_classify = app.add_subcommand("eval-classify", "ROC evaluation of lesion classification");
  c_classify->add_option("--bundle", classify.bundle)->required();
  auto* scores_opt = c_classify->add_option("--scores", classify.scores, "predictions.jsonl with score records");
  auto* toy_opt = c_classify->add_flag("--train-toy", classify.train_toy, "cross-validate the built-in toy ensemble");
  scores_opt->excludes(toy_opt);
  c_classify->add_option("--scorer", classify.scorer);
  c_classify->add_option("--images", classify.images, "image root (default: bundle directory)");
  c_classify->add_option("--folds", classify.folds);
  c_classify->add_option("--candidates", classify.ensemble.candidates);
  c_classify->add_option("--keep", classify.ensemble.keep);
  c_classify->add_option("--replicates", classify.replicates, "bootstrap replicates");
  std::string unit = "lesion";
  c_classify->add_option("--unit", unit, "bootstrap resampling unit")->check(CLI::IsMember({"lesion", "patient"}));
  add_seed(c_classify, classify.seed);
  c_classify->add_option("--out", classify.out)->required();
  c_classify->callback([&] {
    classify.threads = threads;
    classify.unit = *parse_resampling_unit(unit);
    action = [&] { return cli::run_eval_classify(classify); };
  });

  cli::EnsembleCliOptions ensemble;
  auto* c_ensemble = app.add_subcommand("ensemble", "train the toy ensemble on a bundle");
  c_ensemble->add_option("--train", ensemble.train, "training bundle")->required();
  c_ensemble->add_option("--images", ensemble.images);
  c_ensemble->add_option("--score", ensemble.score, "bundle to score with the trained ensemble");
  c_ensemble->add_option("--score-images", ensemble.score_images);
  c_ensemble->add_option("--candidates", ensemble.ensemble.candidates);
  c_ensemble->add_option("--keep", ensemble.ensemble.keep);
  c_ensemble->add_option("--validation-fraction", ensemble.ensemble.validation_fraction);
  add_seed(c_ensemble, ensemble.seed);
  c_ensemble->add_option("--out", ensemble.out)->required();
  c_ensemble->callback([&] {
    ensemble.ensemble.threads = threads;
    action = [&] { return cli::run_ensemble(ensemble); };
  });

  cli::GroupsOptions groups;
  auto* c_groups = app.add_subcommand("groups", "patient groups from maximum lesion probability");
  c_groups->add_option("--bundle", groups.bundle)->required();
  c_groups->add_option("--scores", groups.scores)->required();
  c_groups->add_option("--scorer", groups.scorer);
  c_groups->add_option("--threshold", groups.threshold);
  c_groups->add_option("--lesions", groups.lesions, "which lesions contribute")
      ->transform(enum_option<cli::LesionFilter>({{"all", cli::LesionFilter::all},
                                                  {"biopsied", cli::LesionFilter::biopsied},
                                                  {"nonbiopsied", cli::LesionFilter::nonbiopsied}}));
  c_groups->add_option("--out", groups.out, "groups.jsonl")->required();
  c_groups->callback([&] { action = [&] { return cli::run_groups(groups); }; });

  cli::SurvivalOptions survival;
  auto* c_survival = app.add_subcommand("survival", "Kaplan-Meier and Cox comparison of patient groups");
  c_survival->add_option("--outcomes", survival.outcomes, "outcomes.jsonl or outcomes.csv")->required();
  c_survival->add_option("--groups", survival.groups)->required();
  std::string endpoint = "dfs";
  c_survival->add_option("--endpoint", endpoint)->check(CLI::IsMember({"dfs", "pcfs"}));
  c_survival->add_option("--out", survival.out)->required();
  c_survival->callback([&] {
    survival.endpoint = *parse_endpoint(endpoint);
    action = [&] { return cli::run_survival(survival); };
  });

  auto* c_survey = app.add_subcommand("survey", "reader survey planning and analysis");
  c_survey->require_subcommand(1);
  cli::SurveyPlanOptions plan;
  auto* c_plan = c_survey->add_subcommand("plan", "block-randomized item assignments");
  c_plan->add_option("--bundle", plan.bundle)->required();
  c_plan->add_option("--scores", plan.scores)->required();
  c_plan->add_option("--scorer", plan.scorer);
  c_plan->add_option("--respondents", plan.respondents);
  add_seed(c_plan, plan.seed);
  c_plan->add_option("--out", plan.out, "assignments.jsonl")->required();
  c_plan->callback([&] { action = [&] { return cli::run_survey_plan(plan); }; });
  cli::SurveySimulateOptions simulate;
  auto* c_sim = c_survey->add_subcommand("simulate", "simulate survey responses");
  c_sim->add_option("--bundle", simulate.bundle)->required();
  c_sim->add_option("--scores", simulate.scores)->required();
  c_sim->add_option("--scorer", simulate.scorer);
  c_sim->add_option("--respondents", simulate.respondents);
  add_seed(c_sim, simulate.seed);
  c_sim->add_option("--out", simulate.out, "responses.jsonl")->required();
  c_sim->callback([&] { action = [&] { return cli::run_survey_simulate(simulate); }; });
  cli::SurveyReportOptions survey_report;
  auto* c_sreport = c_survey->add_subcommand("report", "decision and statistics reports for survey responses");
  c_sreport->add_option("--bundle", survey_report.bundle)->required();
  c_sreport->add_option("--scores", survey_report.scores)->required();
  c_sreport->add_option("--scorer", survey_report.scorer);
  c_sreport->add_option("--responses", survey_report.responses)->required();
  c_sreport->add_option("--replicates", survey_report.replicates);
  c_sreport->add_option("--threshold", survey_report.threshold);
  add_seed(c_sreport, survey_report.seed);
  c_sreport->add_option("--out", survey_report.out)->required();
  c_sreport->callback([&] {
    survey_report.threads = threads;
    action = [&] { return cli::run_survey_report(survey_report); };
  });

  ServeOptions serve;
  auto* c_serve = app.add_subcommand("serve", "run the reader-study HTTP service");
  c_serve->add_option("--bundle", serve.bundle)->required();
  c_serve->add_option("--scores", serve.scores)->required();
  c_serve->add_option("--scorer", serve.scorer);
  c_serve->add_option("--images", serve.images, "directory served under /images");
  c_serve->add_option("--journal", serve.journal)->required();
  c_serve->add_option("--host", serve.host);
  c_serve->add_option("--port", serve.port);
  add_seed(c_serve, serve.seed);

  cli::ReportOptions report;
  bool all = false;
  auto* c_report = app.add_subcommand("report", "run every analysis over a synthetic cohort directory");
  c_report->add_flag("--all", all)->required();
  c_report->add_option("--cohort", report.cohort, "directory written by synth")->required();
  c_report->add_option("--scorer", report.scorer);
  c_report->add_option("--replicates", report.replicates);
  c_report->add_option("--respondents", report.respondents);
  add_seed(c_report, report.seed);
  c_report->add_option("--out", report.out)->required();
  c_report->callback([&] {
    report.threads = threads;
    action = [&] { return cli::run_report(report); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (c_serve->parsed()) return run_serve(serve);
    result = action();
    std::cout << result.dump(2) << '\n';
    return 0;
  } catch (const Error& e) {
    std::cerr << "stagelab: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "stagelab: " << e.what() << '\n';
    return static_cast<int>(ExitCode::data);
  } catch (const Json::exception& e) {
    std::cerr << "stagelab: malformed JSON: " << e.what() << '\n';
    return static_cast<int>(ExitCode::data);
  }
}
