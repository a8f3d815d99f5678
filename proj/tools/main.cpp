// Command-line entry point wiring synthesis, training, evaluation and the
// validation harnesses into reproducible runs.
//
// Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric fault.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "run_config.hpp"
#include "ugmcs/dataio.hpp"
#include "ugmcs/errors.hpp"
#include "ugmcs/evalharness.hpp"
#include "ugmcs/metrics.hpp"
#include "ugmcs/model.hpp"
#include "ugmcs/trainer.hpp"

namespace fs = std::filesystem;
using namespace ugmcs;

namespace {

struct SynthArgs {
  int count = 20;
  int annotators = 3;
  std::uint64_t seed = 0;
  std::string out;
};

struct RunArgs {
  std::string config_path;
  std::string dataset_override;
  std::string out_override;
  std::optional<std::uint64_t> seed_override;
  std::string label_override;
  int fold = 0;
  std::string checkpoint;
};

cli::RunConfig effective_config(const RunArgs& a) {
  cli::RunConfig cfg = cli::load_run_config(a.config_path);
  if (!a.dataset_override.empty()) cfg.dataset = a.dataset_override;
  if (!a.out_override.empty()) cfg.out_dir = a.out_override;
  if (a.seed_override) cfg.seed = *a.seed_override;
  if (!a.label_override.empty()) cfg.label = a.label_override;
  return cfg;
}

FoldSplit dataset_split(const std::vector<NoduleSample>& samples, int k,
                        std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.sample_id);
  return split_folds(ids, k, seed);
}

int run_synth(const SynthArgs& a) {
  if (a.out.empty()) throw invalid_input("--out is required");
  const auto samples = synth_generate(a.count, a.annotators, a.seed);
  fs::create_directories(a.out);
  save_manifest(samples, fs::path(a.out) / "manifest.json");
  std::cout << "wrote " << samples.size() << " samples ("
            << a.annotators << " annotators each) to " << a.out << "/manifest.json\n";
  return 0;
}

int run_train(const RunArgs& a) {
  cli::RunConfig cfg = effective_config(a);
  cfg.validate_for_training();
  if (a.fold < 0 || a.fold >= cfg.folds)
    throw invalid_input("--fold must be in [0, " + std::to_string(cfg.folds - 1) + "]");

  const auto samples = load_manifest(cfg.dataset);
  const FoldSplit split = dataset_split(samples, cfg.folds, cfg.seed);

  TrainConfig tc = cfg.train;
  if (tc.seed == 0) tc.seed = cfg.seed + static_cast<std::uint64_t>(a.fold) + 1;

  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  cli::write_config_echo(out / "config.json", cfg);

  const FitResult r = fit(samples, split, a.fold, cfg.net, tc, cfg.loss, out);
  std::cout << "fold " << a.fold << ": best held-out DSC " << r.best_val_dsc
            << "\ncheckpoints: " << r.final_checkpoint.string() << ", "
            << r.best_checkpoint.string() << '\n';
  return 0;
}

int run_eval(const RunArgs& a) {
  cli::RunConfig cfg = effective_config(a);
  cfg.validate_for_training();
  if (a.checkpoint.empty()) throw invalid_input("--checkpoint is required");
  if (a.fold < 0 || a.fold >= cfg.folds)
    throw invalid_input("--fold must be in [0, " + std::to_string(cfg.folds - 1) + "]");

  const auto samples = load_manifest(cfg.dataset);
  const FoldSplit split = dataset_split(samples, cfg.folds, cfg.seed);
  const Checkpoint ck = load_checkpoint(a.checkpoint, cfg.net);
  const auto recs = evaluate(ck, samples, split, a.fold, cfg.eval, cfg.train.threads);

  const fs::path reports = fs::path(cfg.out_dir) / "reports";
  fs::create_directories(reports);
  write_metrics_csv(reports / "metrics.csv", recs);

  double d = 0, i = 0, n = 0;
  for (const auto& r : recs) {
    d += r.dsc;
    i += r.iou;
    n += r.nsd;
  }
  const double cnt = static_cast<double>(recs.size());
  std::cout << "fold " << a.fold << " (" << recs.size() << " samples): DSC " << d / cnt
            << "  IoU " << i / cnt << "  NSD " << n / cnt << '\n'
            << "per-sample metrics: " << (reports / "metrics.csv").string() << '\n';
  return 0;
}

int run_crossval(const RunArgs& a) {
  cli::RunConfig cfg = effective_config(a);
  cfg.validate_for_training();

  const auto samples = load_manifest(cfg.dataset);
  const fs::path out(cfg.out_dir);
  fs::create_directories(out / "reports");
  cli::write_config_echo(out / "config.json", cfg);

  const RunReport rep = crossval(samples, cfg.folds, cfg.net, cfg.train, cfg.loss,
                                 cfg.eval, cfg.seed, out, cfg.label);
  write_run_report_json(out / "reports" / "report.json", rep);
  write_run_report_text(out / "reports" / "report.txt", rep);
  std::vector<MetricsRecord> rows;
  rows.reserve(rep.per_sample.size());
  for (const auto& r : rep.per_sample) rows.push_back(r.rec);
  write_metrics_csv(out / "reports" / "per_sample.csv", rows);

  std::cout << run_report_text(rep);
  std::cout << "reports: " << (out / "reports").string() << '\n';
  return 0;
}

int run_compare(const std::string& a_path, const std::string& b_path) {
  const RunReport a = read_run_report_json(a_path);
  const RunReport b = read_run_report_json(b_path);
  const ModelComparison cmp = compare_models(a, b);
  std::cout << "paired t-test over " << a.per_sample.size() << " samples ("
            << a.label << " vs " << b.label << ")\n";
  std::cout << "  DSC: t = " << cmp.dsc_test.t_value << ", p = " << cmp.dsc_test.p_value
            << '\n';
  std::cout << "  IoU: t = " << cmp.iou_test.t_value << ", p = " << cmp.iou_test.p_value
            << '\n';
  return 0;
}

int run_complex_val(const std::string& baseline_path,
                    const std::vector<std::string>& candidate_paths,
                    const std::vector<int>& thresholds, const std::string& out) {
  const RunReport base = read_run_report_json(baseline_path);
  std::vector<RunReport> candidates;
  candidates.reserve(candidate_paths.size());
  for (const auto& p : candidate_paths) candidates.push_back(read_run_report_json(p));

  const auto buckets = complex_validation(base, candidates, thresholds);
  std::cout << bucket_reports_text(buckets);
  if (!out.empty()) {
    write_bucket_reports_json(out, buckets);
    std::cout << "bucket report: " << out << '\n';
  }
  return 0;
}

int run_hu_analysis(const RunArgs& a, bool oracle, const std::string& dataset_direct,
                    const std::string& out_direct) {
  std::string dataset = dataset_direct;
  std::string out_dir = out_direct;
  std::optional<Checkpoint> model;

  if (!a.config_path.empty()) {
    const cli::RunConfig cfg = effective_config(a);
    if (dataset.empty()) dataset = cfg.dataset;
    if (out_dir.empty() && !cfg.out_dir.empty())
      out_dir = (fs::path(cfg.out_dir) / "reports").string();
  }
  if (dataset.empty())
    throw invalid_input("a dataset is required (--dataset or config)");
  if (!oracle) {
    if (a.checkpoint.empty())
      throw invalid_input("--checkpoint is required unless --oracle is given");
    model = load_checkpoint(a.checkpoint);
  }

  const auto samples = load_manifest(dataset);
  const HuAnalysis hu = hu_distribution_check(model, samples);
  std::cout << hu_analysis_text(hu);
  if (hu.lc_pred.mean_hu && hu.hc_pred.mean_hu) {
    std::cout << (*hu.lc_pred.mean_hu < *hu.hc_pred.mean_hu
                      ? "predicted LC mean HU is below predicted HC mean HU\n"
                      : "warning: predicted LC mean HU is NOT below predicted HC mean HU\n");
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    for (const RegionStats* r : {&hu.lc_actual, &hu.hc_actual, &hu.lc_pred, &hu.hc_pred})
      if (r->curve) write_kde_csv(dir / (r->name + ".csv"), *r->curve);
    std::cout << "kde curves: " << out_dir << '\n';
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-guided multi-confidence lung nodule segmentation"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-annotator dataset");
  synth->add_option("--count", synth_args.count, "Number of samples")->check(CLI::PositiveNumber);
  synth->add_option("--annotators", synth_args.annotators, "Annotators per sample (2-4)")
      ->check(CLI::Range(2, 4));
  synth->add_option("--seed", synth_args.seed, "Generator seed");
  synth->add_option("--out", synth_args.out, "Output directory")->required();

  RunArgs train_args;
  auto* train = app.add_subcommand("train", "Train one fold");
  train->add_option("--config", train_args.config_path, "Run config JSON")->required();
  train->add_option("--fold", train_args.fold, "Held-out fold index");
  train->add_option("--dataset", train_args.dataset_override, "Override dataset manifest");
  train->add_option("--out", train_args.out_override, "Override output directory");
  std::uint64_t train_seed = 0;
  auto* train_seed_opt = train->add_option("--seed", train_seed, "Override seed");

  RunArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a fold");
  eval_cmd->add_option("--config", eval_args.config_path, "Run config JSON")->required();
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--fold", eval_args.fold, "Fold index");
  eval_cmd->add_option("--dataset", eval_args.dataset_override, "Override dataset manifest");
  eval_cmd->add_option("--out", eval_args.out_override, "Override output directory");
  std::uint64_t eval_seed = 0;
  auto* eval_seed_opt = eval_cmd->add_option("--seed", eval_seed, "Override seed");

  RunArgs cv_args;
  auto* cv = app.add_subcommand("crossval", "K-fold cross-validation run");
  cv->add_option("--config", cv_args.config_path, "Run config JSON")->required();
  cv->add_option("--dataset", cv_args.dataset_override, "Override dataset manifest");
  cv->add_option("--out", cv_args.out_override, "Override output directory");
  cv->add_option("--label", cv_args.label_override, "Report label");
  std::uint64_t cv_seed = 0;
  auto* cv_seed_opt = cv->add_option("--seed", cv_seed, "Override seed");

  std::string cmp_a, cmp_b;
  auto* cmp = app.add_subcommand("compare", "Paired t-tests between two run reports");
  cmp->add_option("report_a", cmp_a, "First report JSON")->required();
  cmp->add_option("report_b", cmp_b, "Second report JSON")->required();

  std::string cx_baseline, cx_out;
  std::vector<std::string> cx_candidates;
  std::vector<int> cx_thresholds{60, 70, 80};
  auto* cx = app.add_subcommand("complex-val",
                                "Bucketed validation on hard-to-segment samples");
  cx->add_option("--baseline", cx_baseline, "Baseline report JSON")->required();
  cx->add_option("--candidate", cx_candidates, "Candidate report JSON (repeatable)")
      ->required();
  cx->add_option("--thresholds", cx_thresholds, "DSC thresholds in percent");
  cx->add_option("--out", cx_out, "Write bucket report JSON here");

  RunArgs hu_args;
  bool hu_oracle = false;
  std::string hu_dataset, hu_out;
  auto* hu = app.add_subcommand("hu-analysis",
                                "HU density comparison of confidence regions");
  hu->add_option("--config", hu_args.config_path, "Run config JSON");
  hu->add_option("--dataset", hu_dataset, "Dataset manifest");
  hu->add_option("--checkpoint", hu_args.checkpoint, "Checkpoint file");
  hu->add_flag("--oracle", hu_oracle, "Use ground-truth regions as predictions");
  hu->add_option("--out", hu_out, "Directory for KDE curve CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return run_synth(synth_args);
    if (*train) {
      if (train_seed_opt->count()) train_args.seed_override = train_seed;
      return run_train(train_args);
    }
    if (*eval_cmd) {
      if (eval_seed_opt->count()) eval_args.seed_override = eval_seed;
      return run_eval(eval_args);
    }
    if (*cv) {
      if (cv_seed_opt->count()) cv_args.seed_override = cv_seed;
      return run_crossval(cv_args);
    }
    if (*cmp) return run_compare(cmp_a, cmp_b);
    if (*cx) return run_complex_val(cx_baseline, cx_candidates, cx_thresholds, cx_out);
    if (*hu) return run_hu_analysis(hu_args, hu_oracle, hu_dataset, hu_out);
  } catch (const invalid_input& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const data_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const numeric_fault& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
