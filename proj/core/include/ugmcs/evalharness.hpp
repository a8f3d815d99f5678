#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ugmcs/dataio.hpp"
#include "ugmcs/metrics.hpp"
#include "ugmcs/model.hpp"
#include "ugmcs/trainer.hpp"

namespace ugmcs {

struct EvalOptions {
  double threshold = 0.5;    // X_S binarization
  int annotation_index = 0;  // which annotation is the reference
  double nsd_tolerance = 1.0;
};

// Runs the checkpointed model over the held-out fold; one record per sample.
std::vector<MetricsRecord> evaluate(const Checkpoint& ck,
                                    const std::vector<NoduleSample>& dataset,
                                    const FoldSplit& split, int fold_index,
                                    const EvalOptions& opts = {}, int threads = 0);

struct FoldStats {
  int fold = -1; // -1 marks the overall row
  int n = 0;
  double dsc_mean = 0.0, dsc_std = 0.0;
  double iou_mean = 0.0, iou_std = 0.0;
  double nsd_mean = 0.0, nsd_std = 0.0;
};

struct SampleRow {
  int fold = 0;
  MetricsRecord rec;
};

struct RunReport {
  std::string label;
  std::uint64_t seed = 0;
  int k = 0;
  std::string net_config_json;
  std::string train_config_json;
  std::string loss_spec_json;
  std::vector<FoldStats> per_fold;
  FoldStats overall; // mean over fold means; std across fold means
  std::vector<SampleRow> per_sample;
};

// K-fold run: trains one model per fold (held out), evaluates each with its
// final checkpoint, and aggregates. Per-fold artifacts (checkpoints, logs) go
// under out_dir/fold<i>. Deterministic for a fixed (dataset, configs, seed).
RunReport crossval(const std::vector<NoduleSample>& dataset, int k,
                   const NetConfig& net_cfg, const TrainConfig& train_cfg,
                   const LossSpec& loss, const EvalOptions& eval_opts,
                   std::uint64_t seed, const std::filesystem::path& out_dir,
                   const std::string& label);

struct ModelComparison {
  PairedTestResult dsc_test;
  PairedTestResult iou_test;
};

// Paired t-tests over per-sample DSC and IoU; reports must cover the same
// sample ids.
ModelComparison compare_models(const RunReport& a, const RunReport& b);

struct RegionStats {
  std::string name;
  std::size_t pixel_count = 0;
  std::optional<double> mean_hu;   // absent when the region is empty
  std::optional<KdeCurve> curve;   // absent when too few values or no spread
};

struct HuAnalysis {
  RegionStats lc_actual, hc_actual, lc_pred, hc_pred;
};

// Pools HU values of the low/high-confidence regions across the corpus and
// estimates their densities. With a model, predictions come from the
// union/intersection heads at network resolution (HU recovered from the
// normalized input); without one, predictions are the ground-truth regions at
// native resolution.
HuAnalysis hu_distribution_check(const std::optional<Checkpoint>& model,
                                 const std::vector<NoduleSample>& dataset,
                                 int kde_points = 256, int threads = 0);

struct BucketReport {
  int threshold_percent = 0;
  std::string candidate_label;
  std::vector<std::string> selected_ids; // baseline DSC <= threshold, cumulative
  std::optional<double> baseline_dsc_mean, baseline_iou_mean;
  std::optional<double> candidate_dsc_mean, candidate_iou_mean;
  std::optional<double> delta_dsc, delta_iou; // candidate - baseline
};

// Complex-nodule buckets: membership from the baseline's per-sample DSC,
// candidate means over exactly those ids. Thresholds are inclusive and
// cumulative (60 subset of 70 subset of 80).
std::vector<BucketReport> complex_validation(
    const RunReport& baseline, const std::vector<RunReport>& candidates,
    const std::vector<int>& thresholds = {60, 70, 80});

// ---- report I/O ------------------------------------------------------------

void write_run_report_json(const std::filesystem::path& path, const RunReport& r);
RunReport read_run_report_json(const std::filesystem::path& path);
std::string run_report_text(const RunReport& r);
void write_run_report_text(const std::filesystem::path& path, const RunReport& r);

void write_kde_csv(const std::filesystem::path& path, const KdeCurve& curve);
std::string hu_analysis_text(const HuAnalysis& a);

std::string bucket_reports_text(const std::vector<BucketReport>& reports);
void write_bucket_reports_json(const std::filesystem::path& path,
                               const std::vector<BucketReport>& reports);

} // namespace ugmcs
