#include "ugmcs/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ugmcs/errors.hpp"
#include "ugmcs/parallel.hpp"

namespace ugmcs {

using nlohmann::json;

namespace {

Mask binarize_plane(const Tensor& prob, double threshold) {
  Mask m(prob.dim(1), prob.dim(2));
  for (std::size_t i = 0; i < m.v.size(); ++i)
    m.v[i] = prob.data[i] >= threshold ? 1 : 0;
  return m;
}

FoldStats stats_over(int fold, const std::vector<MetricsRecord>& recs) {
  FoldStats s;
  s.fold = fold;
  s.n = static_cast<int>(recs.size());
  if (recs.empty()) return s;
  for (const auto& r : recs) {
    s.dsc_mean += r.dsc;
    s.iou_mean += r.iou;
    s.nsd_mean += r.nsd;
  }
  s.dsc_mean /= s.n;
  s.iou_mean /= s.n;
  s.nsd_mean /= s.n;
  if (s.n >= 2) {
    double a = 0, b = 0, c = 0;
    for (const auto& r : recs) {
      a += (r.dsc - s.dsc_mean) * (r.dsc - s.dsc_mean);
      b += (r.iou - s.iou_mean) * (r.iou - s.iou_mean);
      c += (r.nsd - s.nsd_mean) * (r.nsd - s.nsd_mean);
    }
    s.dsc_std = std::sqrt(a / (s.n - 1));
    s.iou_std = std::sqrt(b / (s.n - 1));
    s.nsd_std = std::sqrt(c / (s.n - 1));
  }
  return s;
}

} // namespace

std::vector<MetricsRecord> evaluate(const Checkpoint& ck,
                                    const std::vector<NoduleSample>& dataset,
                                    const FoldSplit& split, int fold_index,
                                    const EvalOptions& opts, int threads) {
  if (fold_index < 0 || fold_index >= split.k)
    throw invalid_input("evaluate: fold_index out of range");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (split.fold_of(dataset[i].sample_id) == fold_index) idx.push_back(i);
  if (idx.empty())
    throw invalid_input("evaluate: fold has no samples");

  std::vector<MetricsRecord> out(idx.size());
  parallel_for(idx.size(), threads, [&](std::size_t i) {
    const NoduleSample& sample = dataset[idx[i]];
    const NetInput in = to_net_input(sample, ck.config.input_size);
    if (opts.annotation_index < 0 ||
        opts.annotation_index >= static_cast<int>(in.target_annotations.size()))
      throw invalid_input("evaluate: annotation_index out of range for sample " +
                          sample.sample_id);
    const ForwardOutputs fo = net_forward(ck.config, ck.state, in.image);
    const Mask pred = binarize_plane(fo.x_s, opts.threshold);
    const Mask& gt = in.target_annotations[opts.annotation_index];
    out[i] = MetricsRecord{sample.sample_id, dsc(pred, gt), iou(pred, gt),
                           nsd(pred, gt, opts.nsd_tolerance)};
  });
  return out;
}

RunReport crossval(const std::vector<NoduleSample>& dataset, int k,
                   const NetConfig& net_cfg, const TrainConfig& train_cfg,
                   const LossSpec& loss, const EvalOptions& eval_opts,
                   std::uint64_t seed, const std::filesystem::path& out_dir,
                   const std::string& label) {
  if (k < 2) throw invalid_input("crossval: k must be >= 2");
  std::vector<std::string> ids;
  ids.reserve(dataset.size());
  for (const auto& s : dataset) ids.push_back(s.sample_id);
  const FoldSplit split = split_folds(ids, k, seed);

  RunReport report;
  report.label = label;
  report.seed = seed;
  report.k = k;
  report.net_config_json = net_config_to_json(net_cfg);
  report.train_config_json = train_config_to_json(train_cfg);
  report.loss_spec_json = loss_spec_to_json(loss);

  for (int fold = 0; fold < k; ++fold) {
    TrainConfig fold_cfg = train_cfg;
    fold_cfg.seed = seed + static_cast<std::uint64_t>(fold) + 1;
    const auto fold_dir = out_dir / ("fold" + std::to_string(fold));
    const FitResult fit_res =
        fit(dataset, split, fold, net_cfg, fold_cfg, loss, fold_dir);

    const Checkpoint ck = load_checkpoint(fit_res.final_checkpoint, net_cfg);
    std::vector<MetricsRecord> recs =
        evaluate(ck, dataset, split, fold, eval_opts, train_cfg.threads);
    report.per_fold.push_back(stats_over(fold, recs));
    for (auto& r : recs) report.per_sample.push_back(SampleRow{fold, std::move(r)});
  }

  // Overall row: mean of fold means, spread across folds.
  report.overall.fold = -1;
  report.overall.n = static_cast<int>(report.per_sample.size());
  for (const auto& f : report.per_fold) {
    report.overall.dsc_mean += f.dsc_mean;
    report.overall.iou_mean += f.iou_mean;
    report.overall.nsd_mean += f.nsd_mean;
  }
  report.overall.dsc_mean /= k;
  report.overall.iou_mean /= k;
  report.overall.nsd_mean /= k;
  double a = 0, b = 0, c = 0;
  for (const auto& f : report.per_fold) {
    a += (f.dsc_mean - report.overall.dsc_mean) * (f.dsc_mean - report.overall.dsc_mean);
    b += (f.iou_mean - report.overall.iou_mean) * (f.iou_mean - report.overall.iou_mean);
    c += (f.nsd_mean - report.overall.nsd_mean) * (f.nsd_mean - report.overall.nsd_mean);
  }
  report.overall.dsc_std = std::sqrt(a / (k - 1));
  report.overall.iou_std = std::sqrt(b / (k - 1));
  report.overall.nsd_std = std::sqrt(c / (k - 1));
  return report;
}

ModelComparison compare_models(const RunReport& a, const RunReport& b) {
  std::map<std::string, const MetricsRecord*> bmap;
  for (const auto& row : b.per_sample) bmap[row.rec.sample_id] = &row.rec;
  if (bmap.size() != a.per_sample.size())
    throw invalid_input("compare_models: reports cover different sample sets");

  std::vector<double> dsc_a, dsc_b, iou_a, iou_b;
  dsc_a.reserve(a.per_sample.size());
  for (const auto& row : a.per_sample) {
    auto it = bmap.find(row.rec.sample_id);
    if (it == bmap.end())
      throw invalid_input("compare_models: sample " + row.rec.sample_id +
                          " missing from second report");
    dsc_a.push_back(row.rec.dsc);
    dsc_b.push_back(it->second->dsc);
    iou_a.push_back(row.rec.iou);
    iou_b.push_back(it->second->iou);
  }
  ModelComparison cmp;
  cmp.dsc_test = paired_t_test(dsc_a, dsc_b);
  cmp.iou_test = paired_t_test(iou_a, iou_b);
  return cmp;
}

// ---- HU distribution ---------------------------------------------------------

namespace {

struct RegionPools {
  std::vector<double> lc_actual, hc_actual, lc_pred, hc_pred;
};

RegionStats finish_region(std::string name, const std::vector<double>& pool,
                          int kde_points) {
  RegionStats r;
  r.name = std::move(name);
  r.pixel_count = pool.size();
  if (pool.empty()) return r;
  double m = 0;
  for (double v : pool) m += v;
  r.mean_hu = m / static_cast<double>(pool.size());
  try {
    r.curve = kde(pool, kde_points);
  } catch (const invalid_input&) {
    // too few values or zero spread; the mean is still reported
  }
  return r;
}

} // namespace

HuAnalysis hu_distribution_check(const std::optional<Checkpoint>& model,
                                 const std::vector<NoduleSample>& dataset,
                                 int kde_points, int threads) {
  if (dataset.empty())
    throw invalid_input("hu_distribution_check: empty dataset");
  if (model && !model->config.use_uam)
    throw data_error(
        "hu_distribution_check: checkpoint has no union/intersection heads");

  std::vector<RegionPools> per_sample(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    const NoduleSample& s = dataset[i];
    RegionPools& pools = per_sample[i];

    if (model) {
      const NetInput in = to_net_input(s, model->config.input_size);
      const ForwardOutputs fo = net_forward(model->config, model->state, in.image);
      const Mask pred_union = binarize_plane(*fo.union_pred, 0.5);
      const Mask pred_hc = binarize_plane(*fo.inter_pred, 0.5);
      const Mask gt_union = in.target_union;
      const Mask gt_hc = in.target_intersection;
      // HU at network resolution, recovered from the normalized channel.
      const std::size_t plane = gt_union.v.size();
      for (std::size_t p = 0; p < plane; ++p) {
        const double hu = in.image.data[p] * 2000.0 - 1000.0;
        if (gt_union.v[p] && !gt_hc.v[p]) pools.lc_actual.push_back(hu);
        if (gt_hc.v[p]) pools.hc_actual.push_back(hu);
        if (pred_union.v[p] && !pred_hc.v[p]) pools.lc_pred.push_back(hu);
        if (pred_hc.v[p]) pools.hc_pred.push_back(hu);
      }
    } else {
      const Mask u = union_mask(s.annotations);
      const Mask hc = intersection_mask(s.annotations);
      for (std::size_t p = 0; p < u.v.size(); ++p) {
        const double hu = s.hu_patch.v[p];
        if (u.v[p] && !hc.v[p]) pools.lc_actual.push_back(hu);
        if (hc.v[p]) pools.hc_actual.push_back(hu);
      }
      pools.lc_pred = pools.lc_actual;
      pools.hc_pred = pools.hc_actual;
    }
  });

  RegionPools all;
  for (const RegionPools& p : per_sample) {
    all.lc_actual.insert(all.lc_actual.end(), p.lc_actual.begin(), p.lc_actual.end());
    all.hc_actual.insert(all.hc_actual.end(), p.hc_actual.begin(), p.hc_actual.end());
    all.lc_pred.insert(all.lc_pred.end(), p.lc_pred.begin(), p.lc_pred.end());
    all.hc_pred.insert(all.hc_pred.end(), p.hc_pred.begin(), p.hc_pred.end());
  }

  HuAnalysis a;
  a.lc_actual = finish_region("lc_actual", all.lc_actual, kde_points);
  a.hc_actual = finish_region("hc_actual", all.hc_actual, kde_points);
  a.lc_pred = finish_region("lc_pred", all.lc_pred, kde_points);
  a.hc_pred = finish_region("hc_pred", all.hc_pred, kde_points);
  return a;
}

// ---- complex-nodule buckets ----------------------------------------------------

std::vector<BucketReport> complex_validation(
    const RunReport& baseline, const std::vector<RunReport>& candidates,
    const std::vector<int>& thresholds) {
  if (candidates.empty())
    throw invalid_input("complex_validation: no candidate reports");
  for (int t : thresholds)
    if (t <= 0 || t > 100)
      throw invalid_input("complex_validation: thresholds must be in (0, 100]");

  std::set<std::string> base_ids;
  for (const auto& row : baseline.per_sample)
    base_ids.insert(row.rec.sample_id);
  for (const auto& cand : candidates) {
    std::set<std::string> ids;
    for (const auto& row : cand.per_sample) ids.insert(row.rec.sample_id);
    if (ids != base_ids)
      throw invalid_input("complex_validation: candidate '" + cand.label +
                          "' covers a different sample set");
  }

  std::vector<BucketReport> out;
  for (const auto& cand : candidates) {
    std::map<std::string, const MetricsRecord*> cmap;
    for (const auto& row : cand.per_sample) cmap[row.rec.sample_id] = &row.rec;

    for (int t : thresholds) {
      BucketReport b;
      b.threshold_percent = t;
      b.candidate_label = cand.label;
      double base_dsc = 0, base_iou = 0, cand_dsc = 0, cand_iou = 0;
      for (const auto& row : baseline.per_sample) {
        if (row.rec.dsc <= t / 100.0) {
          b.selected_ids.push_back(row.rec.sample_id);
          base_dsc += row.rec.dsc;
          base_iou += row.rec.iou;
          const MetricsRecord* cr = cmap.at(row.rec.sample_id);
          cand_dsc += cr->dsc;
          cand_iou += cr->iou;
        }
      }
      const auto n = static_cast<double>(b.selected_ids.size());
      if (n > 0) {
        b.baseline_dsc_mean = base_dsc / n;
        b.baseline_iou_mean = base_iou / n;
        b.candidate_dsc_mean = cand_dsc / n;
        b.candidate_iou_mean = cand_iou / n;
        b.delta_dsc = *b.candidate_dsc_mean - *b.baseline_dsc_mean;
        b.delta_iou = *b.candidate_iou_mean - *b.baseline_iou_mean;
      }
      out.push_back(std::move(b));
    }
  }
  return out;
}

// ---- report I/O -----------------------------------------------------------------

namespace {

json fold_stats_to_json(const FoldStats& s) {
  json j;
  j["fold"] = s.fold;
  j["n"] = s.n;
  j["dsc_mean"] = s.dsc_mean;
  j["dsc_std"] = s.dsc_std;
  j["iou_mean"] = s.iou_mean;
  j["iou_std"] = s.iou_std;
  j["nsd_mean"] = s.nsd_mean;
  j["nsd_std"] = s.nsd_std;
  return j;
}

FoldStats fold_stats_from_json(const json& j) {
  FoldStats s;
  s.fold = j.at("fold").get<int>();
  s.n = j.at("n").get<int>();
  s.dsc_mean = j.at("dsc_mean").get<double>();
  s.dsc_std = j.at("dsc_std").get<double>();
  s.iou_mean = j.at("iou_mean").get<double>();
  s.iou_std = j.at("iou_std").get<double>();
  s.nsd_mean = j.at("nsd_mean").get<double>();
  s.nsd_std = j.at("nsd_std").get<double>();
  return s;
}

} // namespace

void write_run_report_json(const std::filesystem::path& path, const RunReport& r) {
  json j;
  j["label"] = r.label;
  j["seed"] = r.seed;
  j["k"] = r.k;
  j["net_config"] = json::parse(r.net_config_json);
  j["train_config"] = json::parse(r.train_config_json);
  j["loss_spec"] = json::parse(r.loss_spec_json);
  j["per_fold"] = json::array();
  for (const auto& f : r.per_fold) j["per_fold"].push_back(fold_stats_to_json(f));
  j["overall"] = fold_stats_to_json(r.overall);
  j["per_sample"] = json::array();
  for (const auto& row : r.per_sample) {
    json s;
    s["id"] = row.rec.sample_id;
    s["fold"] = row.fold;
    s["dsc"] = row.rec.dsc;
    s["iou"] = row.rec.iou;
    s["nsd"] = row.rec.nsd;
    j["per_sample"].push_back(std::move(s));
  }
  std::ofstream out(path);
  if (!out) throw data_error("cannot open report " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw data_error("report write failed for " + path.string());
}

RunReport read_run_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open report " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw data_error("report parse error in " + path.string() + ": " + e.what());
  }
  RunReport r;
  try {
    r.label = j.at("label").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.k = j.at("k").get<int>();
    r.net_config_json = j.at("net_config").dump();
    r.train_config_json = j.at("train_config").dump();
    r.loss_spec_json = j.at("loss_spec").dump();
    for (const auto& f : j.at("per_fold")) r.per_fold.push_back(fold_stats_from_json(f));
    r.overall = fold_stats_from_json(j.at("overall"));
    for (const auto& s : j.at("per_sample")) {
      SampleRow row;
      row.fold = s.at("fold").get<int>();
      row.rec.sample_id = s.at("id").get<std::string>();
      row.rec.dsc = s.at("dsc").get<double>();
      row.rec.iou = s.at("iou").get<double>();
      row.rec.nsd = s.at("nsd").get<double>();
      r.per_sample.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw data_error("malformed report " + path.string() + ": " + e.what());
  }
  return r;
}

namespace {

std::string fmt_pm(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f +- %.4f", mean, sd);
  return buf;
}

} // namespace

std::string run_report_text(const RunReport& r) {
  std::ostringstream os;
  os << "run: " << r.label << "  seed: " << r.seed << "  folds: " << r.k
     << "  samples: " << r.per_sample.size() << '\n';
  os << "fold     n  dsc                 iou                 nsd\n";
  char buf[160];
  for (const auto& f : r.per_fold) {
    std::snprintf(buf, sizeof(buf), "%-6d %4d  %-18s  %-18s  %-18s\n", f.fold, f.n,
                  fmt_pm(f.dsc_mean, f.dsc_std).c_str(),
                  fmt_pm(f.iou_mean, f.iou_std).c_str(),
                  fmt_pm(f.nsd_mean, f.nsd_std).c_str());
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "%-6s %4d  %-18s  %-18s  %-18s\n", "avg",
                r.overall.n, fmt_pm(r.overall.dsc_mean, r.overall.dsc_std).c_str(),
                fmt_pm(r.overall.iou_mean, r.overall.iou_std).c_str(),
                fmt_pm(r.overall.nsd_mean, r.overall.nsd_std).c_str());
  os << buf;
  return os.str();
}

void write_run_report_text(const std::filesystem::path& path, const RunReport& r) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open report " + path.string() + " for writing");
  out << run_report_text(r);
  if (!out) throw data_error("report write failed for " + path.string());
}

void write_kde_csv(const std::filesystem::path& path, const KdeCurve& curve) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot open " + path.string() + " for writing");
  out << "hu,density\n";
  out.precision(17);
  for (std::size_t i = 0; i < curve.grid.size(); ++i)
    out << curve.grid[i] << ',' << curve.density[i] << '\n';
  if (!out) throw data_error("write failed for " + path.string());
}

std::string hu_analysis_text(const HuAnalysis& a) {
  std::ostringstream os;
  os << "region      pixels      mean_hu\n";
  char buf[128];
  for (const RegionStats* r : {&a.lc_actual, &a.hc_actual, &a.lc_pred, &a.hc_pred}) {
    if (r->mean_hu)
      std::snprintf(buf, sizeof(buf), "%-10s %8zu  %11.3f\n", r->name.c_str(),
                    r->pixel_count, *r->mean_hu);
    else
      std::snprintf(buf, sizeof(buf), "%-10s %8zu       absent\n", r->name.c_str(),
                    r->pixel_count);
    os << buf;
  }
  return os.str();
}

std::string bucket_reports_text(const std::vector<BucketReport>& reports) {
  std::ostringstream os;
  char buf[256];
  for (const auto& b : reports) {
    std::snprintf(buf, sizeof(buf), "candidate %-16s  baseline DSC <= %d%%  n=%zu\n",
                  b.candidate_label.c_str(), b.threshold_percent,
                  b.selected_ids.size());
    os << buf;
    if (b.baseline_dsc_mean) {
      std::snprintf(buf, sizeof(buf),
                    "  baseline  dsc %.4f  iou %.4f\n  candidate dsc %.4f  iou %.4f\n"
                    "  delta     dsc %+.4f  iou %+.4f\n",
                    *b.baseline_dsc_mean, *b.baseline_iou_mean, *b.candidate_dsc_mean,
                    *b.candidate_iou_mean, *b.delta_dsc, *b.delta_iou);
      os << buf;
    } else {
      os << "  (empty bucket; means undefined)\n";
    }
  }
  return os.str();
}

void write_bucket_reports_json(const std::filesystem::path& path,
                               const std::vector<BucketReport>& reports) {
  json arr = json::array();
  for (const auto& b : reports) {
    json j;
    j["threshold_percent"] = b.threshold_percent;
    j["candidate"] = b.candidate_label;
    j["selected_ids"] = b.selected_ids;
    j["count"] = b.selected_ids.size();
    auto put = [&j](const char* key, const std::optional<double>& v) {
      if (v)
        j[key] = *v;
      else
        j[key] = nullptr;
    };
    put("baseline_dsc_mean", b.baseline_dsc_mean);
    put("baseline_iou_mean", b.baseline_iou_mean);
    put("candidate_dsc_mean", b.candidate_dsc_mean);
    put("candidate_iou_mean", b.candidate_iou_mean);
    put("delta_dsc", b.delta_dsc);
    put("delta_iou", b.delta_iou);
    arr.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw data_error("cannot open " + path.string() + " for writing");
  out << arr.dump(2) << '\n';
  if (!out) throw data_error("write failed for " + path.string());
}

} // namespace ugmcs
