#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ugmcs/mask.hpp"

namespace ugmcs {

struct MetricsRecord {
  std::string sample_id;
  double dsc = 0.0;
  double iou = 0.0;
  double nsd = 0.0;
};

struct KdeCurve {
  std::vector<double> grid;    // ascending evaluation points (HU)
  std::vector<double> density; // non-negative, integrates to ~1 over grid
  double bandwidth = 0.0;
};

struct PairedTestResult {
  double t_value = 0.0;
  double p_value = 1.0;
  int n = 0;
};

// Dice similarity coefficient 2|P∩G| / (|P|+|G|); 1.0 when both masks are empty.
double dsc(const Mask& pred, const Mask& gt);

// Intersection over union |P∩G| / |P∪G|; 1.0 when both masks are empty.
double iou(const Mask& pred, const Mask& gt);

// Normalized surface dice: the fraction of boundary pixels of each mask that
// lie within `tolerance_px` (Euclidean) of the other mask's boundary.
// Boundary pixels are foreground pixels with a 4-connected background or
// off-grid neighbour. 1.0 when both boundaries are empty.
double nsd(const Mask& pred, const Mask& gt, double tolerance_px = 1.0);

// Boundary pixel coordinates (y, x) under the nsd() convention.
std::vector<std::pair<int, int>> boundary_pixels(const Mask& m);

// Gaussian kernel density estimate with Silverman bandwidth
// 1.06 * sd * n^(-1/5), evaluated on `grid_points` uniform points spanning
// [min - 4h, max + 4h]. Requires >= 2 values with nonzero spread.
KdeCurve kde(const std::vector<double>& values, int grid_points = 256);

// Two-sided paired t-test on differences a - b. Degenerate conventions:
// sd = 0 with zero mean -> (t = 0, p = 1); sd = 0 with nonzero mean ->
// (t = +/-inf, p = 0).
PairedTestResult paired_t_test(const std::vector<double>& a,
                               const std::vector<double>& b);

// CSV rows {sample_id, dsc, iou, nsd} with a header line.
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRecord>& records);

} // namespace ugmcs
