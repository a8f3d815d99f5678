#include "ugmcs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "ugmcs/errors.hpp"

namespace ugmcs {

namespace {

void require_same_shape(const Mask& a, const Mask& b, const char* op) {
  if (!a.same_shape(b))
    throw invalid_input(std::string(op) + ": mask shapes differ");
}

struct Overlap {
  std::size_t inter = 0;
  std::size_t p = 0;
  std::size_t g = 0;
};

Overlap overlap(const Mask& pred, const Mask& gt) {
  Overlap o;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    o.inter += pred.v[i] & gt.v[i];
    o.p += pred.v[i];
    o.g += gt.v[i];
  }
  return o;
}

// Regularized incomplete beta via Lentz's continued fraction.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double incbeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                     a * std::log(x) + b * std::log(1.0 - x);
  const double bt = std::exp(lbt);
  if (x < (a + 1.0) / (a + b + 2.0))
    return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, int df) {
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return incbeta(df / 2.0, 0.5, x);
}

} // namespace

double dsc(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "dsc");
  const Overlap o = overlap(pred, gt);
  if (o.p + o.g == 0) return 1.0;
  return 2.0 * static_cast<double>(o.inter) / static_cast<double>(o.p + o.g);
}

double iou(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "iou");
  const Overlap o = overlap(pred, gt);
  const std::size_t uni = o.p + o.g - o.inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.inter) / static_cast<double>(uni);
}

std::vector<std::pair<int, int>> boundary_pixels(const Mask& m) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y == m.height - 1 || x == m.width - 1 ||
                        !m.at(y - 1, x) || !m.at(y + 1, x) ||
                        !m.at(y, x - 1) || !m.at(y, x + 1);
      if (edge) out.emplace_back(y, x);
    }
  }
  return out;
}

namespace {

std::size_t within_tolerance(const std::vector<std::pair<int, int>>& from,
                             const std::vector<std::pair<int, int>>& to,
                             double tol2) {
  std::size_t hits = 0;
  for (const auto& [fy, fx] : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [ty, tx] : to) {
      const double dy = fy - ty;
      const double dx = fx - tx;
      const double d2 = dy * dy + dx * dx;
      if (d2 < best) best = d2;
      if (best == 0.0) break;
    }
    if (best <= tol2) ++hits;
  }
  return hits;
}

} // namespace

double nsd(const Mask& pred, const Mask& gt, double tolerance_px) {
  require_same_shape(pred, gt, "nsd");
  if (tolerance_px < 0.0) throw invalid_input("nsd: negative tolerance");
  const auto bp = boundary_pixels(pred);
  const auto bg = boundary_pixels(gt);
  if (bp.empty() && bg.empty()) return 1.0;
  const double tol2 = tolerance_px * tolerance_px;
  const std::size_t hits = within_tolerance(bp, bg, tol2) + within_tolerance(bg, bp, tol2);
  return static_cast<double>(hits) / static_cast<double>(bp.size() + bg.size());
}

KdeCurve kde(const std::vector<double>& values, int grid_points) {
  if (values.size() < 2)
    throw invalid_input("kde: needs at least 2 values");
  if (grid_points < 2)
    throw invalid_input("kde: needs at least 2 grid points");

  const std::size_t n = values.size();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0))
    throw invalid_input("kde: zero spread");

  const double h = 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn_it - 4.0 * h;
  const double hi = *mx_it + 4.0 * h;

  KdeCurve c;
  c.bandwidth = h;
  c.grid.resize(grid_points);
  c.density.resize(grid_points);
  const double step = (hi - lo) / (grid_points - 1);
  const double norm = 1.0 / (static_cast<double>(n) * h * std::sqrt(2.0 * 3.14159265358979323846));
  for (int i = 0; i < grid_points; ++i) {
    const double x = lo + step * i;
    c.grid[i] = x;
    double acc = 0.0;
    for (double v : values) {
      const double z = (x - v) / h;
      acc += std::exp(-0.5 * z * z);
    }
    c.density[i] = norm * acc;
  }
  return c;
}

PairedTestResult paired_t_test(const std::vector<double>& a,
                               const std::vector<double>& b) {
  if (a.size() != b.size())
    throw invalid_input("paired_t_test: length mismatch");
  if (a.size() < 2)
    throw invalid_input("paired_t_test: needs n >= 2");

  const int n = static_cast<int>(a.size());
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1));

  PairedTestResult r;
  r.n = n;
  if (sd == 0.0) {
    if (mean == 0.0) {
      r.t_value = 0.0;
      r.p_value = 1.0;
    } else {
      r.t_value = mean > 0.0 ? std::numeric_limits<double>::infinity()
                             : -std::numeric_limits<double>::infinity();
      r.p_value = 0.0;
    }
    return r;
  }
  r.t_value = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p_value = student_t_two_sided_p(r.t_value, n - 1);
  return r;
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsRecord>& records) {
  std::ofstream out(path);
  if (!out)
    throw data_error("write_metrics_csv: cannot open " + path.string());
  out << "sample_id,dsc,iou,nsd\n";
  out.precision(17);
  for (const auto& r : records)
    out << r.sample_id << ',' << r.dsc << ',' << r.iou << ',' << r.nsd << '\n';
  if (!out)
    throw data_error("write_metrics_csv: write failed for " + path.string());
}

} // namespace ugmcs
