#pragma once

// Independent brute-force oracles used by unit and acceptance tests. These
// deliberately recompute results from first principles (per-element scans,
// all-pairs distances, exhaustive threshold sweeps) so they share no code
// with the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "ugmcs/mask.hpp"
#include "ugmcs/rng.hpp"

namespace oracles {

inline ugmcs::Mask random_mask(ugmcs::Rng& rng, int h, int w, double p = 0.5) {
  ugmcs::Mask m(h, w);
  for (auto& b : m.v) b = rng.uniform01() < p ? 1 : 0;
  return m;
}

struct SetCounts {
  long inter = 0, pred = 0, gt = 0, uni = 0;
};

inline SetCounts count_sets(const ugmcs::Mask& p, const ugmcs::Mask& g) {
  SetCounts c;
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    c.inter += p.v[i] && g.v[i];
    c.pred += p.v[i];
    c.gt += g.v[i];
    c.uni += p.v[i] || g.v[i];
  }
  return c;
}

inline double dsc_oracle(const ugmcs::Mask& p, const ugmcs::Mask& g) {
  const SetCounts c = count_sets(p, g);
  if (c.pred + c.gt == 0) return 1.0;
  return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.pred + c.gt);
}

inline double iou_oracle(const ugmcs::Mask& p, const ugmcs::Mask& g) {
  const SetCounts c = count_sets(p, g);
  if (c.uni == 0) return 1.0;
  return static_cast<double>(c.inter) / static_cast<double>(c.uni);
}

// Boundary under the 4-connectivity convention (image border counts).
inline std::vector<std::pair<int, int>> boundary_oracle(const ugmcs::Mask& m) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      bool edge = false;
      const int dy[] = {-1, 1, 0, 0};
      const int dx[] = {0, 0, -1, 1};
      for (int k = 0; k < 4 && !edge; ++k) {
        const int yy = y + dy[k], xx = x + dx[k];
        if (yy < 0 || xx < 0 || yy >= m.height || xx >= m.width || !m.at(yy, xx))
          edge = true;
      }
      if (edge) out.emplace_back(y, x);
    }
  return out;
}

// O(B^2) all-pairs surface dice.
inline double nsd_oracle(const ugmcs::Mask& p, const ugmcs::Mask& g, double tol) {
  const auto bp = boundary_oracle(p);
  const auto bg = boundary_oracle(g);
  if (bp.empty() && bg.empty()) return 1.0;
  auto hits = [tol](const auto& from, const auto& to) {
    std::size_t n = 0;
    for (const auto& [fy, fx] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [ty, tx] : to)
        best = std::min(best, std::sqrt(double((fy - ty) * (fy - ty) + (fx - tx) * (fx - tx))));
      if (best <= tol) ++n;
    }
    return n;
  };
  return static_cast<double>(hits(bp, bg) + hits(bg, bp)) /
         static_cast<double>(bp.size() + bg.size());
}

// Exhaustive scan over every candidate edge t_i = min + i*(max-min)/bins,
// recomputing class statistics per edge by a fresh ascending sweep.
inline double otsu_oracle(std::span<const double> values, int bins) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double mn = sorted.front(), mx = sorted.back();
  if (mn == mx) return mn;
  const std::size_t n = sorted.size();
  double total = 0.0;
  for (double v : sorted) total += v;

  double best_sigma = -1.0, best_edge = mn;
  for (int i = 0; i <= bins; ++i) {
    const double t = mn + (mx - mn) * i / bins;
    double lo_sum = 0.0;
    std::size_t lo_n = 0;
    for (double v : sorted) {
      if (v < t) {
        lo_sum += v;
        ++lo_n;
      } else {
        break;
      }
    }
    double sigma = 0.0;
    if (lo_n > 0 && lo_n < n) {
      const double w0 = static_cast<double>(lo_n) / static_cast<double>(n);
      const double w1 = 1.0 - w0;
      const double mu0 = lo_sum / static_cast<double>(lo_n);
      const double mu1 = (total - lo_sum) / static_cast<double>(n - lo_n);
      sigma = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    }
    if (sigma > best_sigma) {
      best_sigma = sigma;
      best_edge = t;
    }
  }
  return best_edge;
}

} // namespace oracles
