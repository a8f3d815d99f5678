#include "ugmcs/filters.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ugmcs/errors.hpp"

namespace ugmcs {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Tensor gabor_kernel(const GaborConfig& cfg, double theta) {
  if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0)
    throw invalid_input("gabor_kernel: kernel_size must be odd and positive");
  if (!(cfg.wavelength > 0.0) || !(cfg.sigma > 0.0))
    throw invalid_input("gabor_kernel: wavelength and sigma must be positive");

  const int k = cfg.kernel_size;
  const int r = k / 2;
  const double ct = std::cos(theta), st = std::sin(theta);
  Tensor out({k, k});
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) {
      const double xp = x * ct + y * st;
      const double yp = -x * st + y * ct;
      const double env = std::exp(-(xp * xp + cfg.aspect * cfg.aspect * yp * yp) /
                                  (2.0 * cfg.sigma * cfg.sigma));
      const double carrier = std::cos(2.0 * kPi * xp / cfg.wavelength + cfg.phase);
      out.data[static_cast<std::size_t>(y + r) * k + (x + r)] = env * carrier;
    }
  }
  return out;
}

Tensor gabor_mean_kernel(const GaborConfig& cfg) {
  if (cfg.orientations < 1)
    throw invalid_input("gabor_mean_kernel: orientations must be >= 1");
  Tensor mean({cfg.kernel_size, cfg.kernel_size});
  for (int i = 0; i < cfg.orientations; ++i) {
    const double theta = kPi * i / cfg.orientations;
    const Tensor g = gabor_kernel(cfg, theta);
    for (std::size_t j = 0; j < mean.data.size(); ++j) mean.data[j] += g.data[j];
  }
  for (double& v : mean.data) v /= cfg.orientations;
  return mean;
}

Tensor gabor_filter(const Tensor& x, const GaborConfig& cfg) {
  if (x.shape.size() != 3)
    throw invalid_input("gabor_filter: input must be {C,H,W}");
  const Tensor kernel = gabor_mean_kernel(cfg);
  const int c_n = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int kk = kernel.dim(0);
  const int r = kk / 2;

  Tensor out({c_n, h, w});
  for (int c = 0; c < c_n; ++c) {
    const double* xp = &x.data[static_cast<std::size_t>(c) * h * w];
    double* op = &out.data[static_cast<std::size_t>(c) * h * w];
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int ky = 0; ky < kk; ++ky) {
          const int iy = std::clamp(y + ky - r, 0, h - 1);
          for (int kx = 0; kx < kk; ++kx) {
            const int ix = std::clamp(xx + kx - r, 0, w - 1);
            acc += kernel.data[static_cast<std::size_t>(ky) * kk + kx] *
                   xp[static_cast<std::size_t>(iy) * w + ix];
          }
        }
        op[static_cast<std::size_t>(y) * w + xx] = acc;
      }
    }
  }
  return out;
}

double otsu_threshold(std::span<const double> values, int bins) {
  if (values.empty())
    throw invalid_input("otsu_threshold: empty input");
  if (bins < 2)
    throw invalid_input("otsu_threshold: bins must be >= 2");
  for (double v : values)
    if (!std::isfinite(v))
      throw invalid_input("otsu_threshold: non-finite value");

  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double mn = *mn_it, mx = *mx_it;
  if (mn == mx) return mn;

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  // Running ascending prefix sum; the split index only grows as the edge
  // sweeps upward, so each value is added exactly once in sorted order.
  const double span = mx - mn;
  double best_sigma = -1.0;
  double best_edge = mn;
  std::size_t split = 0;
  double lo_sum = 0.0;
  double total = 0.0;
  for (double v : sorted) total += v;

  for (int i = 0; i <= bins; ++i) {
    const double t = mn + span * i / bins;
    while (split < n && sorted[split] < t) {
      lo_sum += sorted[split];
      ++split;
    }
    double sigma = 0.0;
    if (split > 0 && split < n) {
      const double w0 = static_cast<double>(split) / static_cast<double>(n);
      const double w1 = 1.0 - w0;
      const double mu0 = lo_sum / static_cast<double>(split);
      const double mu1 = (total - lo_sum) / static_cast<double>(n - split);
      const double d = mu0 - mu1;
      sigma = w0 * w1 * d * d;
    }
    if (sigma > best_sigma) {
      best_sigma = sigma;
      best_edge = t;
    }
  }
  return best_edge;
}

} // namespace ugmcs
