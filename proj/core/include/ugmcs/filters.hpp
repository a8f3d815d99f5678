#pragma once

#include <span>

#include "ugmcs/tensor.hpp"

namespace ugmcs {

struct GaborConfig {
  int orientations = 4;
  double wavelength = 4.0; // px
  double sigma = 2.0;
  double aspect = 0.5; // gamma
  double phase = 0.0;  // psi
  int kernel_size = 7;

  bool operator==(const GaborConfig&) const = default;
};

// Oriented sinusoid under a Gaussian envelope:
//   g(x,y) = exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x'/lambda + psi)
// with x' = x cos(theta) + y sin(theta), y' = -x sin(theta) + y cos(theta).
Tensor gabor_kernel(const GaborConfig& cfg, double theta);

// The orientation bank averaged into one kernel. Filtering with the mean
// kernel equals averaging the per-orientation responses (linearity).
Tensor gabor_mean_kernel(const GaborConfig& cfg);

// Depthwise filtering of {C,H,W} with the averaged bank; clamp-to-edge
// padding, so a constant input stays constant (scaled by the kernel sum).
Tensor gabor_filter(const Tensor& x, const GaborConfig& cfg);

// Otsu threshold with candidate thresholds at the `bins`+1 uniform edges of
// [min, max]: t_i = min + i * (max - min) / bins. Between-class variance
// w0*w1*(mu0-mu1)^2 is computed from the exact values on each side of the
// edge (class 0: v < t). The lowest maximizing edge wins ties; a constant
// input returns min.
double otsu_threshold(std::span<const double> values, int bins = 256);

} // namespace ugmcs
