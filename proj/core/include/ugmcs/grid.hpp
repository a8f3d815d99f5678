#pragma once

#include <cstddef>
#include <vector>

namespace ugmcs {

// Dense row-major 2-D field of doubles.
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<double> v;

  Grid() = default;
  Grid(int h, int w, double fill = 0.0)
      : height(h), width(w), v(static_cast<std::size_t>(h) * w, fill) {}

  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return v.size(); }

  bool same_shape(const Grid& o) const {
    return height == o.height && width == o.width;
  }
};

// Bilinear resampling with half-pixel-center alignment. A constant input maps
// to a constant output of the same value.
Grid bilinear_resize(const Grid& in, int out_h, int out_w);

} // namespace ugmcs
