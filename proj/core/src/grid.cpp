#include "ugmcs/grid.hpp"

#include <algorithm>
#include <cmath>

#include "ugmcs/errors.hpp"

namespace ugmcs {

Grid bilinear_resize(const Grid& in, int out_h, int out_w) {
  if (in.height < 1 || in.width < 1 || out_h < 1 || out_w < 1)
    throw invalid_input("bilinear_resize: empty grid");

  Grid out(out_h, out_w);
  const double sy = static_cast<double>(in.height) / out_h;
  const double sx = static_cast<double>(in.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(in.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, in.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(in.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, in.width - 1);
      const double wx = fx - x0;
      const double top = in.at(y0, x0) * (1.0 - wx) + in.at(y0, x1) * wx;
      const double bot = in.at(y1, x0) * (1.0 - wx) + in.at(y1, x1) * wx;
      out.at(y, x) = top * (1.0 - wy) + bot * wy;
    }
  }
  return out;
}

} // namespace ugmcs
