#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ugmcs/grid.hpp"

namespace ugmcs {

// Dense binary mask; every element is 0 or 1.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> v;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), v(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return v.size(); }

  bool same_shape(const Mask& o) const {
    return height == o.height && width == o.width;
  }
  std::size_t count() const; // number of foreground pixels
};

// One sample's expert annotations (2-4 binary masks of identical shape).
struct AnnotationSet {
  std::string sample_id;
  std::vector<Mask> masks;
};

// Per-pixel confidence field in [0, 1]. Composed from hard binary inputs it
// takes exactly the values {0, 0.5, 1}: 1 on consensus foreground, 0.5 where
// annotators disagree, 0 on background.
struct MultiConfidenceMask {
  int height = 0;
  int width = 0;
  std::vector<double> v;

  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * width + x]; }
};

// Pixel-wise OR over all masks in the set.
Mask union_mask(const AnnotationSet& set);

// Pixel-wise AND over all masks in the set (the high-confidence region).
Mask intersection_mask(const AnnotationSet& set);

// Union minus intersection: the region where annotators disagree.
Mask lc_mask(const AnnotationSet& set);

// (u + i) / 2 element-wise; both inputs must lie in [0, 1].
MultiConfidenceMask compose_mcm(const Grid& u, const Grid& i);

struct SetValidation {
  bool ok = true;
  std::vector<std::string> violations;
};

// Reports shape consistency, binarity (trivially true for Mask storage built
// through the API, still checked), and annotation count in [2, 4].
SetValidation validate_annotation_set(const AnnotationSet& set);

// Nearest-neighbour resampling; preserves the {0, 1} value set.
Mask nearest_resize(const Mask& in, int out_h, int out_w);

// Mask -> Grid of {0.0, 1.0}.
Grid to_grid(const Mask& m);

} // namespace ugmcs
