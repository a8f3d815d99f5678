#include "ugmcs/mask.hpp"

#include <algorithm>
#include <cmath>

#include "ugmcs/errors.hpp"

namespace ugmcs {

namespace {

void require_valid_set(const AnnotationSet& set, const char* op) {
  if (set.masks.empty())
    throw invalid_input(std::string(op) + ": annotation set is empty");
  const Mask& first = set.masks.front();
  if (first.height < 1 || first.width < 1)
    throw invalid_input(std::string(op) + ": empty mask");
  for (const Mask& m : set.masks) {
    if (!m.same_shape(first))
      throw invalid_input(std::string(op) + ": masks differ in shape");
  }
}

} // namespace

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (std::uint8_t b : v) n += b;
  return n;
}

Mask union_mask(const AnnotationSet& set) {
  require_valid_set(set, "union_mask");
  Mask out = set.masks.front();
  for (std::size_t j = 1; j < set.masks.size(); ++j) {
    const Mask& m = set.masks[j];
    for (std::size_t i = 0; i < out.v.size(); ++i)
      out.v[i] = out.v[i] | m.v[i];
  }
  return out;
}

Mask intersection_mask(const AnnotationSet& set) {
  require_valid_set(set, "intersection_mask");
  Mask out = set.masks.front();
  for (std::size_t j = 1; j < set.masks.size(); ++j) {
    const Mask& m = set.masks[j];
    for (std::size_t i = 0; i < out.v.size(); ++i)
      out.v[i] = out.v[i] & m.v[i];
  }
  return out;
}

Mask lc_mask(const AnnotationSet& set) {
  require_valid_set(set, "lc_mask");
  const Mask u = union_mask(set);
  const Mask inter = intersection_mask(set);
  Mask out(u.height, u.width);
  for (std::size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = static_cast<std::uint8_t>(u.v[i] & ~inter.v[i] & 1);
  return out;
}

MultiConfidenceMask compose_mcm(const Grid& u, const Grid& i) {
  if (!u.same_shape(i))
    throw invalid_input("compose_mcm: grids differ in shape");
  for (double x : u.v)
    if (!(x >= 0.0 && x <= 1.0))
      throw invalid_input("compose_mcm: union value outside [0,1]");
  for (double x : i.v)
    if (!(x >= 0.0 && x <= 1.0))
      throw invalid_input("compose_mcm: intersection value outside [0,1]");

  MultiConfidenceMask out;
  out.height = u.height;
  out.width = u.width;
  out.v.resize(u.v.size());
  for (std::size_t k = 0; k < u.v.size(); ++k)
    out.v[k] = (u.v[k] + i.v[k]) / 2.0;
  return out;
}

SetValidation validate_annotation_set(const AnnotationSet& set) {
  SetValidation r;
  if (set.masks.size() < 2)
    r.violations.push_back("annotation count " + std::to_string(set.masks.size()) +
                           " below minimum 2");
  if (set.masks.size() > 4)
    r.violations.push_back("annotation count " + std::to_string(set.masks.size()) +
                           " above maximum 4");
  if (!set.masks.empty()) {
    const Mask& first = set.masks.front();
    if (first.height < 1 || first.width < 1)
      r.violations.push_back("mask 0 has empty shape");
    for (std::size_t j = 0; j < set.masks.size(); ++j) {
      const Mask& m = set.masks[j];
      if (!m.same_shape(first))
        r.violations.push_back("mask " + std::to_string(j) + " shape " +
                               std::to_string(m.height) + "x" + std::to_string(m.width) +
                               " differs from mask 0");
      for (std::uint8_t b : m.v) {
        if (b != 0 && b != 1) {
          r.violations.push_back("mask " + std::to_string(j) + " contains non-binary value " +
                                 std::to_string(static_cast<int>(b)));
          break;
        }
      }
    }
  }
  r.ok = r.violations.empty();
  return r;
}

Mask nearest_resize(const Mask& in, int out_h, int out_w) {
  if (in.height < 1 || in.width < 1 || out_h < 1 || out_w < 1)
    throw invalid_input("nearest_resize: empty mask");
  Mask out(out_h, out_w);
  const double sy = static_cast<double>(in.height) / out_h;
  const double sx = static_cast<double>(in.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    int iy = static_cast<int>((y + 0.5) * sy);
    iy = std::min(iy, in.height - 1);
    for (int x = 0; x < out_w; ++x) {
      int ix = static_cast<int>((x + 0.5) * sx);
      ix = std::min(ix, in.width - 1);
      out.at(y, x) = in.at(iy, ix);
    }
  }
  return out;
}

Grid to_grid(const Mask& m) {
  Grid g(m.height, m.width);
  for (std::size_t i = 0; i < m.v.size(); ++i)
    g.v[i] = static_cast<double>(m.v[i]);
  return g;
}

} // namespace ugmcs
