#include "ugmcs/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ugmcs/errors.hpp"
#include "ugmcs/metrics.hpp"
#include "ugmcs/rng.hpp"

namespace ugmcs {

namespace {

constexpr int kSynthSize = 50;

} // namespace

int FoldSplit::fold_of(const std::string& id) const {
  auto it = assignments.find(id);
  if (it == assignments.end())
    throw data_error("fold split has no entry for sample " + id);
  return it->second;
}

Grid normalize_hu(const Grid& patch) {
  Grid out(patch.height, patch.width);
  for (std::size_t i = 0; i < patch.v.size(); ++i) {
    const double v = patch.v[i];
    if (!std::isfinite(v))
      throw invalid_input("normalize_hu: non-finite HU value");
    const double c = std::clamp(v, -1000.0, 1000.0);
    out.v[i] = (c + 1000.0) / 2000.0;
  }
  return out;
}

NetInput to_net_input(const NoduleSample& sample, int input_size) {
  if (input_size < 1)
    throw invalid_input("to_net_input: input_size must be positive");

  const Grid norm = normalize_hu(sample.hu_patch);
  const Grid img = bilinear_resize(norm, input_size, input_size);

  NetInput in;
  in.image = Tensor({3, input_size, input_size});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < input_size; ++y)
      for (int x = 0; x < input_size; ++x)
        in.image.at3(c, y, x) = img.at(y, x);

  in.target_annotations.reserve(sample.annotations.masks.size());
  for (const Mask& m : sample.annotations.masks)
    in.target_annotations.push_back(nearest_resize(m, input_size, input_size));

  AnnotationSet resized{sample.sample_id, in.target_annotations};
  in.target_union = union_mask(resized);
  in.target_intersection = intersection_mask(resized);
  return in;
}

// ---- synthetic generation ------------------------------------------------

namespace {

struct Ellipse {
  double cy, cx, a, b, cos_t, sin_t;
  bool contains(double y, double x) const {
    const double dy = y - cy;
    const double dx = x - cx;
    const double u = (dx * cos_t + dy * sin_t) / a;
    const double v = (-dx * sin_t + dy * cos_t) / b;
    return u * u + v * v <= 1.0;
  }
};

// Signed distance to the blob boundary ring: <= 0 inside, > 0 outside.
Grid signed_distance(const Mask& base) {
  const auto boundary = boundary_pixels(base);
  Grid d(base.height, base.width);
  for (int y = 0; y < base.height; ++y) {
    for (int x = 0; x < base.width; ++x) {
      double best = 1e30;
      for (const auto& [by, bx] : boundary) {
        const double dy = y - by;
        const double dx = x - bx;
        const double d2 = dy * dy + dx * dx;
        if (d2 < best) best = d2;
      }
      const double dist = std::sqrt(best);
      d.at(y, x) = base.at(y, x) ? -dist : dist;
    }
  }
  return d;
}

// Spatially smooth jitter field: per-pixel uniform noise box-blurred twice.
Grid smooth_noise(Rng& rng, int h, int w, double amplitude) {
  Grid g(h, w);
  for (double& v : g.v) v = rng.uniform(-1.0, 1.0);
  for (int pass = 0; pass < 2; ++pass) {
    Grid b(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
            acc += g.at(yy, xx);
            ++n;
          }
        }
        b.at(y, x) = acc / n;
      }
    }
    g = std::move(b);
  }
  // Blurring shrinks the range; rescale to the requested amplitude.
  for (double& v : g.v) v *= 3.0 * amplitude;
  return g;
}

} // namespace

std::vector<NoduleSample> synth_generate(int count, int annotators,
                                         std::uint64_t seed) {
  if (count < 1)
    throw invalid_input("synth_generate: count must be >= 1");
  if (annotators < 2 || annotators > 4)
    throw invalid_input("synth_generate: annotators must be in [2, 4]");

  Rng rng(seed);
  std::vector<NoduleSample> samples;
  samples.reserve(count);

  for (int idx = 0; idx < count; ++idx) {
    const int S = kSynthSize;

    // Base blob: union of 1-3 ellipses.
    const int n_ell = static_cast<int>(rng.uniform_int(1, 3));
    std::vector<Ellipse> ellipses;
    for (int e = 0; e < n_ell; ++e) {
      Ellipse el;
      el.cy = rng.uniform(15.0, 35.0);
      el.cx = rng.uniform(15.0, 35.0);
      el.a = rng.uniform(4.0, 15.0);
      el.b = rng.uniform(4.0, 15.0);
      const double t = rng.uniform(0.0, 3.14159265358979323846);
      el.cos_t = std::cos(t);
      el.sin_t = std::sin(t);
      ellipses.push_back(el);
    }
    Mask base(S, S);
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        for (const Ellipse& el : ellipses)
          if (el.contains(y, x)) {
            base.at(y, x) = 1;
            break;
          }

    const Grid dist = signed_distance(base);

    // Annotator masks: dilate/erode the blob by 0-2 px plus smooth jitter.
    std::vector<Mask> masks;
    for (int j = 0; j < annotators; ++j) {
      const double delta = static_cast<double>(rng.uniform_int(-2, 2));
      const Grid jitter = smooth_noise(rng, S, S, 0.8);
      Mask m(S, S);
      std::size_t on = 0;
      for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
          if (dist.at(y, x) <= delta + jitter.at(y, x)) {
            m.at(y, x) = 1;
            ++on;
          }
        }
      }
      if (on == 0) m = base; // heavy erosion of a tiny blob can empty it
      masks.push_back(std::move(m));
    }

    // HU rendering: bright core, rim ramp to lung background, optional
    // ground-glass halo. Values rounded to whole HU so int16 round-trips.
    const double rim_w = rng.uniform(2.0, 4.0);
    const bool ground_glass = rng.uniform01() < 0.5;
    const double gg_w = rng.uniform(1.5, 3.0);

    Grid hu(S, S);
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        const double d = dist.at(y, x);
        double v;
        if (d <= 0.0) {
          v = rng.normal(0.0, 100.0);
        } else if (d <= rim_w) {
          const double t = d / rim_w;
          const double core = rng.normal(0.0, 100.0);
          const double outer = ground_glass ? rng.normal(-600.0, 50.0)
                                            : rng.normal(-850.0, 50.0);
          v = (1.0 - t) * core + t * outer;
        } else if (ground_glass && d <= rim_w + gg_w) {
          const double t = (d - rim_w) / gg_w;
          const double gg = rng.normal(-600.0, 50.0);
          const double bg = rng.normal(-850.0, 50.0);
          v = (1.0 - t) * gg + t * bg;
        } else {
          v = rng.normal(-850.0, 50.0);
        }
        v = std::clamp(v, -1024.0, 1024.0);
        hu.at(y, x) = static_cast<double>(std::llround(v));
      }
    }

    NoduleSample s;
    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "synth_%04d", idx);
    s.sample_id = id_buf;
    s.hu_patch = std::move(hu);
    s.annotations = AnnotationSet{s.sample_id, std::move(masks)};
    samples.push_back(std::move(s));
  }
  return samples;
}

FoldSplit split_folds(const std::vector<std::string>& ids, int k,
                      std::uint64_t seed) {
  if (k < 2)
    throw invalid_input("split_folds: k must be >= 2");
  if (static_cast<int>(ids.size()) < k)
    throw invalid_input("split_folds: fewer samples than folds");

  std::vector<std::string> shuffled = ids;
  Rng rng(seed);
  for (std::size_t i = shuffled.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(shuffled[i], shuffled[j]);
  }

  FoldSplit split;
  split.k = k;
  for (std::size_t i = 0; i < shuffled.size(); ++i)
    split.assignments[shuffled[i]] = static_cast<int>(i % k);
  return split;
}

// ---- manifest I/O ----------------------------------------------------------

namespace {

using nlohmann::json;

std::vector<unsigned char> read_file(const std::filesystem::path& p,
                                     const std::string& sample_id) {
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw data_error("sample " + sample_id + ": cannot open file " + p.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& p,
                const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw data_error("cannot open " + p.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw data_error("write failed for " + p.string());
}

} // namespace

std::vector<NoduleSample> load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in)
    throw data_error("cannot open manifest " + manifest_path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw data_error("manifest parse error in " + manifest_path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("samples") || !doc["samples"].is_array())
    throw data_error("manifest " + manifest_path.string() + " lacks a samples array");

  const auto dir = manifest_path.parent_path();
  std::vector<NoduleSample> samples;
  for (const auto& js : doc["samples"]) {
    NoduleSample s;
    try {
      s.sample_id = js.at("id").get<std::string>();
    } catch (const json::exception&) {
      throw data_error("manifest entry without an id in " + manifest_path.string());
    }
    int h = 0, w = 0;
    try {
      h = js.at("height").get<int>();
      w = js.at("width").get<int>();
    } catch (const json::exception&) {
      throw data_error("sample " + s.sample_id + ": missing height/width");
    }
    if (h < 1 || w < 1)
      throw data_error("sample " + s.sample_id + ": non-positive dimensions");

    const std::size_t n = static_cast<std::size_t>(h) * w;

    const auto img_path = dir / js.at("image").get<std::string>();
    const auto img_bytes = read_file(img_path, s.sample_id);
    if (img_bytes.size() != n * 2)
      throw data_error("sample " + s.sample_id + ": image file " + img_path.string() +
                       " has " + std::to_string(img_bytes.size()) + " bytes, expected " +
                       std::to_string(n * 2));
    s.hu_patch = Grid(h, w);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint16_t lo = img_bytes[2 * i];
      const std::uint16_t hi = img_bytes[2 * i + 1];
      const auto raw = static_cast<std::int16_t>(lo | (hi << 8));
      s.hu_patch.v[i] = static_cast<double>(raw);
    }

    if (!js.contains("masks") || !js["masks"].is_array() || js["masks"].empty())
      throw data_error("sample " + s.sample_id + ": no masks listed");
    for (const auto& mp : js["masks"]) {
      const auto mask_path = dir / mp.get<std::string>();
      const auto bytes = read_file(mask_path, s.sample_id);
      if (bytes.size() != n)
        throw data_error("sample " + s.sample_id + ": mask file " + mask_path.string() +
                         " has " + std::to_string(bytes.size()) + " bytes, expected " +
                         std::to_string(n));
      Mask m(h, w);
      for (std::size_t i = 0; i < n; ++i) {
        if (bytes[i] == 0) {
          m.v[i] = 0;
        } else if (bytes[i] == 255) {
          m.v[i] = 1;
        } else {
          throw data_error("sample " + s.sample_id + ": mask file " + mask_path.string() +
                           " contains non-binary byte " + std::to_string(bytes[i]));
        }
      }
      s.annotations.masks.push_back(std::move(m));
    }
    s.annotations.sample_id = s.sample_id;

    if (js.contains("fold") && !js["fold"].is_null())
      s.fold = js["fold"].get<int>();

    samples.push_back(std::move(s));
  }
  return samples;
}

void save_manifest(const std::vector<NoduleSample>& samples,
                   const std::filesystem::path& manifest_path) {
  const auto dir = manifest_path.parent_path();
  if (!dir.empty())
    std::filesystem::create_directories(dir);

  json doc;
  doc["samples"] = json::array();
  for (const auto& s : samples) {
    const int h = s.hu_patch.height;
    const int w = s.hu_patch.width;
    const std::size_t n = static_cast<std::size_t>(h) * w;

    const std::string img_name = s.sample_id + ".img";
    std::vector<unsigned char> img_bytes(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = s.hu_patch.v[i];
      const auto q = static_cast<std::int16_t>(
          std::clamp(std::llround(v), -32768LL, 32767LL));
      const auto u = static_cast<std::uint16_t>(q);
      img_bytes[2 * i] = static_cast<unsigned char>(u & 0xff);
      img_bytes[2 * i + 1] = static_cast<unsigned char>(u >> 8);
    }
    write_file(dir / img_name, img_bytes);

    json js;
    js["id"] = s.sample_id;
    js["height"] = h;
    js["width"] = w;
    js["image"] = img_name;
    js["masks"] = json::array();
    for (std::size_t j = 0; j < s.annotations.masks.size(); ++j) {
      const Mask& m = s.annotations.masks[j];
      const std::string mask_name = s.sample_id + "_m" + std::to_string(j) + ".msk";
      std::vector<unsigned char> bytes(n);
      for (std::size_t i = 0; i < n; ++i)
        bytes[i] = m.v[i] ? 255 : 0;
      write_file(dir / mask_name, bytes);
      js["masks"].push_back(mask_name);
    }
    if (s.fold)
      js["fold"] = *s.fold;
    doc["samples"].push_back(std::move(js));
  }

  std::ofstream out(manifest_path);
  if (!out)
    throw data_error("cannot open " + manifest_path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out)
    throw data_error("write failed for " + manifest_path.string());
}

} // namespace ugmcs
