#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "ugmcs/dataio.hpp"
#include "ugmcs/errors.hpp"
#include "ugmcs/metrics.hpp"

using namespace ugmcs;
namespace fs = std::filesystem;

TEST_CASE("normalize_hu: affine map with clipping") {
  Grid g(1, 5);
  g.v = {-1000.0, 0.0, 1000.0, 1500.0, -2000.0};
  const Grid n = normalize_hu(g);
  CHECK(n.v[0] == 0.0);
  CHECK(n.v[1] == 0.5);
  CHECK(n.v[2] == 1.0);
  CHECK(n.v[3] == 1.0);
  CHECK(n.v[4] == 0.0);

  Grid bad(1, 1);
  bad.v = {std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(normalize_hu(bad), invalid_input);
}

TEST_CASE("normalize_hu is monotone and inverts its own scale") {
  Grid g(1, 64);
  for (int i = 0; i < 64; ++i) g.v[i] = -1200.0 + i * 40.0;
  const Grid n = normalize_hu(g);
  for (int i = 1; i < 64; ++i) CHECK(n.v[i] >= n.v[i - 1]);
  for (int i = 0; i < 64; ++i) {
    const double v = i / 63.0;
    Grid back(1, 1);
    back.v = {v * 2000.0 - 1000.0};
    CHECK(normalize_hu(back).v[0] == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("to_net_input: constant image, replicated channels, binary masks") {
  NoduleSample s;
  s.sample_id = "c";
  s.hu_patch = Grid(50, 50, 0.0); // HU 0 -> 0.5 after normalization
  s.annotations.sample_id = "c";
  s.annotations.masks = {Mask(50, 50, 1), Mask(50, 50, 1)};

  const NetInput in = to_net_input(s, 64);
  CHECK(in.image.shape == std::vector<int>{3, 64, 64});
  for (double v : in.image.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      CHECK(in.image.at3(0, y, x) == in.image.at3(1, y, x));
      CHECK(in.image.at3(0, y, x) == in.image.at3(2, y, x));
    }
  CHECK(in.target_union.count() == 64 * 64); // all-ones mask stays all-ones
  CHECK(in.target_intersection.count() == 64 * 64);
}

TEST_CASE("to_net_input: resized targets keep the sandwich invariant") {
  const auto samples = synth_generate(10, 3, 77);
  for (const auto& s : samples) {
    const NetInput in = to_net_input(s, 64);
    for (const Mask& m : in.target_annotations) {
      for (auto b : m.v) CHECK((b == 0 || b == 1));
      for (std::size_t p = 0; p < m.v.size(); ++p) {
        CHECK(in.target_intersection.v[p] <= m.v[p]);
        CHECK(m.v[p] <= in.target_union.v[p]);
      }
    }
  }
}

TEST_CASE("synth_generate: determinism and construction guarantees") {
  const auto a = synth_generate(5, 3, 42);
  const auto b = synth_generate(5, 3, 42);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sample_id == b[i].sample_id);
    CHECK(a[i].hu_patch.v == b[i].hu_patch.v);
    REQUIRE(a[i].annotations.masks.size() == 3);
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(a[i].annotations.masks[j].v == b[i].annotations.masks[j].v);
    CHECK(validate_annotation_set(a[i].annotations).ok);
    CHECK(a[i].hu_patch.height == 50);
    CHECK(a[i].hu_patch.width == 50);
  }
  const auto c = synth_generate(5, 3, 43);
  bool any_diff = false;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c[i].hu_patch.v != a[i].hu_patch.v) any_diff = true;
  CHECK(any_diff);

  CHECK_THROWS_AS(synth_generate(0, 3, 1), invalid_input);
  CHECK_THROWS_AS(synth_generate(1, 1, 1), invalid_input);
  CHECK_THROWS_AS(synth_generate(1, 5, 1), invalid_input);
}

TEST_CASE("synth corpus: disagreement exists and LC is darker than HC") {
  const auto samples = synth_generate(100, 3, 7);
  double lc_sum = 0.0, hc_sum = 0.0;
  std::size_t lc_n = 0, hc_n = 0;
  for (const auto& s : samples) {
    const Mask u = union_mask(s.annotations);
    const Mask hc = intersection_mask(s.annotations);
    for (std::size_t p = 0; p < u.v.size(); ++p) {
      if (u.v[p] && !hc.v[p]) {
        lc_sum += s.hu_patch.v[p];
        ++lc_n;
      }
      if (hc.v[p]) {
        hc_sum += s.hu_patch.v[p];
        ++hc_n;
      }
    }
  }
  REQUIRE(lc_n > 0);
  REQUIRE(hc_n > 0);
  CHECK(lc_sum / lc_n < hc_sum / hc_n);
}

TEST_CASE("split_folds: partitions with balanced sizes") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("s" + std::to_string(i));
  const FoldSplit f = split_folds(ids, 5, 9);
  std::vector<int> sizes(5, 0);
  for (const auto& id : ids) ++sizes[f.fold_of(id)];
  for (int s : sizes) CHECK(s == 2);

  const FoldSplit g = split_folds(ids, 5, 9);
  CHECK(f.assignments == g.assignments);

  ids.push_back("s10");
  const FoldSplit h = split_folds(ids, 5, 9);
  std::vector<int> sizes2(5, 0);
  for (const auto& id : ids) ++sizes2[h.fold_of(id)];
  std::sort(sizes2.begin(), sizes2.end());
  CHECK(sizes2 == std::vector<int>{2, 2, 2, 2, 3});

  CHECK_THROWS_AS(split_folds({"a"}, 2, 1), invalid_input);
  CHECK_THROWS_AS(split_folds(ids, 1, 1), invalid_input);
}

TEST_CASE("manifest: round-trip is bit-exact") {
  const auto dir = fs::temp_directory_path() / "ugmcs_manifest_test";
  fs::remove_all(dir);
  auto samples = synth_generate(5, 2, 11);
  samples[0].fold = 3;
  save_manifest(samples, dir / "manifest.json");
  const auto loaded = load_manifest(dir / "manifest.json");
  REQUIRE(loaded.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(loaded[i].sample_id == samples[i].sample_id);
    CHECK(loaded[i].hu_patch.v == samples[i].hu_patch.v);
    CHECK(loaded[i].fold == samples[i].fold);
    REQUIRE(loaded[i].annotations.masks.size() == samples[i].annotations.masks.size());
    for (std::size_t j = 0; j < samples[i].annotations.masks.size(); ++j)
      CHECK(loaded[i].annotations.masks[j].v == samples[i].annotations.masks[j].v);
  }
  fs::remove_all(dir);
}

TEST_CASE("manifest: descriptive load errors") {
  const auto dir = fs::temp_directory_path() / "ugmcs_manifest_err";
  fs::remove_all(dir);
  const auto samples = synth_generate(2, 2, 12);
  save_manifest(samples, dir / "manifest.json");

  SUBCASE("missing mask file") {
    fs::remove(dir / "synth_0001_m0.msk");
    try {
      load_manifest(dir / "manifest.json");
      FAIL("expected data_error");
    } catch (const data_error& e) {
      CHECK(std::string(e.what()).find("synth_0001_m0.msk") != std::string::npos);
      CHECK(std::string(e.what()).find("synth_0001") != std::string::npos);
    }
  }

  SUBCASE("non-binary mask byte") {
    std::fstream f(dir / "synth_0000_m1.msk",
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(10);
    const char seven = 7;
    f.write(&seven, 1);
    f.close();
    try {
      load_manifest(dir / "manifest.json");
      FAIL("expected data_error");
    } catch (const data_error& e) {
      CHECK(std::string(e.what()).find("non-binary byte 7") != std::string::npos);
      CHECK(std::string(e.what()).find("synth_0000") != std::string::npos);
    }
  }

  SUBCASE("missing manifest") {
    CHECK_THROWS_AS(load_manifest(dir / "nope.json"), data_error);
  }

  fs::remove_all(dir);
}
