#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ugmcs/grid.hpp"
#include "ugmcs/mask.hpp"
#include "ugmcs/tensor.hpp"

namespace ugmcs {

// One CT patch with its expert annotations. HU values are stored as whole
// numbers (they round-trip through int16 raw files bit-exactly).
struct NoduleSample {
  std::string sample_id;
  Grid hu_patch;
  AnnotationSet annotations;
  std::optional<int> fold;
};

// Network-ready sample: replicated-grayscale image plus resized targets.
struct NetInput {
  Tensor image; // {3, S, S}, all channels identical, values in [0, 1]
  Mask target_union;
  Mask target_intersection;
  std::vector<Mask> target_annotations;
};

struct FoldSplit {
  int k = 0;
  std::map<std::string, int> assignments; // sample_id -> fold in [0, k)

  int fold_of(const std::string& id) const;
};

// Clip HU to [-1000, 1000], then map linearly to [0, 1].
Grid normalize_hu(const Grid& patch);

// Normalize, resize the image bilinearly to input_size and replicate to three
// channels; resize each mask by nearest-neighbour and recompute
// union/intersection on the resized masks.
NetInput to_net_input(const NoduleSample& sample, int input_size);

// Deterministic synthetic multi-annotator nodules: elliptic blobs with a
// bright core, a dim rim ramping to lung background, optional ground-glass
// halo, and per-annotator boundary jitter. 50x50 native resolution.
std::vector<NoduleSample> synth_generate(int count, int annotators,
                                         std::uint64_t seed);

// Seeded shuffle followed by round-robin assignment; fold sizes differ by <=1.
FoldSplit split_folds(const std::vector<std::string>& ids, int k,
                      std::uint64_t seed);

// Manifest I/O. The manifest is a JSON file; images are raw int16
// little-endian HU, masks raw uint8 in {0, 255}, both row-major with
// dimensions declared in the manifest.
std::vector<NoduleSample> load_manifest(const std::filesystem::path& manifest_path);
void save_manifest(const std::vector<NoduleSample>& samples,
                   const std::filesystem::path& manifest_path);

} // namespace ugmcs
