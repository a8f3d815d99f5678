#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ugmcs/autodiff.hpp"
#include "ugmcs/filters.hpp"
#include "ugmcs/mask.hpp"
#include "ugmcs/tensor.hpp"

namespace ugmcs {

enum class FilterKind { Gabor, Otsu };

const char* to_string(FilterKind k);
FilterKind filter_kind_from_string(const std::string& s);

// Architecture hyperparameters. The defaults describe the full-size network;
// desk-scale runs shrink depth/base_channels/input_size.
struct NetConfig {
  int depth = 5;            // number of down-sampling steps
  int base_channels = 32;   // channels at the top encoder level
  int input_size = 64;      // spatial size, divisible by 2^depth
  int attention_channels = 8;
  GaborConfig gabor;
  int otsu_bins = 256;
  bool use_uam = true;   // off: plain backbone with a single segmentation head
  bool use_iucm = true;  // off: X_S comes from a head on R instead
  bool attention_gates = true; // off: plain U-Net skip connections
  FilterKind filter_lc = FilterKind::Gabor;
  FilterKind filter_hc = FilterKind::Otsu;
  FilterKind filter_uni = FilterKind::Gabor;

  void validate() const; // throws invalid_input with the offending field
  bool operator==(const NetConfig&) const = default;
};

std::string net_config_to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const std::string& json_text); // strict keys

// Learnable parameters keyed by layer path. Iteration order is creation
// order, which is identical for identical configs — optimizer state and
// checkpoints rely on that.
class NetState {
public:
  Tensor& add(const std::string& name, Tensor t);
  bool contains(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  std::size_t scalar_count() const;

private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Creates every parameter the architecture can use (including branches that
// are toggled off, so toggles can flip without re-initialization).
// Convolution weights are fan-in-scaled uniform, biases and norm shifts zero,
// norm scales one; draws are seeded and ordered by layer path creation.
NetState init_net_state(const NetConfig& cfg, std::uint64_t seed);

struct ForwardOutputs {
  Tensor r; // {32, S, S}
  std::optional<Tensor> r_lc, r_hc, r_uni;              // {32,S,S}, UAM only
  std::optional<Tensor> union_pred, inter_pred, x_uni;  // {1,S,S}, UAM only
  Tensor x_s;                                           // {1, S, S}
  std::optional<MultiConfidenceMask> mcm;               // from union/inter preds
  double s_uni = 0.0, s_lc = 0.0, s_hc = 0.0;           // cosines, IUCM only
};

// Values of the same outputs inside a live tape (for loss graphs); absent
// branches are nullptr.
struct ForwardGraph {
  ad::Value r = nullptr;
  ad::Value r_lc = nullptr, r_hc = nullptr, r_uni = nullptr;
  ad::Value union_pred = nullptr, inter_pred = nullptr, x_uni = nullptr;
  ad::Value x_s = nullptr;
  ad::Value s_uni = nullptr, s_lc = nullptr, s_hc = nullptr;
};

// Tape leaves bound to state entries (aligned with state.entries(); nullptr
// for parameters the configured graph never touched).
struct BoundState {
  std::vector<ad::Value> leaves;
};

ForwardGraph net_forward_graph(ad::Tape& tape, const NetConfig& cfg,
                               const NetState& state, const Tensor& image,
                               bool requires_grad, BoundState* bound = nullptr);

// Convenience forward on plain tensors; checks parameter finiteness and
// composes the multi-confidence mask from the union/intersection heads.
ForwardOutputs net_forward(const NetConfig& cfg, const NetState& state,
                           const Tensor& image);

// Stage-level entry points.
Tensor fem_forward(const NetState& state, const NetConfig& cfg, const Tensor& image);

struct UamOutputs {
  Tensor r_lc, r_hc, r_uni;
  Tensor union_pred, inter_pred, x_uni;
};
UamOutputs uam_forward(const NetState& state, const NetConfig& cfg, const Tensor& r);

// branch selects the parameter subtree: "lc", "hc", or "uni".
Tensor faab_forward(const NetState& state, const NetConfig& cfg, const Tensor& r_z,
                    FilterKind kind, const std::string& branch);

struct IucmOutputs {
  Tensor x_s;
  double s_uni = 0.0, s_lc = 0.0, s_hc = 0.0;
};
IucmOutputs iucm_forward(const NetState& state, const NetConfig& cfg,
                         const Tensor& r, const Tensor& r_lc,
                         const Tensor& r_hc, const Tensor& r_uni);

// ---- checkpoints -----------------------------------------------------------

struct Checkpoint {
  NetConfig config;
  NetState state;
};

// Single-file container: magic, format version, JSON header echoing the
// config and listing parameter shapes, then raw little-endian doubles.
void save_checkpoint(const std::filesystem::path& path, const NetConfig& cfg,
                     const NetState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Rejects the file when its config differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const NetConfig& expected);

} // namespace ugmcs
