#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ugmcs/dataio.hpp"
#include "ugmcs/losses.hpp"
#include "ugmcs/model.hpp"

namespace ugmcs {

struct TrainConfig {
  double lr_max = 1e-5;
  double lr_min = 0.0;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 32;
  int epochs = 200;
  int restart_period = 50; // epochs between warm restarts
  std::uint64_t seed = 0;
  int threads = 0; // batch-parallel workers; 0 = hardware concurrency

  void validate() const;
};

// Cosine schedule with hard restarts:
// lr(e) = lr_min + (lr_max - lr_min)/2 * (1 + cos(pi * (e mod period) / period)).
double sgdr_lr(int epoch, const TrainConfig& cfg);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& json_text); // strict keys

// Momentum buffers aligned with NetState entries.
struct SgdState {
  std::vector<Tensor> velocity;
  static SgdState zeros_like(const NetState& state);
};

// One SGD step over a batch: forward + backward per sample (batch-parallel,
// reduced in sample order), then v <- mu*v + g + wd*theta; theta <- theta - lr*v.
// Only parameters the configured graph touches are updated.
LossBreakdown train_step(NetState& state, SgdState& opt, const NetConfig& net_cfg,
                         const std::vector<NetInput>& batch, const TrainConfig& cfg,
                         const LossSpec& loss, double lr);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double mean_total = 0.0;
  double val_dsc = 0.0;
  double val_iou = 0.0;
  double val_nsd = 0.0;
};

struct FitResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  std::vector<EpochLog> epochs;
  double best_val_dsc = 0.0;
};

// Trains on every fold except fold_index and evaluates the held-out fold each
// epoch (X_S binarized at 0.5 against the reference annotation). Writes
// logs/train.log (one line per epoch), logs/loss.log (one line per step) and
// checkpoints/{final,best}.ckpt under out_dir.
FitResult fit(const std::vector<NoduleSample>& dataset, const FoldSplit& split,
              int fold_index, const NetConfig& net_cfg, const TrainConfig& cfg,
              const LossSpec& loss, const std::filesystem::path& out_dir);

} // namespace ugmcs
