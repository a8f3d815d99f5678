#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ugmcs/evalharness.hpp"
#include "ugmcs/losses.hpp"
#include "ugmcs/model.hpp"
#include "ugmcs/trainer.hpp"

namespace ugmcs::cli {

// One run's effective configuration: JSON file sections (net/train/loss/eval)
// plus dataset/output wiring. Unknown keys anywhere are rejected.
struct RunConfig {
  NetConfig net;
  TrainConfig train;
  LossSpec loss;
  EvalOptions eval;
  std::string dataset;
  std::string out_dir;
  std::uint64_t seed = 0;
  int folds = 5;
  std::string label = "run";

  void validate_for_training() const; // needs dataset + out_dir
};

RunConfig load_run_config(const std::filesystem::path& path);

// Writes the effective configuration next to the run's outputs.
void write_config_echo(const std::filesystem::path& path, const RunConfig& cfg);

} // namespace ugmcs::cli
