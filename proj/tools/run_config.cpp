#include "run_config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "ugmcs/errors.hpp"

namespace ugmcs::cli {

using nlohmann::json;

void RunConfig::validate_for_training() const {
  if (dataset.empty())
    throw invalid_input("config field 'dataset' is required");
  if (out_dir.empty())
    throw invalid_input("config field 'out_dir' is required");
  if (!std::filesystem::exists(dataset))
    throw invalid_input("config field 'dataset': path does not exist: " + dataset);
  if (folds < 2)
    throw invalid_input("config field 'folds' must be >= 2");
  net.validate();
  train.validate();
  validate_weights(loss.weights);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw invalid_input("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw invalid_input("config parse error in " + path.string() + ": " + e.what());
  }
  if (!j.is_object())
    throw invalid_input("config root must be a JSON object");

  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "net" && k != "train" && k != "loss" && k != "eval" && k != "dataset" &&
        k != "out_dir" && k != "seed" && k != "folds" && k != "label")
      throw invalid_input("unknown key '" + k + "' in config file");
  }

  RunConfig cfg;
  try {
    if (j.contains("net")) cfg.net = net_config_from_json(j["net"].dump());
    if (j.contains("train")) cfg.train = train_config_from_json(j["train"].dump());
    if (j.contains("loss")) cfg.loss = loss_spec_from_json(j["loss"].dump());
    if (j.contains("eval")) {
      const json& e = j["eval"];
      for (auto it = e.begin(); it != e.end(); ++it) {
        const std::string& k = it.key();
        if (k != "threshold" && k != "annotation_index" && k != "nsd_tolerance")
          throw invalid_input("unknown key '" + k + "' in eval config");
      }
      if (e.contains("threshold")) cfg.eval.threshold = e["threshold"].get<double>();
      if (e.contains("annotation_index"))
        cfg.eval.annotation_index = e["annotation_index"].get<int>();
      if (e.contains("nsd_tolerance"))
        cfg.eval.nsd_tolerance = e["nsd_tolerance"].get<double>();
    }
    if (j.contains("dataset")) cfg.dataset = j["dataset"].get<std::string>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("folds")) cfg.folds = j["folds"].get<int>();
    if (j.contains("label")) cfg.label = j["label"].get<std::string>();
  } catch (const json::exception& e) {
    throw invalid_input(std::string("config type error: ") + e.what());
  }

  // The eval reference annotation follows the loss section unless set
  // explicitly; keep them aligned by default.
  if (!j.contains("eval") ||
      !j["eval"].contains("annotation_index"))
    cfg.eval.annotation_index = cfg.loss.annotation_index;
  return cfg;
}

void write_config_echo(const std::filesystem::path& path, const RunConfig& cfg) {
  json j;
  j["net"] = json::parse(net_config_to_json(cfg.net));
  j["train"] = json::parse(train_config_to_json(cfg.train));
  j["loss"] = json::parse(loss_spec_to_json(cfg.loss));
  json e;
  e["threshold"] = cfg.eval.threshold;
  e["annotation_index"] = cfg.eval.annotation_index;
  e["nsd_tolerance"] = cfg.eval.nsd_tolerance;
  j["eval"] = e;
  j["dataset"] = cfg.dataset;
  j["out_dir"] = cfg.out_dir;
  j["seed"] = cfg.seed;
  j["folds"] = cfg.folds;
  j["label"] = cfg.label;

  std::ofstream out(path);
  if (!out)
    throw data_error("cannot write config echo to " + path.string());
  out << j.dump(2) << '\n';
}

} // namespace ugmcs::cli
