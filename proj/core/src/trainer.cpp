#include "ugmcs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ugmcs/errors.hpp"
#include "ugmcs/metrics.hpp"
#include "ugmcs/parallel.hpp"
#include "ugmcs/rng.hpp"

namespace ugmcs {

void TrainConfig::validate() const {
  if (!(lr_max > lr_min)) throw invalid_input("train.lr_max must exceed lr_min");
  if (lr_min < 0.0) throw invalid_input("train.lr_min must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw invalid_input("train.momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw invalid_input("train.weight_decay must be >= 0");
  if (batch_size < 1) throw invalid_input("train.batch_size must be >= 1");
  if (epochs < 1) throw invalid_input("train.epochs must be >= 1");
  if (restart_period < 1) throw invalid_input("train.restart_period must be >= 1");
  if (threads < 0) throw invalid_input("train.threads must be >= 0");
}

double sgdr_lr(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw invalid_input("sgdr_lr: negative epoch");
  const int e = epoch % cfg.restart_period;
  const double c = std::cos(3.14159265358979323846 * e / cfg.restart_period);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + c);
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["lr_max"] = c.lr_max;
  j["lr_min"] = c.lr_min;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["restart_period"] = c.restart_period;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input(std::string("train config parse error: ") + e.what());
  }
  if (!j.is_object()) throw invalid_input("train config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "lr_max" && k != "lr_min" && k != "momentum" && k != "weight_decay" &&
        k != "batch_size" && k != "epochs" && k != "restart_period" && k != "seed" &&
        k != "threads")
      throw invalid_input("unknown key '" + k + "' in train config");
  }
  TrainConfig c;
  try {
    if (j.contains("lr_max")) c.lr_max = j["lr_max"].get<double>();
    if (j.contains("lr_min")) c.lr_min = j["lr_min"].get<double>();
    if (j.contains("momentum")) c.momentum = j["momentum"].get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("restart_period")) c.restart_period = j["restart_period"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input(std::string("train config type error: ") + e.what());
  }
  return c;
}

SgdState SgdState::zeros_like(const NetState& state) {
  SgdState s;
  s.velocity.reserve(state.entries().size());
  for (const auto& [name, t] : state.entries())
    s.velocity.emplace_back(t.shape);
  return s;
}

namespace {

struct SampleLoss {
  LossBreakdown breakdown;
  std::vector<Tensor> grads; // aligned with state entries; empty = untouched
};

// Builds the loss graph for one sample and returns its gradient contribution.
SampleLoss sample_pass(const NetState& state, const NetConfig& net_cfg,
                       const NetInput& input, const LossSpec& loss) {
  if (loss.annotation_index < 0 ||
      loss.annotation_index >= static_cast<int>(input.target_annotations.size()))
    throw invalid_input("annotation_index out of range for a training sample");

  ad::Tape tape;
  BoundState bound;
  const ForwardGraph g =
      net_forward_graph(tape, net_cfg, state, input.image, true, &bound);

  const Mask& ref = input.target_annotations[loss.annotation_index];
  ad::Value l_mcm = nullptr;
  ad::Value phi_a = nullptr;
  if (g.union_pred) {
    l_mcm = tape.affine_scalars({
        {1.0, bce_graph(tape, g.union_pred, input.target_union)},
        {1.0, bce_graph(tape, g.inter_pred, input.target_intersection)},
    });
    phi_a = loss.fusion_phi_a
                ? fusion_loss_graph(tape, g.x_uni, input.target_annotations, loss.reduction)
                : bce_graph(tape, g.x_uni, ref);
  }
  ad::Value phi_b = loss.fusion_phi_b
                        ? fusion_loss_graph(tape, g.x_s, input.target_annotations, loss.reduction)
                        : bce_graph(tape, g.x_s, ref);

  std::vector<std::pair<double, ad::Value>> terms;
  if (l_mcm) terms.emplace_back(loss.weights.alpha1, l_mcm);
  if (phi_a) terms.emplace_back(loss.weights.alpha2, phi_a);
  terms.emplace_back(loss.weights.alpha3, phi_b);
  ad::Value total = tape.affine_scalars(terms);

  SampleLoss out;
  out.breakdown.l_mcm = l_mcm ? l_mcm->value.data[0] : 0.0;
  out.breakdown.phi_a = phi_a ? phi_a->value.data[0] : 0.0;
  out.breakdown.phi_b = phi_b->value.data[0];
  out.breakdown.total = total->value.data[0];

  if (!std::isfinite(out.breakdown.l_mcm))
    throw numeric_fault("non-finite MCM loss (union/intersection heads)");
  if (!std::isfinite(out.breakdown.phi_a))
    throw numeric_fault("non-finite fusion loss on X_Uni");
  if (!std::isfinite(out.breakdown.phi_b))
    throw numeric_fault("non-finite fusion loss on X_S");

  tape.backward(total);

  out.grads.resize(bound.leaves.size());
  for (std::size_t i = 0; i < bound.leaves.size(); ++i) {
    ad::Value leaf = bound.leaves[i];
    if (leaf && leaf->has_grad()) out.grads[i] = std::move(leaf->grad);
  }
  return out;
}

} // namespace

LossBreakdown train_step(NetState& state, SgdState& opt, const NetConfig& net_cfg,
                         const std::vector<NetInput>& batch, const TrainConfig& cfg,
                         const LossSpec& loss, double lr) {
  if (batch.empty()) throw invalid_input("train_step: empty batch");
  validate_weights(loss.weights);
  if (opt.velocity.size() != state.entries().size())
    throw invalid_input("train_step: optimizer state does not match parameters");

  const std::size_t n = batch.size();
  std::vector<SampleLoss> results(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    results[i] = sample_pass(state, net_cfg, batch[i], loss);
  });

  // Ordered reduction keeps the step bit-deterministic for any thread count.
  LossBreakdown mean;
  for (const SampleLoss& r : results) {
    mean.l_mcm += r.breakdown.l_mcm;
    mean.phi_a += r.breakdown.phi_a;
    mean.phi_b += r.breakdown.phi_b;
    mean.total += r.breakdown.total;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  mean.l_mcm *= inv_n;
  mean.phi_a *= inv_n;
  mean.phi_b *= inv_n;
  mean.total *= inv_n;

  auto& entries = state.entries();
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor* sum = nullptr;
    for (SampleLoss& r : results) {
      if (r.grads[p].empty()) continue;
      if (!sum) {
        sum = &r.grads[p];
      } else {
        for (std::size_t j = 0; j < sum->data.size(); ++j)
          sum->data[j] += r.grads[p].data[j];
      }
    }
    if (!sum) continue; // parameter not touched by this config

    Tensor& theta = entries[p].second;
    Tensor& vel = opt.velocity[p];
    for (std::size_t j = 0; j < theta.data.size(); ++j) {
      const double g = sum->data[j] * inv_n + cfg.weight_decay * theta.data[j];
      vel.data[j] = cfg.momentum * vel.data[j] + g;
      theta.data[j] -= lr * vel.data[j];
    }
  }
  return mean;
}

namespace {

struct EvalTriple {
  double dsc = 0.0, iou = 0.0, nsd_v = 0.0;
};

Mask binarize(const Tensor& prob, double threshold) {
  Mask m(prob.dim(1), prob.dim(2));
  for (std::size_t i = 0; i < m.v.size(); ++i)
    m.v[i] = prob.data[i] >= threshold ? 1 : 0;
  return m;
}

} // namespace

FitResult fit(const std::vector<NoduleSample>& dataset, const FoldSplit& split,
              int fold_index, const NetConfig& net_cfg, const TrainConfig& cfg,
              const LossSpec& loss, const std::filesystem::path& out_dir) {
  net_cfg.validate();
  cfg.validate();
  validate_weights(loss.weights);
  if (fold_index < 0 || fold_index >= split.k)
    throw invalid_input("fit: fold_index out of range");

  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (split.fold_of(dataset[i].sample_id) == fold_index)
      val_idx.push_back(i);
    else
      train_idx.push_back(i);
  }
  if (train_idx.empty()) throw invalid_input("fit: training split is empty");
  if (val_idx.empty()) throw invalid_input("fit: held-out fold is empty");

  std::vector<NetInput> inputs(dataset.size());
  parallel_for(dataset.size(), cfg.threads, [&](std::size_t i) {
    inputs[i] = to_net_input(dataset[i], net_cfg.input_size);
  });

  std::filesystem::create_directories(out_dir / "checkpoints");
  std::filesystem::create_directories(out_dir / "logs");
  std::ofstream train_log(out_dir / "logs" / "train.log");
  std::ofstream loss_log(out_dir / "logs" / "loss.log");
  if (!train_log || !loss_log)
    throw data_error("fit: cannot open log files under " + (out_dir / "logs").string());
  train_log.precision(10);
  loss_log.precision(10);
  loss_log << "step,l_mcm,phi_a,phi_b,total\n";

  NetState state = init_net_state(net_cfg, cfg.seed);
  SgdState opt = SgdState::zeros_like(state);
  Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  FitResult result;
  result.best_val_dsc = -1.0;
  const auto final_path = out_dir / "checkpoints" / "final.ckpt";
  const auto best_path = out_dir / "checkpoints" / "best.ckpt";
  std::int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = sgdr_lr(epoch, cfg);

    std::vector<std::size_t> order = train_idx;
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(
          shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i)));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t off = 0; off < order.size();
         off += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), off + static_cast<std::size_t>(cfg.batch_size));
      std::vector<NetInput> batch;
      batch.reserve(end - off);
      for (std::size_t i = off; i < end; ++i) batch.push_back(inputs[order[i]]);

      const LossBreakdown bd = train_step(state, opt, net_cfg, batch, cfg, loss, lr);
      loss_log << step << ',' << bd.l_mcm << ',' << bd.phi_a << ',' << bd.phi_b << ','
               << bd.total << '\n';
      loss_sum += bd.total;
      ++batches;
      ++step;
    }

    // Held-out evaluation on X_S binarized at 0.5.
    std::vector<EvalTriple> evals(val_idx.size());
    parallel_for(val_idx.size(), cfg.threads, [&](std::size_t i) {
      const NetInput& in = inputs[val_idx[i]];
      if (loss.annotation_index < 0 ||
          loss.annotation_index >= static_cast<int>(in.target_annotations.size()))
        throw invalid_input("annotation_index out of range for a held-out sample");
      ad::Tape tape;
      const ForwardGraph g = net_forward_graph(tape, net_cfg, state, in.image, false);
      const Mask pred = binarize(g.x_s->value, 0.5);
      const Mask& gt = in.target_annotations[loss.annotation_index];
      evals[i] = EvalTriple{dsc(pred, gt), iou(pred, gt), nsd(pred, gt, 1.0)};
    });
    EpochLog el;
    el.epoch = epoch;
    el.lr = lr;
    el.mean_total = loss_sum / batches;
    for (const EvalTriple& e : evals) {
      el.val_dsc += e.dsc;
      el.val_iou += e.iou;
      el.val_nsd += e.nsd_v;
    }
    el.val_dsc /= static_cast<double>(evals.size());
    el.val_iou /= static_cast<double>(evals.size());
    el.val_nsd /= static_cast<double>(evals.size());
    result.epochs.push_back(el);

    train_log << el.epoch << ' ' << el.lr << ' ' << el.mean_total << ' ' << el.val_dsc
              << ' ' << el.val_iou << ' ' << el.val_nsd << '\n';

    if (el.val_dsc > result.best_val_dsc) {
      result.best_val_dsc = el.val_dsc;
      save_checkpoint(best_path, net_cfg, state);
    }
  }

  save_checkpoint(final_path, net_cfg, state);
  result.final_checkpoint = final_path;
  result.best_checkpoint = best_path;
  return result;
}

} // namespace ugmcs
