#include "ugmcs/losses.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "ugmcs/errors.hpp"

namespace ugmcs {

namespace {

Tensor mask_to_tensor(const Mask& m) {
  Tensor t({1, m.height, m.width});
  for (std::size_t i = 0; i < m.v.size(); ++i)
    t.data[i] = static_cast<double>(m.v[i]);
  return t;
}

void require_matching(const Tensor& pred, const Mask& target, const char* op) {
  if (pred.size() != static_cast<std::int64_t>(target.size()))
    throw invalid_input(std::string(op) + ": prediction/target shape mismatch");
}

} // namespace

ad::Value bce_graph(ad::Tape& tape, ad::Value pred, const Mask& target) {
  return tape.bce_mean(pred, mask_to_tensor(target), kBceEps);
}

ad::Value fusion_loss_graph(ad::Tape& tape, ad::Value pred,
                            const std::vector<Mask>& annotations,
                            FusionReduction reduction) {
  if (annotations.empty())
    throw invalid_input("fusion_loss: empty annotation set");
  const double coeff = reduction == FusionReduction::Mean
                           ? 1.0 / static_cast<double>(annotations.size())
                           : 1.0;
  std::vector<std::pair<double, ad::Value>> terms;
  terms.reserve(annotations.size());
  for (const Mask& gt : annotations)
    terms.emplace_back(coeff, bce_graph(tape, pred, gt));
  return tape.affine_scalars(terms);
}

double bce(const Tensor& pred, const Mask& target) {
  require_matching(pred, target, "bce");
  ad::Tape tape;
  return bce_graph(tape, tape.constant(pred), target)->value.data[0];
}

double mcm_loss(const Tensor& union_pred, const Tensor& inter_pred,
                const Mask& union_gt, const Mask& inter_gt) {
  require_matching(union_pred, union_gt, "mcm_loss");
  require_matching(inter_pred, inter_gt, "mcm_loss");
  return bce(union_pred, union_gt) + bce(inter_pred, inter_gt);
}

double fusion_loss(const Tensor& pred, const AnnotationSet& annotations,
                   FusionReduction reduction) {
  if (annotations.masks.empty())
    throw invalid_input("fusion_loss: empty annotation set");
  for (const Mask& m : annotations.masks)
    require_matching(pred, m, "fusion_loss");
  ad::Tape tape;
  return fusion_loss_graph(tape, tape.constant(pred), annotations.masks, reduction)
      ->value.data[0];
}

void validate_weights(const LossWeights& w) {
  if (w.alpha1 < 0.0 || w.alpha2 < 0.0 || w.alpha3 < 0.0)
    throw invalid_input("loss weights must be non-negative");
  if (w.alpha1 == 0.0 && w.alpha2 == 0.0 && w.alpha3 == 0.0)
    throw invalid_input("loss weights must not all be zero");
}

LossBreakdown total_loss(double l_mcm, double phi_a, double phi_b,
                         const LossWeights& weights) {
  validate_weights(weights);
  if (!std::isfinite(l_mcm) || !std::isfinite(phi_a) || !std::isfinite(phi_b))
    throw numeric_fault("total_loss: non-finite component");
  LossBreakdown b;
  b.l_mcm = l_mcm;
  b.phi_a = phi_a;
  b.phi_b = phi_b;
  b.total = weights.alpha1 * l_mcm + weights.alpha2 * phi_a + weights.alpha3 * phi_b;
  return b;
}

std::string loss_spec_to_json(const LossSpec& s) {
  nlohmann::json j;
  j["alpha1"] = s.weights.alpha1;
  j["alpha2"] = s.weights.alpha2;
  j["alpha3"] = s.weights.alpha3;
  j["fusion_phi_a"] = s.fusion_phi_a;
  j["fusion_phi_b"] = s.fusion_phi_b;
  j["fusion_reduction"] = s.reduction == FusionReduction::Mean ? "mean" : "sum";
  j["annotation_index"] = s.annotation_index;
  return j.dump();
}

LossSpec loss_spec_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input(std::string("loss config parse error: ") + e.what());
  }
  if (!j.is_object()) throw invalid_input("loss config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "alpha1" && k != "alpha2" && k != "alpha3" && k != "fusion_phi_a" &&
        k != "fusion_phi_b" && k != "fusion_reduction" && k != "annotation_index")
      throw invalid_input("unknown key '" + k + "' in loss config");
  }
  LossSpec s;
  try {
    if (j.contains("alpha1")) s.weights.alpha1 = j["alpha1"].get<double>();
    if (j.contains("alpha2")) s.weights.alpha2 = j["alpha2"].get<double>();
    if (j.contains("alpha3")) s.weights.alpha3 = j["alpha3"].get<double>();
    if (j.contains("fusion_phi_a")) s.fusion_phi_a = j["fusion_phi_a"].get<bool>();
    if (j.contains("fusion_phi_b")) s.fusion_phi_b = j["fusion_phi_b"].get<bool>();
    if (j.contains("annotation_index"))
      s.annotation_index = j["annotation_index"].get<int>();
    if (j.contains("fusion_reduction")) {
      const std::string r = j["fusion_reduction"].get<std::string>();
      if (r == "mean")
        s.reduction = FusionReduction::Mean;
      else if (r == "sum")
        s.reduction = FusionReduction::Sum;
      else
        throw invalid_input("loss.fusion_reduction must be 'mean' or 'sum'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input(std::string("loss config type error: ") + e.what());
  }
  return s;
}

} // namespace ugmcs
