#pragma once

#include <vector>

#include "ugmcs/autodiff.hpp"
#include "ugmcs/mask.hpp"
#include "ugmcs/tensor.hpp"

namespace ugmcs {

struct LossWeights {
  double alpha1 = 0.5; // MCM term
  double alpha2 = 0.5; // X_Uni fusion term
  double alpha3 = 1.0; // X_S fusion term
};

enum class FusionReduction { Mean, Sum };

// How the objective is assembled during training. With a fusion toggle off,
// the corresponding head is trained against the single reference annotation
// instead of the whole set.
struct LossSpec {
  LossWeights weights;
  bool fusion_phi_a = true;
  bool fusion_phi_b = true;
  FusionReduction reduction = FusionReduction::Mean;
  int annotation_index = 0;
};

struct LossBreakdown {
  double l_mcm = 0.0;
  double phi_a = 0.0;
  double phi_b = 0.0;
  double total = 0.0;
};

constexpr double kBceEps = 1e-7;

// Pixel-mean binary cross-entropy with predictions clamped to [eps, 1-eps].
double bce(const Tensor& pred, const Mask& target);

// bce(union_pred, union_gt) + bce(inter_pred, inter_gt).
double mcm_loss(const Tensor& union_pred, const Tensor& inter_pred,
                const Mask& union_gt, const Mask& inter_gt);

// Mean (or sum) of bce(pred, GT_j) over the annotation set.
double fusion_loss(const Tensor& pred, const AnnotationSet& annotations,
                   FusionReduction reduction = FusionReduction::Mean);

// alpha1*l_mcm + alpha2*phi_a + alpha3*phi_b. Weights must be non-negative
// and not all zero; components must be finite.
LossBreakdown total_loss(double l_mcm, double phi_a, double phi_b,
                         const LossWeights& weights);

void validate_weights(const LossWeights& weights);

std::string loss_spec_to_json(const LossSpec& spec);
LossSpec loss_spec_from_json(const std::string& json_text); // strict keys

// Graph-mode counterparts used inside training tapes.
ad::Value bce_graph(ad::Tape& tape, ad::Value pred, const Mask& target);
ad::Value fusion_loss_graph(ad::Tape& tape, ad::Value pred,
                            const std::vector<Mask>& annotations,
                            FusionReduction reduction);

} // namespace ugmcs
