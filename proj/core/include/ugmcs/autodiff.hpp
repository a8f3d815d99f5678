#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "ugmcs/tensor.hpp"

namespace ugmcs::ad {

// Reverse-mode automatic differentiation over dense tensors. A Tape owns the
// computation graph of one forward pass; creation order is the topological
// order, so backward() is a reverse sweep. Node pointers stay valid for the
// tape's lifetime. Single-threaded per tape; run one tape per worker.
struct Node {
  Tensor value;
  Tensor grad; // allocated lazily; empty until something flows back
  bool requires_grad = false;
  std::function<void()> backprop; // empty for leaves

  bool has_grad() const { return !grad.data.empty(); }
};

using Value = Node*;

class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Value leaf(Tensor v, bool requires_grad);
  Value constant(Tensor v) { return leaf(std::move(v), false); }

  // Elementwise (same shape).
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value scale(Value a, double c);
  Value relu(Value a);
  Value sigmoid(Value a);

  // s has a single element; broadcasts over x.
  Value scalar_mul(Value s, Value x);

  // x {C,H,W} scaled per position by m {1,H,W}.
  Value mul_spatial(Value x, Value m);

  // Weighted sum of single-element values: sum_i coeff_i * s_i.
  Value affine_scalars(const std::vector<std::pair<double, Value>>& terms);

  // x {Ci,H,W}, w {Co,Ci,kh,kw}, b {Co}; stride 1, zero padding `pad`.
  Value conv2d(Value x, Value w, Value b, int pad);

  // Depthwise convolution with one fixed (non-learnable) kernel {kh,kw}
  // applied to every channel; clamp-to-edge padding keeps constants constant.
  Value fixed_depthwise_conv(Value x, const Tensor& kernel);

  // Per-channel normalization over the spatial extent with learnable affine.
  Value instance_norm(Value x, Value gamma, Value beta, double eps = 1e-5);

  // 2x2 max pooling, stride 2 (spatial dims must be even).
  Value maxpool2(Value x);

  // 2x nearest-neighbour upsampling.
  Value upsample2_nearest(Value x);

  Value concat_channels(const std::vector<Value>& xs);

  // Single-head spatial self-attention. q,k {Cq,H,W}, v {Cv,H,W}; for each
  // position i the output is sum_j softmax_j(q_i.k_j / sqrt(Cq)) * v_j.
  // Attention rows are recomputed during backward instead of stored.
  Value spatial_attention(Value q, Value k, Value v);

  // out = x .* keep; gradient flows only through kept entries. `keep` is a
  // per-element 0/1 decision computed by the caller and treated as constant.
  Value hard_gate(Value x, std::vector<std::uint8_t> keep);

  // Cosine similarity of the flattened tensors; single-element output.
  // Defined as 0 (with zero gradient) if either norm is 0.
  Value cosine_flat(Value a, Value b);

  // Mean binary cross-entropy with predictions clamped to [eps, 1-eps].
  // target values must be 0 or 1; single-element output.
  Value bce_mean(Value pred, const Tensor& target, double eps = 1e-7);

  // Reverse sweep from a single-element root; accumulates into leaf grads.
  void backward(Value root);

  std::size_t node_count() const { return nodes_.size(); }

  static void ensure_grad(Value n) {
    if (!n->has_grad()) n->grad = Tensor(n->value.shape);
  }

private:
  Value make(Tensor v, bool requires_grad);

  std::deque<Node> nodes_;
};

// Row-softmax attention weights for small inputs; test/inspection helper
// mirroring spatial_attention's internals. Returns {N, N} with N = H*W.
Tensor attention_rows(const Tensor& q, const Tensor& k);

} // namespace ugmcs::ad
