#pragma once
// Transformer building blocks: multi-head attention, pre-norm layers, masks.
// Attention dispatches to a fused streaming kernel when no gradient is being
// tracked (evaluation/generation); the tape path composes primitive ops so
// every gradient is covered by the finite-difference suite.

#include <functional>
#include <string>

#include "tcvqa/tensor.hpp"

namespace tcv {

struct AttentionParams {
  Tensor wq, wk, wv, wo;  // each [d x d]
  int64_t heads = 1;
};

struct LayerNormParams {
  Tensor gain, bias;  // each [d]
};

struct MlpParams {
  Tensor w1, b1, w2, b2;  // [d x 4d], [4d], [4d x d], [d]
};

struct TransformerLayer {
  AttentionParams attn;
  LayerNormParams ln1, ln2;
  MlpParams mlp;
};

constexpr double kLayerNormEps = 1e-5;

// Lower-triangular permits: position i attends j <= i.
AttnMask causal_mask(int64_t len);
// Causal over [prefix_rows + ids] with PAD token columns blocked for everyone;
// every row keeps itself so no row ends up without support.
AttnMask causal_pad_mask(int64_t prefix_rows, std::span<const int32_t> ids, int32_t pad_id);

// Scaled dot-product multi-head attention, scale 1/sqrt(d_k). d must divide by
// heads or a shape error names both.
Tensor mha_forward(const Tensor& x, const AttentionParams& p, const AttnMask& mask);

// Pre-norm residual layer: x + attn(ln1(x)), then + mlp(ln2(.)), GELU inside,
// hidden width 4d.
Tensor transformer_layer_forward(const Tensor& x, const TransformerLayer& layer, const AttnMask& mask);

TransformerLayer make_transformer_layer(int64_t d, int64_t heads, rng& r, double init_std);

// Enumerate a layer's tensors as "<prefix>.<name>" for checkpoints/optimizers.
using param_visitor = std::function<void(const std::string&, Tensor&)>;
void visit_layer_params(TransformerLayer& layer, const std::string& prefix, const param_visitor& fn);

}  // namespace tcv
