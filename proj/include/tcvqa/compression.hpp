#pragma once
// Token compression: a small trainable bank is concatenated ahead of the
// visual and text token rows, the joint sequence runs through a full-attention
// transformer stack, and only the first l_c output states continue downstream.
// Visual rows carry no positions, so compressed states are invariant to patch
// order; bank slots and text rows carry learned positions.

#include <vector>

#include "tcvqa/nn.hpp"
#include "tcvqa/tensor.hpp"

namespace tcv {

struct CompressionBank {
  Tensor hc;  // [l_c x d_h], trainable
};

CompressionBank make_bank(int64_t l_c, int64_t d_h, rng& r, double init_std);

struct CompressionStack {
  std::vector<TransformerLayer> layers;  // full attention, no causal mask
  Tensor slot_pos;  // [l_c x d_h] learned positions for the bank slots
  Tensor text_pos;  // [max_text x d_h] learned positions for text rows (via embed_text)
  int64_t heads = 1;
};

CompressionStack make_stack(int64_t n_layers, int64_t d_h, int64_t heads, int64_t l_c,
                            int64_t max_text, rng& r, double init_std);

// (bank + slot_pos + mean(H^v), H^v, H^t) -> stack -> first l_c rows. Every
// slot starts from the bank plus a mean-pooled visual residual, so compressed
// states depend on the slide before any attention is learned and the projector
// sees a gradient that does not pass through a softmax; the stack then sharpens
// rare-patch detail. H^v/H^t may be empty or undefined (degenerate text-only /
// vision-only cases).
Tensor compress(const CompressionBank& bank, const CompressionStack& stack, const Tensor& hv,
                const Tensor& ht);

// Value-copies the first n_layers decoder layers into the stack so fusion
// starts from text-reading weights instead of noise. Copies values only: the
// stack keeps training while the source stays frozen.
void init_from_decoder(CompressionStack& stack, const std::vector<TransformerLayer>& decoder_layers,
                       int64_t n_layers);

void visit_bank_params(CompressionBank& bank, const std::string& prefix, const param_visitor& fn);
void visit_stack_params(CompressionStack& stack, const std::string& prefix, const param_visitor& fn);

}  // namespace tcv
