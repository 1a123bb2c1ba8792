#pragma once
// Tiny causal decoder. Compressed states enter as a soft prefix (pre-embedded
// rows, no vocabulary ids); text rows add learned positions indexed by their
// non-PAD rank so padding shifts nothing. The output projection is weight-tied
// to the token table. Stage-0 trains it on text alone; stage-1 freezes it.

#include <span>
#include <vector>

#include "tcvqa/encoders.hpp"
#include "tcvqa/nn.hpp"
#include "tcvqa/tensor.hpp"

namespace tcv {

struct DecoderLM {
  Tensor tok_table;  // [V x d_h], also the output projection (tied)
  Tensor pos_table;  // [context x d_h], text rows only — the soft prefix gets none
  std::vector<TransformerLayer> layers;
  LayerNormParams final_ln;
  int64_t heads = 1;
  int64_t context = 512;  // cap on prefix rows + text rows
};

struct GenerationSettings {
  int64_t max_new_tokens = 16;  // greedy, stops at EOS
};

DecoderLM make_decoder(int64_t vocab, int64_t d_h, int64_t heads, int64_t n_layers, int64_t context,
                       rng& r, double init_std);
void visit_decoder_params(DecoderLM& dec, const std::string& prefix, const param_visitor& fn);

// Final hidden states for [prefix rows ++ embedded ids]: causal attention with
// PAD key columns blocked, final layer norm applied. prefix may be undefined.
Tensor decoder_hidden(const DecoderLM& dec, const Tensor& prefix, std::span<const int32_t> ids);

// Mean cross-entropy of answer_ids under teacher forcing, averaged over answer
// positions only. answer_ids must end with EOS; prompt_ids must be non-empty.
Tensor forward_loss(const DecoderLM& dec, const Tensor& prefix, std::span<const int32_t> prompt_ids,
                    std::span<const int32_t> answer_ids);

// Greedy continuation after the prompt; returns generated ids including the
// terminating EOS when one is produced. Deterministic; ties pick the lowest id.
std::vector<int32_t> generate(const DecoderLM& dec, const Tensor& prefix,
                              std::span<const int32_t> prompt_ids, const GenerationSettings& settings);

// Next-token loss over a full text line (no prefix, no masking): stage-0 diet.
Tensor pretrain_loss(const DecoderLM& dec, std::span<const int32_t> ids);

// BOS-led prompt ids / EOS-terminated answer ids for one record.
std::vector<int32_t> prompt_token_ids(const Vocabulary& v, const VQARecord& rec);
std::vector<int32_t> answer_token_ids(const Vocabulary& v, const VQARecord& rec, char letter);

}  // namespace tcv
