#include "tcvqa/decoder.hpp"

#include <algorithm>

namespace tcv {

namespace {

// Position index = count of preceding non-PAD ids, so inserted padding leaves
// every real token's position (and thus the loss) bit-identical.
std::vector<int32_t> rank_positions(std::span<const int32_t> ids) {
  std::vector<int32_t> ranks(ids.size());
  int32_t rank = 0;
  for (size_t i = 0; i < ids.size(); ++i) {
    ranks[i] = rank;
    if (ids[i] != Vocabulary::kPad) ++rank;
  }
  return ranks;
}

void check_token_budget(const DecoderLM& dec, int64_t prefix_rows, int64_t n_text) {
  if (prefix_rows + n_text > dec.context) {
    throw shape_error("decoder: input length " + std::to_string(prefix_rows + n_text) + " (" +
                      std::to_string(prefix_rows) + " prefix + " + std::to_string(n_text) +
                      " text) exceeds context " + std::to_string(dec.context));
  }
}

int32_t argmax_row(std::span<const double> logits) {
  int32_t best = 0;
  for (size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[static_cast<size_t>(best)]) best = static_cast<int32_t>(i);
  }
  return best;
}

}  // namespace

DecoderLM make_decoder(int64_t vocab, int64_t d_h, int64_t heads, int64_t n_layers, int64_t context,
                       rng& r, double init_std) {
  if (vocab < Vocabulary::kReserved || context < 2) {
    throw config_error("make_decoder: need vocab >= " + std::to_string(Vocabulary::kReserved) +
                       " and context >= 2, got " + std::to_string(vocab) + " and " +
                       std::to_string(context));
  }
  DecoderLM d;
  d.heads = heads;
  d.context = context;
  d.tok_table = Tensor::randn({vocab, d_h}, r, 0.0, init_std, true);
  d.pos_table = Tensor::randn({context, d_h}, r, 0.0, init_std, true);
  for (int64_t i = 0; i < n_layers; ++i) {
    d.layers.push_back(make_transformer_layer(d_h, heads, r, init_std));
  }
  d.final_ln.gain = Tensor::full({d_h}, 1.0, true);
  d.final_ln.bias = Tensor::zeros({d_h}, true);
  return d;
}

void visit_decoder_params(DecoderLM& dec, const std::string& prefix, const param_visitor& fn) {
  fn(prefix + ".tok_table", dec.tok_table);
  fn(prefix + ".pos_table", dec.pos_table);
  for (size_t i = 0; i < dec.layers.size(); ++i) {
    visit_layer_params(dec.layers[i], prefix + ".layer" + std::to_string(i), fn);
  }
  fn(prefix + ".final_ln.gain", dec.final_ln.gain);
  fn(prefix + ".final_ln.bias", dec.final_ln.bias);
}

Tensor decoder_hidden(const DecoderLM& dec, const Tensor& prefix, std::span<const int32_t> ids) {
  const bool has_prefix = prefix.defined() && prefix.numel() > 0;
  const int64_t p_rows = has_prefix ? prefix.rows() : 0;
  const int64_t n = static_cast<int64_t>(ids.size());
  if (n < 1) throw shape_error("decoder: empty token sequence");
  if (has_prefix && prefix.cols() != dec.tok_table.cols()) {
    throw shape_error("decoder: prefix width " + std::to_string(prefix.cols()) + " vs hidden width " +
                      std::to_string(dec.tok_table.cols()));
  }
  check_token_budget(dec, p_rows, n);

  const std::vector<int32_t> ranks = rank_positions(ids);
  Tensor x = add(embed_rows(dec.tok_table, ids), embed_rows(dec.pos_table, ranks));
  Tensor seq = has_prefix ? concat_rows({prefix, x}) : x;
  const AttnMask mask = causal_pad_mask(p_rows, ids, Vocabulary::kPad);
  for (const TransformerLayer& layer : dec.layers) {
    seq = transformer_layer_forward(seq, layer, mask);
  }
  return layer_norm(seq, dec.final_ln.gain, dec.final_ln.bias, kLayerNormEps);
}

Tensor forward_loss(const DecoderLM& dec, const Tensor& prefix, std::span<const int32_t> prompt_ids,
                    std::span<const int32_t> answer_ids) {
  const int64_t lp = static_cast<int64_t>(prompt_ids.size());
  const int64_t t = static_cast<int64_t>(answer_ids.size());
  if (lp < 1) throw contract_error("forward_loss: empty prompt");
  if (t < 1 || answer_ids[static_cast<size_t>(t - 1)] != Vocabulary::kEos) {
    throw contract_error("forward_loss: answer must be non-empty and end with EOS");
  }
  for (int32_t id : answer_ids.first(static_cast<size_t>(t - 1))) {
    if (id == Vocabulary::kEos || id == Vocabulary::kPad) {
      throw contract_error("forward_loss: answer contains PAD or interior EOS");
    }
  }

  // input = prompt ++ answer shifted right (all answer tokens except the last)
  std::vector<int32_t> input(prompt_ids.begin(), prompt_ids.end());
  input.insert(input.end(), answer_ids.begin(), answer_ids.end() - 1);
  const int64_t p_rows = prefix.defined() && prefix.numel() > 0 ? prefix.rows() : 0;

  Tensor h = decoder_hidden(dec, prefix, input);
  // rows P+lp-1 .. P+lp+T-2 predict answer tokens 1..T
  Tensor answer_rows = slice_rows(h, p_rows + lp - 1, p_rows + lp + t - 1);
  Tensor logits = matmul_nt(answer_rows, dec.tok_table);
  return cross_entropy_logits(logits, answer_ids);
}

std::vector<int32_t> generate(const DecoderLM& dec, const Tensor& prefix,
                              std::span<const int32_t> prompt_ids, const GenerationSettings& settings) {
  if (settings.max_new_tokens < 1) {
    throw config_error("generate: max_new_tokens must be >= 1, got " +
                       std::to_string(settings.max_new_tokens));
  }
  if (prompt_ids.empty()) throw contract_error("generate: empty prompt");

  std::vector<int32_t> ids(prompt_ids.begin(), prompt_ids.end());
  std::vector<int32_t> out;
  for (int64_t step = 0; step < settings.max_new_tokens; ++step) {
    Tensor h = decoder_hidden(dec, prefix, ids);
    Tensor last = slice_rows(h, h.rows() - 1, h.rows());
    Tensor logits = matmul_nt(last, dec.tok_table);
    const int32_t next = argmax_row(logits.data());
    out.push_back(next);
    if (next == Vocabulary::kEos) break;
    ids.push_back(next);
  }
  return out;
}

Tensor pretrain_loss(const DecoderLM& dec, std::span<const int32_t> ids) {
  const int64_t n = static_cast<int64_t>(ids.size());
  if (n < 2) throw contract_error("pretrain_loss: need at least 2 tokens");
  for (int32_t id : ids) {
    if (id == Vocabulary::kPad) throw contract_error("pretrain_loss: PAD in training line");
  }
  Tensor h = decoder_hidden(dec, Tensor(), ids.first(static_cast<size_t>(n - 1)));
  Tensor logits = matmul_nt(h, dec.tok_table);
  return cross_entropy_logits(logits, ids.subspan(1));
}

std::vector<int32_t> prompt_token_ids(const Vocabulary& v, const VQARecord& rec) {
  std::vector<int32_t> ids = {Vocabulary::kBos};
  for (int32_t id : tokenize(v, render_prompt(rec))) ids.push_back(id);
  return ids;
}

std::vector<int32_t> answer_token_ids(const Vocabulary& v, const VQARecord& rec, char letter) {
  std::vector<int32_t> ids = tokenize(v, render_answer(rec, letter));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

}  // namespace tcv
