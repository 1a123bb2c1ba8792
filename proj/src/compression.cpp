#include "tcvqa/compression.hpp"

namespace tcv {

CompressionBank make_bank(int64_t l_c, int64_t d_h, rng& r, double init_std) {
  if (l_c < 1 || d_h < 1) {
    throw config_error("make_bank: need l_c >= 1 and d_h >= 1, got " + std::to_string(l_c) + " and " +
                       std::to_string(d_h));
  }
  CompressionBank b;
  b.hc = Tensor::randn({l_c, d_h}, r, 0.0, init_std, true);
  return b;
}

CompressionStack make_stack(int64_t n_layers, int64_t d_h, int64_t heads, int64_t l_c,
                            int64_t max_text, rng& r, double init_std) {
  if (n_layers < 0) throw config_error("make_stack: negative layer count");
  CompressionStack s;
  s.heads = heads;
  for (int64_t i = 0; i < n_layers; ++i) {
    s.layers.push_back(make_transformer_layer(d_h, heads, r, init_std));
  }
  s.slot_pos = Tensor::randn({l_c, d_h}, r, 0.0, init_std, true);
  s.text_pos = Tensor::randn({max_text, d_h}, r, 0.0, init_std, true);
  return s;
}

Tensor compress(const CompressionBank& bank, const CompressionStack& stack, const Tensor& hv,
                const Tensor& ht) {
  const int64_t l_c = bank.hc.rows();
  const int64_t d = bank.hc.cols();
  if (stack.slot_pos.rows() != l_c || stack.slot_pos.cols() != d) {
    throw shape_error("compress: slot positions " + shape_str(stack.slot_pos.shape()) +
                      " do not match bank " + shape_str(bank.hc.shape()));
  }
  const bool has_v = hv.defined() && hv.numel() > 0;
  const bool has_t = ht.defined() && ht.numel() > 0;
  if (has_v && hv.cols() != d) {
    throw shape_error("compress: visual width " + std::to_string(hv.cols()) + " vs d_h " +
                      std::to_string(d));
  }
  if (has_t && ht.cols() != d) {
    throw shape_error("compress: text width " + std::to_string(ht.cols()) + " vs d_h " +
                      std::to_string(d));
  }

  Tensor slots = add(bank.hc, stack.slot_pos);
  if (has_v) {
    // Mean-pooled visual residual: slot states carry the slide from step 0,
    // which keeps per-sample gradients from cancelling while attention is
    // still uniform (without it stage-1 settles into ignoring the prefix).
    Tensor pool = Tensor::full({l_c, hv.rows()}, 1.0 / static_cast<double>(hv.rows()));
    slots = add(slots, matmul(pool, hv));
  }
  std::vector<Tensor> parts;
  parts.push_back(slots);
  if (has_v) parts.push_back(hv);
  if (has_t) parts.push_back(ht);
  Tensor seq = concat_rows(parts);
  const AttnMask mask = AttnMask::all(seq.rows(), seq.rows());
  for (const TransformerLayer& layer : stack.layers) {
    seq = transformer_layer_forward(seq, layer, mask);
  }
  return slice_rows(seq, 0, l_c);
}

void init_from_decoder(CompressionStack& stack, const std::vector<TransformerLayer>& decoder_layers,
                       int64_t n_layers) {
  if (n_layers < 0 || n_layers > static_cast<int64_t>(stack.layers.size()) ||
      n_layers > static_cast<int64_t>(decoder_layers.size())) {
    throw config_error("init_from_decoder: n_layers " + std::to_string(n_layers) + " exceeds stack (" +
                       std::to_string(stack.layers.size()) + ") or decoder (" +
                       std::to_string(decoder_layers.size()) + ")");
  }
  for (int64_t i = 0; i < n_layers; ++i) {
    TransformerLayer& dst = stack.layers[static_cast<size_t>(i)];
    const TransformerLayer& src = decoder_layers[static_cast<size_t>(i)];
    if (dst.attn.heads != src.attn.heads || dst.attn.wq.cols() != src.attn.wq.cols()) {
      throw config_error("init_from_decoder: layer " + std::to_string(i) + " geometry differs (" +
                         std::to_string(dst.attn.heads) + " heads/" + std::to_string(dst.attn.wq.cols()) +
                         " wide vs " + std::to_string(src.attn.heads) + "/" +
                         std::to_string(src.attn.wq.cols()) + ")");
    }
    dst.attn.wq.copy_values_from(src.attn.wq);
    dst.attn.wk.copy_values_from(src.attn.wk);
    dst.attn.wv.copy_values_from(src.attn.wv);
    dst.attn.wo.copy_values_from(src.attn.wo);
    dst.ln1.gain.copy_values_from(src.ln1.gain);
    dst.ln1.bias.copy_values_from(src.ln1.bias);
    dst.ln2.gain.copy_values_from(src.ln2.gain);
    dst.ln2.bias.copy_values_from(src.ln2.bias);
    dst.mlp.w1.copy_values_from(src.mlp.w1);
    dst.mlp.b1.copy_values_from(src.mlp.b1);
    dst.mlp.w2.copy_values_from(src.mlp.w2);
    dst.mlp.b2.copy_values_from(src.mlp.b2);
  }
}

void visit_bank_params(CompressionBank& bank, const std::string& prefix, const param_visitor& fn) {
  fn(prefix + ".hc", bank.hc);
}

void visit_stack_params(CompressionStack& stack, const std::string& prefix, const param_visitor& fn) {
  fn(prefix + ".slot_pos", stack.slot_pos);
  fn(prefix + ".text_pos", stack.text_pos);
  for (size_t i = 0; i < stack.layers.size(); ++i) {
    visit_layer_params(stack.layers[i], prefix + ".layer" + std::to_string(i), fn);
  }
}

}  // namespace tcv
