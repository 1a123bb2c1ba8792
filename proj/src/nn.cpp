#include "tcvqa/nn.hpp"

#include <cmath>
#include <cstring>

#include "tcvqa/kernels.hpp"

namespace tcv {

namespace {

bool live(const Tensor& t) { return t.requires_grad() || t.on_grad_path(); }

void check_square(const Tensor& w, int64_t d, const char* name) {
  if (w.shape().size() != 2 || w.rows() != d || w.cols() != d) {
    throw shape_error(std::string("mha: ") + name + " must be [" + std::to_string(d) + "x" +
                      std::to_string(d) + "], got " + shape_str(w.shape()));
  }
}

// Gather head h's column block of a [L x d] matrix into a contiguous L x dk buffer.
void gather_head(const double* src, double* dst, int64_t len, int64_t d, int64_t dk, int64_t h) {
  for (int64_t i = 0; i < len; ++i) {
    std::memcpy(dst + i * dk, src + i * d + h * dk, static_cast<size_t>(dk) * sizeof(double));
  }
}

}  // namespace

AttnMask causal_mask(int64_t len) {
  AttnMask m = AttnMask::blocked(len, len);
  for (int64_t i = 0; i < len; ++i) {
    for (int64_t j = 0; j <= i; ++j) m.permit[i * len + j] = 1;
  }
  return m;
}

AttnMask causal_pad_mask(int64_t prefix_rows, std::span<const int32_t> ids, int32_t pad_id) {
  if (prefix_rows < 0) throw shape_error("causal_pad_mask: negative prefix row count");
  const int64_t len = prefix_rows + static_cast<int64_t>(ids.size());
  AttnMask m = AttnMask::blocked(len, len);
  for (int64_t i = 0; i < len; ++i) {
    for (int64_t j = 0; j <= i; ++j) {
      const bool col_ok = j < prefix_rows || ids[static_cast<size_t>(j - prefix_rows)] != pad_id;
      if (col_ok || j == i) m.permit[i * len + j] = 1;
    }
  }
  return m;
}

Tensor mha_forward(const Tensor& x, const AttentionParams& p, const AttnMask& mask) {
  if (x.shape().size() != 2) throw shape_error("mha: input must be rank 2, got " + shape_str(x.shape()));
  const int64_t len = x.rows();
  const int64_t d = x.cols();
  check_square(p.wq, d, "wq");
  check_square(p.wk, d, "wk");
  check_square(p.wv, d, "wv");
  check_square(p.wo, d, "wo");
  if (p.heads < 1 || d % p.heads != 0) {
    throw shape_error("mha: heads must divide width, " + std::to_string(p.heads) + " heads vs width " +
                      std::to_string(d));
  }
  if (!mask.full && (mask.lq != len || mask.lk != len)) {
    throw shape_error("mha: mask is " + std::to_string(mask.lq) + "x" + std::to_string(mask.lk) +
                      " but sequence length is " + std::to_string(len));
  }
  const int64_t dk = d / p.heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dk));

  const bool want_grad = GradTape::active() != nullptr &&
                         (live(x) || live(p.wq) || live(p.wk) || live(p.wv) || live(p.wo));

  if (!want_grad) {
    // Streaming kernel path: never materializes the len x len score matrix, so
    // generation over very long token rolls stays in O(len * d) memory.
    Tensor q = matmul(x, p.wq);
    Tensor k = matmul(x, p.wk);
    Tensor v = matmul(x, p.wv);
    Tensor mixed = Tensor::zeros({len, d});
    std::vector<double> qh(static_cast<size_t>(len * dk));
    std::vector<double> kh(qh.size()), vh(qh.size()), oh(qh.size());
    const uint8_t* permit = mask.full ? nullptr : mask.permit.data();
    for (int64_t h = 0; h < p.heads; ++h) {
      gather_head(q.data().data(), qh.data(), len, d, dk, h);
      gather_head(k.data().data(), kh.data(), len, d, dk, h);
      gather_head(v.data().data(), vh.data(), len, d, dk, h);
      kern::attention_rows(qh.data(), kh.data(), vh.data(), permit, oh.data(), len, len, dk, att_scale);
      double* out = mixed.data().data();
      for (int64_t i = 0; i < len; ++i) {
        std::memcpy(out + i * d + h * dk, oh.data() + i * dk, static_cast<size_t>(dk) * sizeof(double));
      }
    }
    return matmul(mixed, p.wo);
  }

  Tensor q = matmul(x, p.wq);
  Tensor k = matmul(x, p.wk);
  Tensor v = matmul(x, p.wv);
  std::vector<Tensor> head_out;
  head_out.reserve(static_cast<size_t>(p.heads));
  for (int64_t h = 0; h < p.heads; ++h) {
    Tensor qh = slice_cols(q, h * dk, (h + 1) * dk);
    Tensor kh = slice_cols(k, h * dk, (h + 1) * dk);
    Tensor vh = slice_cols(v, h * dk, (h + 1) * dk);
    Tensor scores = scale(matmul_nt(qh, kh), att_scale);
    Tensor probs = masked_softmax(scores, mask);
    head_out.push_back(matmul(probs, vh));
  }
  return matmul(concat_cols(head_out), p.wo);
}

Tensor transformer_layer_forward(const Tensor& x, const TransformerLayer& layer, const AttnMask& mask) {
  Tensor a = layer_norm(x, layer.ln1.gain, layer.ln1.bias, kLayerNormEps);
  Tensor h = add(x, mha_forward(a, layer.attn, mask));
  Tensor b = layer_norm(h, layer.ln2.gain, layer.ln2.bias, kLayerNormEps);
  Tensor u = gelu(add_rowvec(matmul(b, layer.mlp.w1), layer.mlp.b1));
  return add(h, add_rowvec(matmul(u, layer.mlp.w2), layer.mlp.b2));
}

TransformerLayer make_transformer_layer(int64_t d, int64_t heads, rng& r, double init_std) {
  if (d < 1 || heads < 1 || d % heads != 0) {
    throw shape_error("make_transformer_layer: heads must divide width, " + std::to_string(heads) +
                      " heads vs width " + std::to_string(d));
  }
  TransformerLayer l;
  l.attn.heads = heads;
  l.attn.wq = Tensor::randn({d, d}, r, 0.0, init_std, true);
  l.attn.wk = Tensor::randn({d, d}, r, 0.0, init_std, true);
  l.attn.wv = Tensor::randn({d, d}, r, 0.0, init_std, true);
  l.attn.wo = Tensor::randn({d, d}, r, 0.0, init_std, true);
  l.ln1.gain = Tensor::full({d}, 1.0, true);
  l.ln1.bias = Tensor::zeros({d}, true);
  l.ln2.gain = Tensor::full({d}, 1.0, true);
  l.ln2.bias = Tensor::zeros({d}, true);
  l.mlp.w1 = Tensor::randn({d, 4 * d}, r, 0.0, init_std, true);
  l.mlp.b1 = Tensor::zeros({4 * d}, true);
  l.mlp.w2 = Tensor::randn({4 * d, d}, r, 0.0, init_std, true);
  l.mlp.b2 = Tensor::zeros({d}, true);
  return l;
}

void visit_layer_params(TransformerLayer& layer, const std::string& prefix, const param_visitor& fn) {
  fn(prefix + ".attn.wq", layer.attn.wq);
  fn(prefix + ".attn.wk", layer.attn.wk);
  fn(prefix + ".attn.wv", layer.attn.wv);
  fn(prefix + ".attn.wo", layer.attn.wo);
  fn(prefix + ".ln1.gain", layer.ln1.gain);
  fn(prefix + ".ln1.bias", layer.ln1.bias);
  fn(prefix + ".mlp.w1", layer.mlp.w1);
  fn(prefix + ".mlp.b1", layer.mlp.b1);
  fn(prefix + ".mlp.w2", layer.mlp.w2);
  fn(prefix + ".mlp.b2", layer.mlp.b2);
  fn(prefix + ".ln2.gain", layer.ln2.gain);
  fn(prefix + ".ln2.bias", layer.ln2.bias);
}

}  // namespace tcv
