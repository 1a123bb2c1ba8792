#pragma once
// Visual side: a frozen random orthonormal projection stands in for a
// pretrained patch encoder; a trainable affine projector lifts features into
// the decoder's hidden space. Text side: closed word-level vocabulary,
// tokenizer, prompt/answer rendering, and embedding with learned positions.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "tcvqa/data_synth.hpp"
#include "tcvqa/tensor.hpp"

namespace tcv {

// ===== visual =====

class FrozenVisualEncoder {
 public:
  // projection [patch_dim x d_f] with orthonormal columns, Gram-Schmidt over
  // seeded Gaussian draws. Never trains: requires_grad stays false.
  FrozenVisualEncoder(int64_t patch_dim, int64_t d_f, uint64_t seed);

  // Row i = projection^T . flatten(patch i). Pure, never on the tape.
  Tensor encode_patches(const std::vector<Patch>& patches) const;
  // Same map over pre-flattened rows [n x patch_dim].
  Tensor encode_rows(const Tensor& flat) const;

  const Tensor& projection() const { return projection_; }
  int64_t patch_dim() const { return projection_.rows(); }
  int64_t feature_dim() const { return projection_.cols(); }
  uint64_t seed() const { return seed_; }

 private:
  Tensor projection_;
  uint64_t seed_ = 0;
};

struct Projector {
  Tensor weight;  // [d_f x d_h]
  Tensor bias;    // [d_h]
};

Projector make_projector(int64_t d_f, int64_t d_h, rng& r, double init_std);
// H^v = features . weight + bias, on the tape via its trainable parameters.
Tensor project(const Projector& p, const Tensor& features);

// ===== text =====

class Vocabulary {
 public:
  static constexpr int32_t kPad = 0, kBos = 1, kEos = 2, kUnk = 3;
  static constexpr int32_t kReserved = 4;

  // Unique tokens of all texts, sorted, ids starting at kReserved.
  static Vocabulary build(const std::vector<std::string>& texts);
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int32_t id_of(const std::string& token) const;  // kUnk when absent
  const std::string& token_of(int32_t id) const;  // reserved ids give <pad> etc.
  int64_t size() const { return static_cast<int64_t>(tokens_.size()); }  // includes reserved

 private:
  void rebuild_index();
  std::vector<std::string> tokens_;  // index = id
  std::map<std::string, int32_t> index_;
};

// Lowercase; alnum runs are tokens; every other non-space character is its own token.
std::vector<std::string> split_tokens(const std::string& text);
// split_tokens joined by single spaces (the canonical surface form).
std::string normalize_text(const std::string& text);

std::vector<int32_t> tokenize(const Vocabulary& v, const std::string& text);
// Joins non-reserved tokens with spaces; PAD/BOS/EOS are dropped, UNK prints <unk>.
std::string detokenize(const Vocabulary& v, std::span<const int32_t> ids);

// The fixed question scaffold shown to the decoder.
std::string render_prompt(const VQARecord& rec);
// "B. glandular" for letter 'B' — what the decoder is trained to emit.
std::string render_answer(const VQARecord& rec, char letter);

// All surface forms a dataset can produce (prompts plus every choice answer),
// so UNK never appears on generator text.
Vocabulary build_vocabulary(const Manifest& m);

// embed_rows(token_table, ids) + position_table[0..n): learned positions.
Tensor embed_text(const Tensor& token_table, const Tensor& position_table,
                  std::span<const int32_t> ids);

}  // namespace tcv
