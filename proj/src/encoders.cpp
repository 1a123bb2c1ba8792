#include "tcvqa/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "tcvqa/serialize.hpp"

namespace tcv {

// ===== visual =====

FrozenVisualEncoder::FrozenVisualEncoder(int64_t patch_dim, int64_t d_f, uint64_t seed) : seed_(seed) {
  if (patch_dim < d_f || d_f < 1) {
    throw config_error("visual encoder: need patch_dim >= d_f >= 1, got " + std::to_string(patch_dim) +
                       " and " + std::to_string(d_f));
  }
  rng r(seed);
  projection_ = Tensor::randn({patch_dim, d_f}, r, 0.0, 1.0);
  // Modified Gram-Schmidt, two orthogonalization passes per column.
  auto p = projection_.data();
  for (int64_t j = 0; j < d_f; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int64_t i = 0; i < j; ++i) {
        double dot = 0.0;
        for (int64_t k = 0; k < patch_dim; ++k) dot += p[k * d_f + i] * p[k * d_f + j];
        for (int64_t k = 0; k < patch_dim; ++k) p[k * d_f + j] -= dot * p[k * d_f + i];
      }
    }
    double norm = 0.0;
    for (int64_t k = 0; k < patch_dim; ++k) norm += p[k * d_f + j] * p[k * d_f + j];
    norm = std::sqrt(norm);
    if (norm < 1e-8) {
      throw contract_error("visual encoder: degenerate column during orthonormalization");
    }
    for (int64_t k = 0; k < patch_dim; ++k) p[k * d_f + j] /= norm;
  }
}

Tensor FrozenVisualEncoder::encode_patches(const std::vector<Patch>& patches) const {
  const int64_t n = static_cast<int64_t>(patches.size());
  const int64_t dim = patch_dim();
  Tensor flat = Tensor::zeros({std::max<int64_t>(n, 0), dim});
  auto out = flat.data();
  for (int64_t i = 0; i < n; ++i) {
    const Patch& patch = patches[static_cast<size_t>(i)];
    if (static_cast<int64_t>(patch.pixels.size()) != dim) {
      throw shape_error("encode_patches: patch " + std::to_string(i) + " has " +
                        std::to_string(patch.pixels.size()) + " values, encoder expects " +
                        std::to_string(dim));
    }
    std::copy(patch.pixels.begin(), patch.pixels.end(), out.begin() + i * dim);
  }
  return encode_rows(flat);
}

Tensor FrozenVisualEncoder::encode_rows(const Tensor& flat) const {
  if (flat.shape().size() != 2 || flat.cols() != patch_dim()) {
    throw shape_error("encode_rows: expected [n x " + std::to_string(patch_dim()) + "], got " +
                      shape_str(flat.shape()));
  }
  return matmul(flat, projection_);
}

Projector make_projector(int64_t d_f, int64_t d_h, rng& r, double init_std) {
  Projector p;
  p.weight = Tensor::randn({d_f, d_h}, r, 0.0, init_std, true);
  p.bias = Tensor::zeros({d_h}, true);
  return p;
}

Tensor project(const Projector& p, const Tensor& features) {
  return add_rowvec(matmul(features, p.weight), p.bias);
}

// ===== text =====

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char raw : text) {
    const unsigned char u = static_cast<unsigned char>(raw);
    const char c = static_cast<char>(std::tolower(u));
    if (std::isspace(u)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else if (std::isalnum(u)) {
      cur.push_back(c);
    } else {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
      out.emplace_back(1, c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string normalize_text(const std::string& text) {
  std::string out;
  for (const std::string& tok : split_tokens(text)) {
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

namespace {
const std::string kReservedNames[Vocabulary::kReserved] = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

void Vocabulary::rebuild_index() {
  index_.clear();
  for (size_t i = kReserved; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int32_t>(i)).second) {
      throw format_error("vocabulary: duplicate token \"" + tokens_[i] + "\"");
    }
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  std::set<std::string> uniq;
  for (const std::string& t : texts) {
    for (std::string& tok : split_tokens(t)) uniq.insert(std::move(tok));
  }
  Vocabulary v;
  v.tokens_.assign(kReservedNames, kReservedNames + kReserved);
  v.tokens_.insert(v.tokens_.end(), uniq.begin(), uniq.end());
  v.rebuild_index();
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::string text;
  for (size_t i = kReserved; i < tokens_.size(); ++i) text += tokens_[i] + "\n";
  write_text_file(path, text);
}

Vocabulary Vocabulary::load(const std::string& path) {
  const std::string text = read_text_file(path);
  Vocabulary v;
  v.tokens_.assign(kReservedNames, kReservedNames + kReserved);
  size_t start = 0, lineno = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string tok = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (tok.empty()) continue;
    if (tok.find_first_of(" \t") != std::string::npos) {
      throw format_error(path + " line " + std::to_string(lineno) + ": token contains whitespace");
    }
    v.tokens_.push_back(tok);
  }
  v.rebuild_index();
  return v;
}

int32_t Vocabulary::id_of(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int32_t id) const {
  if (id < 0 || id >= size()) {
    throw index_error("vocabulary: id " + std::to_string(id) + " outside [0, " +
                      std::to_string(size()) + ")");
  }
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int32_t> tokenize(const Vocabulary& v, const std::string& text) {
  std::vector<int32_t> ids;
  for (const std::string& tok : split_tokens(text)) ids.push_back(v.id_of(tok));
  return ids;
}

std::string detokenize(const Vocabulary& v, std::span<const int32_t> ids) {
  std::string out;
  for (int32_t id : ids) {
    if (id == Vocabulary::kPad || id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
    if (!out.empty()) out += ' ';
    out += v.token_of(id);
  }
  return out;
}

std::string render_prompt(const VQARecord& rec) {
  return "Q: " + rec.question + "\nA. " + rec.choices[0] + " B. " + rec.choices[1] + " C. " +
         rec.choices[2] + " D. " + rec.choices[3] + "\nAnswer:";
}

std::string render_answer(const VQARecord& rec, char letter) {
  if (letter < 'A' || letter > 'D') {
    throw config_error(std::string("render_answer: letter '") + letter + "' outside A-D");
  }
  return std::string(1, letter) + ". " + rec.choices[static_cast<size_t>(letter - 'A')];
}

Vocabulary build_vocabulary(const Manifest& m) {
  std::vector<std::string> texts;
  texts.reserve(m.records.size() * 5);
  for (const VQARecord& rec : m.records) {
    texts.push_back(render_prompt(rec));
    for (char letter : {'A', 'B', 'C', 'D'}) texts.push_back(render_answer(rec, letter));
  }
  return Vocabulary::build(texts);
}

Tensor embed_text(const Tensor& token_table, const Tensor& position_table,
                  std::span<const int32_t> ids) {
  const int64_t n = static_cast<int64_t>(ids.size());
  if (n > position_table.rows()) {
    throw index_error("embed_text: " + std::to_string(n) + " tokens exceed the " +
                      std::to_string(position_table.rows()) + " learned positions");
  }
  if (token_table.cols() != position_table.cols()) {
    throw shape_error("embed_text: token width " + std::to_string(token_table.cols()) +
                      " vs position width " + std::to_string(position_table.cols()));
  }
  return add(embed_rows(token_table, ids), slice_rows(position_table, 0, n));
}

}  // namespace tcv
