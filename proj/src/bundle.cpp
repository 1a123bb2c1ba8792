#include "tcvqa/bundle.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "tcvqa/common.hpp"
#include "tcvqa/serialize.hpp"

namespace tcv {

namespace {

constexpr double kInitStd = 0.02;

std::string shape_tag(const Tensor& t) {
  std::string s;
  for (size_t i = 0; i < t.shape().size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape()[i]);
  }
  return s;
}

std::vector<std::pair<std::string, Tensor>> named_params(ModelBundle& b) {
  std::vector<std::pair<std::string, Tensor>> out;
  visit_bundle_params(b, [&](const std::string& n, Tensor& t) { out.emplace_back(n, t); });
  return out;
}

}  // namespace

ModelBundle make_bundle(const RunConfig& cfg, int64_t vocab_size) {
  validate_config(cfg);
  const int64_t patch_dim = 3 * cfg.patch_px * cfg.patch_px;
  rng r_proj(derive_seed(cfg.seed, 0x9201));
  rng r_bank(derive_seed(cfg.seed, 0x9202));
  rng r_stack(derive_seed(cfg.seed, 0x9203));
  rng r_mil(derive_seed(cfg.seed, 0x9204));
  rng r_dec(derive_seed(cfg.seed, 0x9205));
  ModelBundle b{
      cfg,
      FrozenVisualEncoder(patch_dim, cfg.d_f, derive_seed(cfg.seed, 0xe0c0de)),
      make_projector(cfg.d_f, cfg.d_h, r_proj, kInitStd),
      make_bank(cfg.l_c, cfg.d_h, r_bank, kInitStd),
      make_stack(cfg.n_cmp, cfg.d_h, cfg.heads, cfg.l_c, cfg.context, r_stack, kInitStd),
      make_mil_pool(cfg.d_h, cfg.d_h, r_mil, kInitStd),
      make_decoder(vocab_size, cfg.d_h, cfg.heads, cfg.n_dec, cfg.context, r_dec, kInitStd),
  };
  return b;
}

const std::vector<std::string>& bundle_group_names() {
  static const std::vector<std::string> names = {"encoder", "projector", "bank",
                                                 "stack",   "mil",       "decoder"};
  return names;
}

std::string group_of(const std::string& param_name) {
  const size_t dot = param_name.find('.');
  return dot == std::string::npos ? param_name : param_name.substr(0, dot);
}

void visit_bundle_params(ModelBundle& b, const param_visitor& fn) {
  Tensor enc = b.encoder.projection();  // shared handle; stays frozen
  fn("encoder.projection", enc);
  fn("projector.weight", b.projector.weight);
  fn("projector.bias", b.projector.bias);
  visit_bank_params(b.bank, "bank", fn);
  visit_stack_params(b.stack, "stack", fn);
  visit_mil_params(b.mil, "mil", fn);
  visit_decoder_params(b.decoder, "decoder", fn);
}

uint64_t group_hash(ModelBundle& b, const std::string& group) {
  uint64_t h = 0xcbf29ce484222325ull;
  bool seen = false;
  visit_bundle_params(b, [&](const std::string& n, Tensor& t) {
    if (group_of(n) != group) return;
    seen = true;
    auto vals = t.data();
    h = fnv1a64_bytes(vals.data(), vals.size() * sizeof(double), h);
  });
  if (!seen) throw contract_error("group_hash: no parameter group named \"" + group + "\"");
  return h;
}

// ===== checkpoints =====

bool checkpoint_exists(const std::string& dir) {
  return std::filesystem::exists(std::filesystem::path(dir) / "checkpoint.txt");
}

namespace {

// A checkpoint carries the groups its stage owns: the frozen pair that must
// verify on load, plus whatever the stage trains. Groups a run never touched
// stay restorable from (config, seed) alone.
std::set<std::string> groups_for_stage(const RunConfig& cfg, int32_t stage) {
  std::set<std::string> g = {"encoder", "decoder"};
  if (stage >= 1) {
    g.insert("projector");
    switch (parse_baseline(cfg.baseline)) {
      case BaselineKind::tcp:
        g.insert("bank");
        g.insert("stack");
        break;
      case BaselineKind::mil_pool:
        g.insert("mil");
        break;
      default:
        break;
    }
  }
  return g;
}

}  // namespace

void save_checkpoint(const std::string& dir, ModelBundle& b, int32_t stage) {
  std::filesystem::create_directories(dir);
  const std::set<std::string> groups = groups_for_stage(b.cfg, stage);
  std::vector<std::pair<std::string, Tensor>> params;
  for (auto& [name, t] : named_params(b))
    if (groups.count(group_of(name))) params.emplace_back(name, t);
  std::string manifest = "tcvqa-checkpoint v1\n";
  manifest += "stage " + std::to_string(stage) + "\n";
  manifest += "seed " + std::to_string(b.cfg.seed) + "\n";
  manifest += "tensors " + std::to_string(params.size()) + "\n";
  for (auto& [name, t] : params) {
    const std::string file = name + ".tcpt";
    save_tensor(dir + "/" + file, t);
    manifest += "tensor " + name + " " + shape_tag(t) + " " + to_hex(hash_tensor_values(t)) + " " +
                file + "\n";
  }
  manifest += "config-begin\n" + render_config(b.cfg) + "config-end\n";
  write_text_file(dir + "/checkpoint.txt", manifest);
}

namespace {

struct ManifestEntry {
  std::string name;
  std::vector<int64_t> shape;
  uint64_t hash = 0;
  std::string file;
};

struct ParsedManifest {
  int32_t stage = 0;
  uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
  std::string config_snapshot;
};

ParsedManifest parse_manifest(const std::string& dir) {
  const std::string path = dir + "/checkpoint.txt";
  if (!std::filesystem::exists(path))
    throw config_error("checkpoint not found: " + path);
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "tcvqa-checkpoint v1")
    throw format_error(path + ": bad header \"" + line + "\"");
  ParsedManifest m;
  size_t declared = 0;
  bool in_config = false;
  while (std::getline(in, line)) {
    if (in_config) {
      if (line == "config-end") {
        in_config = false;
        continue;
      }
      m.config_snapshot += line + "\n";
      continue;
    }
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "stage") {
      ls >> m.stage;
    } else if (tag == "seed") {
      ls >> m.seed;
    } else if (tag == "tensors") {
      ls >> declared;
    } else if (tag == "tensor") {
      ManifestEntry e;
      std::string shape, hash;
      ls >> e.name >> shape >> hash >> e.file;
      if (ls.fail()) throw format_error(path + ": bad tensor line \"" + line + "\"");
      size_t pos = 0;
      while (pos < shape.size()) {
        const size_t x = shape.find('x', pos);
        const std::string part = shape.substr(pos, x == std::string::npos ? shape.size() - pos : x - pos);
        e.shape.push_back(std::stoll(part));
        pos = x == std::string::npos ? shape.size() : x + 1;
      }
      e.hash = std::stoull(hash, nullptr, 16);
      m.entries.push_back(std::move(e));
    } else if (tag == "config-begin") {
      in_config = true;
    } else if (!tag.empty()) {
      throw format_error(path + ": unknown manifest tag \"" + tag + "\"");
    }
  }
  if (m.entries.size() != declared)
    throw format_error(path + ": declares " + std::to_string(declared) + " tensors, lists " +
                       std::to_string(m.entries.size()));
  return m;
}

}  // namespace

CheckpointInfo load_checkpoint(const std::string& dir, ModelBundle& b) {
  ParsedManifest m = parse_manifest(dir);
  std::map<std::string, Tensor> live;
  for (auto& [name, t] : named_params(b)) live.emplace(name, t);
  for (const ManifestEntry& e : m.entries) {
    auto it = live.find(e.name);
    if (it == live.end())
      throw format_error(dir + ": checkpoint tensor \"" + e.name + "\" not in this bundle");
    Tensor loaded = load_tensor(dir + "/" + e.file);
    if (loaded.shape() != e.shape || loaded.shape() != it->second.shape())
      throw shape_error(dir + ": tensor \"" + e.name + "\" shape mismatch (file " +
                        shape_tag(loaded) + ", bundle " + shape_tag(it->second) + ")");
    if (hash_tensor_values(loaded) != e.hash)
      throw format_error(dir + ": tensor \"" + e.name + "\" bytes do not match its manifest hash");
    if (e.name == "encoder.projection") {
      // the frozen encoder is regenerated from the seed, never overwritten
      if (hash_tensor_values(loaded) != hash_tensor_values(it->second))
        throw format_error(dir + ": frozen encoder in checkpoint differs from this config's encoder");
    } else {
      it->second.copy_values_from(loaded);
    }
  }
  return {m.stage, m.seed, m.config_snapshot};
}

uint64_t checkpoint_hash(const std::string& dir) {
  ParsedManifest m = parse_manifest(dir);
  const std::string manifest_text = read_text_file(dir + "/checkpoint.txt");
  uint64_t h = fnv1a64_bytes(manifest_text.data(), manifest_text.size());
  for (const ManifestEntry& e : m.entries) {
    const uint64_t fh = hash_file(dir + "/" + e.file);
    h = fnv1a64_bytes(&fh, sizeof(fh), h);
  }
  return h;
}

// ===== forward composition =====

Tensor visual_prefix(ModelBundle& b, BaselineKind kind, const Tensor& feats,
                     std::span<const int32_t> prompt_ids) {
  switch (kind) {
    case BaselineKind::tcp: {
      Tensor hv = project(b.projector, feats);
      Tensor ht = embed_text(b.decoder.tok_table, b.stack.text_pos, prompt_ids);
      return compress(b.bank, b.stack, hv, ht);
    }
    case BaselineKind::full_forward:
      return project(b.projector, feats);
    case BaselineKind::prune_k: {
      const int64_t k = std::min<int64_t>(b.cfg.l_c, feats.rows());
      std::vector<int64_t> picked = farthest_point_prune(feats, k);
      std::vector<int32_t> rows(picked.begin(), picked.end());
      return project(b.projector, embed_rows(feats, rows));
    }
    case BaselineKind::mil_pool:
      return mil_pool_forward(b.mil, project(b.projector, feats));
  }
  throw config_error("visual_prefix: unknown baseline kind");
}

Tensor sample_loss(ModelBundle& b, BaselineKind kind, const Tensor& feats,
                   std::span<const int32_t> prompt_ids, std::span<const int32_t> answer_ids) {
  return forward_loss(b.decoder, visual_prefix(b, kind, feats, prompt_ids), prompt_ids, answer_ids);
}

}  // namespace tcv
