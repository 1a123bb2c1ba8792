#pragma once
// Runtime assembly: every parameter group of one run in a single struct, built
// deterministically from a RunConfig. Provides named parameter visiting, group
// hashing for freeze/determinism checks, checkpoint IO (one tensor file per
// parameter plus a text manifest), and the per-method decoder prefix.

#include <span>
#include <string>
#include <vector>

#include "tcvqa/baselines.hpp"
#include "tcvqa/compression.hpp"
#include "tcvqa/config.hpp"
#include "tcvqa/decoder.hpp"
#include "tcvqa/encoders.hpp"

namespace tcv {

struct ModelBundle {
  RunConfig cfg;
  FrozenVisualEncoder encoder;  // deterministic from cfg.seed, never trains
  Projector projector;
  CompressionBank bank;
  CompressionStack stack;
  MilPool mil;
  DecoderLM decoder;
};

// Seeded construction; vocab_size fixes the decoder's table height.
ModelBundle make_bundle(const RunConfig& cfg, int64_t vocab_size);

// Group names in canonical order: encoder, projector, bank, stack, mil, decoder.
const std::vector<std::string>& bundle_group_names();
std::string group_of(const std::string& param_name);  // prefix before the first '.'

// Visits every tensor as "group.rest", groups in canonical order.
void visit_bundle_params(ModelBundle& b, const param_visitor& fn);

// FNV-1a over the group's tensor values in visit order. Freeze checks compare
// these before/after training.
uint64_t group_hash(ModelBundle& b, const std::string& group);

// ===== checkpoints =====

struct CheckpointInfo {
  int32_t stage = 0;
  uint64_t seed = 0;
  std::string config_snapshot;  // render_config at save time
};

bool checkpoint_exists(const std::string& dir);
// Saves the groups the stage owns: encoder + decoder always, plus projector
// and the baseline's own groups for stage 1. One .tcpt file per tensor and a
// checkpoint.txt manifest with shapes, value hashes, and a config snapshot.
void save_checkpoint(const std::string& dir, ModelBundle& b, int32_t stage);
// Loads every manifest tensor into the bundle (shapes must match; groups not
// in the manifest keep their seeded init). The frozen encoder is verified
// bit-identical rather than overwritten. Missing directory or manifest is a
// config error naming the path.
CheckpointInfo load_checkpoint(const std::string& dir, ModelBundle& b);
// Order-stable hash over the manifest and every tensor file; determinism
// checks compare two runs' values.
uint64_t checkpoint_hash(const std::string& dir);

// ===== forward composition =====

// Decoder prefix for one sample's features [l_WSI x d_f] under the chosen
// visual path. tcp fuses bank/visual/text and keeps l_c states; full-forward
// projects everything; prune-k projects a farthest-point subset of min(l_c, n)
// rows; mil-pool projects then pools to one row.
Tensor visual_prefix(ModelBundle& b, BaselineKind kind, const Tensor& feats,
                     std::span<const int32_t> prompt_ids);

// forward_loss through the configured visual path.
Tensor sample_loss(ModelBundle& b, BaselineKind kind, const Tensor& feats,
                   std::span<const int32_t> prompt_ids, std::span<const int32_t> answer_ids);

}  // namespace tcv
