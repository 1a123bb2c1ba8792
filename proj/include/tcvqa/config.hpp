#pragma once
// Flat key=value run configuration. One struct carries every tunable; parsing
// is line-oriented with '#' comments, later keys override earlier ones, and
// unknown keys are rejected with a line number. render() emits a canonical
// form that parses back to the same config (shortest round-trip numerals).

#include <cstdint>
#include <string>
#include <vector>

namespace tcv {

enum class BaselineKind : int32_t {
  tcp = 0,       // compression bank + fusion stack, first l_c states forwarded
  full_forward,  // every visual token goes straight to the decoder
  prune_k,       // farthest-point subset of l_c visual tokens, no fusion
  mil_pool,      // gated attention pooling to a single token
};

BaselineKind parse_baseline(const std::string& name);  // config error on unknown
const std::string& baseline_name(BaselineKind kind);

struct RunConfig {
  // model widths
  int64_t d_h = 64;   // decoder / fusion hidden width
  int64_t d_f = 32;   // frozen patch-feature width
  int64_t heads = 4;
  int64_t n_cmp = 2;  // fusion stack depth
  int64_t n_dec = 4;  // decoder depth
  int64_t l_c = 16;   // compression token count
  int64_t context = 512;
  int64_t max_new_tokens = 8;
  int64_t init_layers = -1;  // fusion layers seeded from decoder layers; -1 = all n_cmp

  // dataset
  int64_t grid = 16;  // slide is grid x grid patches
  int64_t patch_px = 16;
  int64_t n_slides = 800;
  double marker_rarity = 0.02;

  // optimization
  double peak_lr = 3e-4;
  double min_lr = 3e-5;
  double weight_decay = 0.01;
  int64_t warmup_steps = 50;
  int64_t total_steps = 0;  // 0 = epochs * ceil(samples / accum_steps)
  int64_t accum_steps = 8;
  int64_t epochs = 2;           // stage-1 passes over the train split
  int64_t pretrain_epochs = 3;  // stage-0 passes
  uint64_t seed = 42;

  // plumbing
  std::string baseline = "tcp";
  std::string data_dir = "data";
  std::string ckpt_dir = "ckpt";
  std::string vocab;  // empty = data_dir/vocab.txt
};

// Parse config text. Errors name the offending line and key.
RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Canonical text: every key once, declaration order, "key = value" lines.
std::string render_config(const RunConfig& cfg);

// Apply one "key=value" override (CLI flags reuse the file grammar).
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Every known key, declaration order (drives CLI flag validation and help).
const std::vector<std::string>& config_keys();

// Cross-field checks (divisibility, ranges, known baseline). Throws config errors.
void validate_config(const RunConfig& cfg);

// Resolved vocabulary path for this run.
std::string vocab_path(const RunConfig& cfg);

}  // namespace tcv
