#pragma once
// Scoring and efficiency instrumentation: the rule-based choice parser,
// per-category accuracy reports, closed-form FLOP accounting, wall-clock
// throughput benchmarks, the l_c ablation harness, and token-state dumps.

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcvqa/trainer.hpp"

namespace tcv {

// ===== choice parsing =====

// First match of: a standalone letter A-D at string start, optionally
// followed by '.', ')' or whitespace. Case-insensitive; nullopt when absent.
// Total over arbitrary bytes, never throws.
std::optional<char> parse_choice(const std::string& text);

// ===== accuracy =====

struct CategoryScore {
  std::string name;
  int64_t correct = 0;
  int64_t total = 0;
  double accuracy() const { return total > 0 ? double(correct) / double(total) : 0.0; }
};

struct EvalReport {
  std::vector<CategoryScore> categories;  // sorted by name; only nonempty ones
  int64_t correct = 0;
  int64_t total = 0;
  int64_t parse_failures = 0;   // unparseable predictions, scored incorrect
  double average = 0.0;         // unweighted mean over category accuracies
  double overall() const { return total > 0 ? double(correct) / double(total) : 0.0; }
};

// Scores generated texts against gold letters, bucketed by marker category.
// Every sample needs a prediction keyed by rec_id; missing ids are an eval
// error listing them.
EvalReport score_predictions(const std::vector<TrainSample>& samples,
                             const std::map<std::string, std::string>& predictions);

// One category per line "name<TAB>correct<TAB>total<TAB>accuracy", then "AVG".
std::string render_report(const EvalReport& r);

// Greedy generation over a split (parallel across samples; the bundle is
// read-only), keyed by rec_id.
std::map<std::string, std::string> predict_split(ModelBundle& b, const Vocabulary& v,
                                                 const LoadedDataset& data,
                                                 const std::vector<TrainSample>& split);
EvalReport evaluate_split(ModelBundle& b, const Vocabulary& v, const LoadedDataset& data,
                          const std::vector<TrainSample>& split);

std::vector<TrainSample> filter_template(const std::vector<TrainSample>& samples,
                                         int32_t template_id);

// Loads vocab, dataset, and the stage-1 checkpoint for cfg.baseline, then
// scores the test split.
EvalReport run_baseline(const RunConfig& cfg);

// ===== analytic FLOPs =====

struct FlopLens {
  int64_t l_wsi = 256;  // visual tokens
  int64_t l_t = 32;     // prompt tokens
  int64_t l_c = 16;     // compression tokens (= k for prune-k)
  int64_t t_new = 8;    // generated tokens
  int64_t vocab = 0;    // 0 skips the logit matmul term
};

struct FlopCount {
  double encoder = 0.0;
  double projector = 0.0;
  double stack = 0.0;  // whatever reduces tokens: fusion stack, prune, or pool
  double decoder = 0.0;
  double total() const { return encoder + projector + stack + decoder; }
};

double matmul_flops(int64_t m, int64_t n, int64_t k);  // 2*m*n*k
// One transformer layer over `rows` tokens: 24*rows*d^2 projection/MLP cost
// plus 4*rows^2*d attention score/mix cost.
double layer_flops(int64_t rows, int64_t d);

// Forward cost of one sample as a single pass over the final sequence. The
// decoder sees l_c + l_t + t_new rows under tcp/prune-k, l_wsi + l_t + t_new
// under full-forward, and 1 + l_t + t_new under mil-pool.
FlopCount count_flops(const RunConfig& cfg, BaselineKind kind, const FlopLens& lens,
                      bool include_encoder = false);

// ===== throughput =====

enum class Phase { train, inference };

struct ThroughputReport {
  Phase phase = Phase::inference;
  int64_t warmup = 0;  // untimed leading samples
  int64_t timed = 0;
  double seconds = 0.0;
  double samples_per_sec = 0.0;
};

// Wall-clock samples/sec over a split (steady_clock). Inference runs prefix +
// greedy generation; train runs loss forward + backward. Timing is
// value-independent, so untrained weights bench identically to trained ones.
// Needs at least one sample beyond warmup, else an eval error.
ThroughputReport bench_throughput(ModelBundle& b, const LoadedDataset& data,
                                  const std::vector<TrainSample>& split, Phase phase,
                                  int64_t warmup = 5);

struct BenchPair {  // tcp vs full-forward on identical data
  ThroughputReport tcp_train, tcp_infer, ff_train, ff_infer;
  FlopCount tcp_flops, ff_flops;
};

BenchPair bench_pair(const RunConfig& cfg, const Vocabulary& v, const LoadedDataset& data,
                     int64_t warmup = 5);
// Header (config hash, warmup, timer source) + one metric line per phase.
std::string render_bench_report(const RunConfig& cfg, const BenchPair& p);

// ===== l_c ablation =====

struct AblationRow {
  int64_t l_c = 0;
  EvalReport report;
};

// For each l_c: fresh bundle, stage-0 decoder restored from base's checkpoint
// directory, stage-1 training, test-split scoring. Missing stage-0 checkpoint
// is a config error naming the path.
std::vector<AblationRow> ablate_lc(const RunConfig& base, const std::vector<int64_t>& lcs,
                                   std::ostream* log);
std::string render_ablation(const std::vector<AblationRow>& rows);

// ===== token-state dumps =====

struct TokenStates {
  Tensor hv;  // projected visual tokens [l_wsi x d_h]
  Tensor ht;  // embedded prompt tokens  [l_t x d_h]
  Tensor hc;  // compressed tokens       [l_c x d_h]
};

TokenStates token_states(ModelBundle& b, const Tensor& feats, std::span<const int32_t> prompt_ids);

// Writes <prefix>.hv.tcpf / .ht.tcpf / .hc.tcpf plus a <prefix>.labels.txt
// sidecar with one "file<TAB>label<TAB>rows" line per block.
void dump_token_states(ModelBundle& b, const Tensor& feats, std::span<const int32_t> prompt_ids,
                       const std::string& path_prefix);

// Mean Euclidean distance over all row pairs; needs >= 2 rows.
double mean_pairwise_distance(const Tensor& rows);

}  // namespace tcv
