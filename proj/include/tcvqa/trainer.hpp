#pragma once
// Optimization: AdamW with decoupled weight decay, linear-warmup + cosine-decay
// schedule, gradient accumulation at batch size 1, freeze masks over parameter
// groups, periodic checkpoints, and the stage-0 (text-only) / stage-1 (visual)
// training loops. Fully reproducible from (config, seed).

#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tcvqa/bundle.hpp"

namespace tcv {

// ===== freeze masks =====

struct FreezeMask {
  std::set<std::string> trainable;  // group names; everything else stays frozen
  bool is_trainable(const std::string& group) const { return trainable.count(group) != 0; }
};

FreezeMask stage0_mask();                   // {decoder}
FreezeMask stage1_mask(BaselineKind kind);  // tcp: {projector, bank, stack}

// Tensors of the trainable groups, in canonical visit order.
std::vector<std::pair<std::string, Tensor>> trainable_params(ModelBundle& b, const FreezeMask& m);

// ===== optimizer =====

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {});

  void add_param(const std::string& name, const Tensor& t);  // must require grad
  // Bias-corrected moment update, decoupled decay:
  //   p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
  // Missing gradient on any slot is a contract error.
  void step(double lr);
  void zero_grad();

  int64_t step_count() const { return t_; }
  int64_t n_slots() const { return static_cast<int64_t>(slots_.size()); }
  int64_t n_scalars() const;  // total moment-buffer scalars (m plus v)

  struct Slot {
    std::string name;
    Tensor param;
    std::vector<double> m, v;  // first/second moments, param-shaped
  };
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  AdamWConfig cfg_;
  int64_t t_ = 0;
  std::vector<Slot> slots_;
};

// ===== schedule =====

struct Schedule {
  double peak_lr = 3e-4;
  double min_lr = 0.0;
  int64_t warmup_steps = 0;
  int64_t total_steps = 1;  // must exceed warmup_steps
};

// Linear ramp 0 -> peak over warmup (exact at both ends), then cosine decay
// peak -> min over the rest. Steps past total_steps clamp to min_lr.
double lr_at(int64_t step, const Schedule& s);

// ===== dataset pipeline =====

struct TrainSample {
  int64_t slide_index = -1;  // into LoadedDataset::features
  int32_t template_id = 0;
  int32_t marker_category = -1;
  char gold = 'A';
  std::string rec_id;
  std::vector<int32_t> prompt_ids;
  std::vector<int32_t> answer_ids;  // gold answer, EOS-terminated
};

struct LoadedDataset {
  Manifest manifest;
  std::vector<Tensor> features;  // one [patches x d_f] tensor per slide entry
  std::vector<TrainSample> train, val, test;
};

// Build slides + records from cfg, encode every slide with the frozen encoder,
// and write features/, manifest.tsv, slides.tsv, vocab.txt under cfg.data_dir.
Manifest generate_dataset(const RunConfig& cfg);

Vocabulary load_vocab(const RunConfig& cfg);
LoadedDataset load_dataset(const RunConfig& cfg, const Vocabulary& v);

std::string stage0_dir(const RunConfig& cfg);  // ckpt_dir/stage0
std::string stage1_dir(const RunConfig& cfg);  // ckpt_dir/stage1-<baseline>

// ===== training loops =====

struct TrainStats {
  int64_t optimizer_steps = 0;
  double first_window_mean = 0.0;  // mean loss over the first <=50 steps
  double last_window_mean = 0.0;   // and over the last <=50
};

// Stage-0: next-token loss over prompt+answer lines of the train split; trains
// the decoder group only. Metrics lines "step\tloss\tlr\tsamples_per_sec" go
// to *metrics when given. Checkpoints land in stage0_dir(cfg) every 500
// optimizer steps and at the end, unless ckpt_dir is empty.
TrainStats pretrain_lm(ModelBundle& b, const LoadedDataset& data, std::ostream* metrics);

// Stage-1: answer loss through the configured visual path (cfg.baseline).
// For tcp, fusion layers are first value-initialized from the decoder's early
// layers (cfg.init_layers; -1 = all). Trains exactly the stage-1 mask for the
// chosen kind; everything else stays frozen. Checkpoints in stage1_dir(cfg).
TrainStats train_vqa(ModelBundle& b, const LoadedDataset& data, std::ostream* metrics);

// Mean pretrain loss over a split's prompt+answer lines, no gradients.
double mean_line_loss(ModelBundle& b, const std::vector<TrainSample>& samples);

}  // namespace tcv
