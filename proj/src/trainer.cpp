#include "tcvqa/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <ostream>

#include "tcvqa/common.hpp"
#include "tcvqa/serialize.hpp"

namespace tcv {

// ===== freeze masks =====

FreezeMask stage0_mask() { return {{"decoder"}}; }

FreezeMask stage1_mask(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::tcp: return {{"projector", "bank", "stack"}};
    case BaselineKind::full_forward:
    case BaselineKind::prune_k: return {{"projector"}};
    case BaselineKind::mil_pool: return {{"projector", "mil"}};
  }
  throw config_error("stage1_mask: unknown baseline kind");
}

std::vector<std::pair<std::string, Tensor>> trainable_params(ModelBundle& b, const FreezeMask& m) {
  std::vector<std::pair<std::string, Tensor>> out;
  visit_bundle_params(b, [&](const std::string& n, Tensor& t) {
    if (m.is_trainable(group_of(n))) out.emplace_back(n, t);
  });
  return out;
}

// ===== optimizer =====

AdamW::AdamW(AdamWConfig cfg) : cfg_(cfg) {
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0))
    throw config_error("adamw: betas must lie in [0, 1)");
  if (!(cfg_.eps > 0.0)) throw config_error("adamw: eps must be positive");
}

void AdamW::add_param(const std::string& name, const Tensor& t) {
  if (!t.defined() || !t.requires_grad())
    throw contract_error("adamw: \"" + name + "\" does not require gradients");
  for (const Slot& s : slots_)
    if (s.name == name) throw contract_error("adamw: duplicate parameter \"" + name + "\"");
  Slot s;
  s.name = name;
  s.param = t;
  s.m.assign(static_cast<size_t>(t.numel()), 0.0);
  s.v.assign(static_cast<size_t>(t.numel()), 0.0);
  slots_.push_back(std::move(s));
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Slot& s : slots_) {
    if (!s.param.has_grad())
      throw contract_error("adamw: missing gradient for \"" + s.name + "\" at step " +
                           std::to_string(t_));
    auto g = s.param.grad();
    auto p = s.param.data();
    for (size_t i = 0; i < p.size(); ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = s.m[i] / bc1;
      const double v_hat = s.v[i] / bc2;
      p[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) + cfg_.weight_decay * p[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (Slot& s : slots_) s.param.zero_grad();
}

int64_t AdamW::n_scalars() const {
  int64_t n = 0;
  for (const Slot& s : slots_) n += 2 * s.param.numel();  // m and v buffers
  return n;
}

// ===== schedule =====

double lr_at(int64_t step, const Schedule& s) {
  if (s.warmup_steps < 0 || s.total_steps <= s.warmup_steps)
    throw config_error("schedule: need 0 <= warmup_steps < total_steps, got " +
                       std::to_string(s.warmup_steps) + " / " + std::to_string(s.total_steps));
  if (s.peak_lr < 0.0 || s.min_lr < 0.0 || s.min_lr > s.peak_lr)
    throw config_error("schedule: need 0 <= min_lr <= peak_lr");
  if (step < 0) throw contract_error("lr_at: negative step");
  if (step >= s.total_steps) return s.min_lr;
  if (s.warmup_steps > 0 && step <= s.warmup_steps)
    return s.peak_lr * (static_cast<double>(step) / static_cast<double>(s.warmup_steps));
  const double t = static_cast<double>(step - s.warmup_steps) /
                   static_cast<double>(s.total_steps - s.warmup_steps);
  return s.min_lr + (s.peak_lr - s.min_lr) * (0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

// ===== dataset pipeline =====

Manifest generate_dataset(const RunConfig& cfg) {
  validate_config(cfg);
  DatasetPlan plan;
  plan.n_slides = cfg.n_slides;
  plan.grid_rows = cfg.grid;
  plan.grid_cols = cfg.grid;
  plan.patch_px = cfg.patch_px;
  plan.marker_rarity = cfg.marker_rarity;
  plan.seed = cfg.seed;
  const FrozenVisualEncoder enc(3 * cfg.patch_px * cfg.patch_px, cfg.d_f,
                                derive_seed(cfg.seed, 0xe0c0de));
  std::filesystem::create_directories(std::filesystem::path(cfg.data_dir) / "features");
  Manifest m = build_manifest(plan, [&](const SlideEntry& entry, const GeneratedSlide& slide) {
    Tensor f = enc.encode_patches(slide.patches);
    FeatureBlock blk;
    blk.rows = f.rows();
    blk.dim = f.cols();
    blk.vals.assign(f.data().begin(), f.data().end());
    save_feature_block(cfg.data_dir + "/" + entry.feature_path, blk);
  });
  write_dataset(m, cfg.data_dir);
  build_vocabulary(m).save(vocab_path(cfg));
  return m;
}

Vocabulary load_vocab(const RunConfig& cfg) { return Vocabulary::load(vocab_path(cfg)); }

LoadedDataset load_dataset(const RunConfig& cfg, const Vocabulary& v) {
  LoadedDataset out;
  out.manifest = read_dataset(cfg.data_dir);

  std::map<std::string, int64_t> slide_index;
  std::map<std::string, int32_t> slide_marker;
  for (const SlideEntry& s : out.manifest.slides) {
    slide_index[s.meta.slide_id] = static_cast<int64_t>(out.features.size());
    slide_marker[s.meta.slide_id] = s.meta.marker_category;
    FeatureBlock blk = load_feature_block(cfg.data_dir + "/" + s.feature_path);
    out.features.push_back(Tensor::from_vec({blk.rows, blk.dim}, std::move(blk.vals)));
  }

  std::map<std::pair<std::string, int32_t>, int64_t> ordinals;
  for (const VQARecord& rec : out.manifest.records) {
    const int64_t ordinal = ordinals[{rec.slide_id, rec.template_id}]++;
    TrainSample s;
    s.slide_index = slide_index.at(rec.slide_id);
    s.template_id = rec.template_id;
    s.marker_category = slide_marker.at(rec.slide_id);
    s.gold = rec.gold;
    s.rec_id = record_id(rec, ordinal);
    s.prompt_ids = prompt_token_ids(v, rec);
    s.answer_ids = answer_token_ids(v, rec, rec.gold);
    if (rec.split == "train") out.train.push_back(std::move(s));
    else if (rec.split == "val") out.val.push_back(std::move(s));
    else out.test.push_back(std::move(s));
  }
  return out;
}

std::string stage0_dir(const RunConfig& cfg) { return cfg.ckpt_dir + "/stage0"; }

std::string stage1_dir(const RunConfig& cfg) {
  return cfg.ckpt_dir + "/stage1-" + baseline_name(parse_baseline(cfg.baseline));
}

// ===== training loops =====

namespace {

std::vector<int64_t> shuffled_order(int64_t n, uint64_t seed) {
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  rng r(seed);
  for (int64_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<int64_t>(r.below(static_cast<uint64_t>(i + 1)));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  return order;
}

int64_t steps_per_pass(int64_t n, int64_t accum) { return (n + accum - 1) / accum; }

Schedule loop_schedule(const RunConfig& cfg, int64_t n, int64_t epochs) {
  Schedule s;
  s.peak_lr = cfg.peak_lr;
  s.min_lr = cfg.min_lr;
  s.total_steps = cfg.total_steps > 0 ? cfg.total_steps : epochs * steps_per_pass(n, cfg.accum_steps);
  s.warmup_steps = std::min(cfg.warmup_steps, s.total_steps - 1);
  return s;
}

struct LoopSpec {
  int64_t n = 0;
  int64_t epochs = 1;
  int64_t accum = 1;
  Schedule sched;
  uint64_t shuffle_seed = 0;
  int64_t ckpt_every = 500;
  std::function<void()> on_checkpoint;  // optional
};

TrainStats run_loop(const LoopSpec& spec, AdamW& opt,
                    const std::function<Tensor(int64_t)>& loss_fn, std::ostream* metrics) {
  if (spec.n < 1) throw contract_error("train loop: empty sample set");
  using clock = std::chrono::steady_clock;
  std::vector<double> losses;
  int64_t step = 0;
  int64_t last_saved = -1;
  for (int64_t epoch = 0; epoch < spec.epochs; ++epoch) {
    const std::vector<int64_t> order =
        shuffled_order(spec.n, derive_seed(spec.shuffle_seed, 0xc0de00 + static_cast<uint64_t>(epoch)));
    int64_t i = 0;
    while (i < spec.n) {
      const int64_t group = std::min<int64_t>(spec.accum, spec.n - i);
      const auto t0 = clock::now();
      double group_loss = 0.0;
      for (int64_t k = 0; k < group; ++k) {
        TapeScope scope;
        Tensor loss = loss_fn(order[static_cast<size_t>(i + k)]);
        const double li = loss.item();
        if (!std::isfinite(li))
          throw contract_error("train loop: non-finite loss at optimizer step " +
                               std::to_string(step));
        group_loss += li;
        scope.backward(scale(loss, 1.0 / static_cast<double>(group)));
      }
      const double lr = lr_at(std::min(step, spec.sched.total_steps), spec.sched);
      opt.step(lr);
      opt.zero_grad();
      ++step;
      i += group;
      const double mean_loss = group_loss / static_cast<double>(group);
      losses.push_back(mean_loss);
      if (metrics) {
        const double secs =
            std::chrono::duration<double>(clock::now() - t0).count();
        const double sps = static_cast<double>(group) / std::max(secs, 1e-9);
        char line[128];
        std::snprintf(line, sizeof(line), "%lld\t%.6g\t%.6g\t%.6g\n",
                      static_cast<long long>(step), mean_loss, lr, sps);
        *metrics << line;
      }
      if (spec.on_checkpoint && spec.ckpt_every > 0 && step % spec.ckpt_every == 0) {
        spec.on_checkpoint();
        last_saved = step;
      }
    }
  }
  if (spec.on_checkpoint && last_saved != step) spec.on_checkpoint();

  TrainStats stats;
  stats.optimizer_steps = step;
  const size_t window = std::min<size_t>(50, losses.size());
  for (size_t k = 0; k < window; ++k) {
    stats.first_window_mean += losses[k] / static_cast<double>(window);
    stats.last_window_mean += losses[losses.size() - 1 - k] / static_cast<double>(window);
  }
  return stats;
}

std::vector<int32_t> sample_line(const TrainSample& s) {
  std::vector<int32_t> line = s.prompt_ids;
  line.insert(line.end(), s.answer_ids.begin(), s.answer_ids.end());
  return line;
}

}  // namespace

TrainStats pretrain_lm(ModelBundle& b, const LoadedDataset& data, std::ostream* metrics) {
  std::vector<std::vector<int32_t>> lines;
  lines.reserve(data.train.size());
  for (const TrainSample& s : data.train) lines.push_back(sample_line(s));

  AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, b.cfg.weight_decay});
  for (auto& [name, t] : trainable_params(b, stage0_mask())) opt.add_param(name, t);

  LoopSpec spec;
  spec.n = static_cast<int64_t>(lines.size());
  spec.epochs = b.cfg.pretrain_epochs;
  spec.accum = b.cfg.accum_steps;
  spec.sched = loop_schedule(b.cfg, spec.n, spec.epochs);
  spec.shuffle_seed = derive_seed(b.cfg.seed, 0x57a9e0);
  if (!b.cfg.ckpt_dir.empty())
    spec.on_checkpoint = [&] { save_checkpoint(stage0_dir(b.cfg), b, 0); };
  return run_loop(
      spec, opt, [&](int64_t i) { return pretrain_loss(b.decoder, lines[static_cast<size_t>(i)]); },
      metrics);
}

TrainStats train_vqa(ModelBundle& b, const LoadedDataset& data, std::ostream* metrics) {
  const BaselineKind kind = parse_baseline(b.cfg.baseline);
  if (kind == BaselineKind::tcp && b.cfg.init_layers != 0) {
    const int64_t n = b.cfg.init_layers < 0 ? b.cfg.n_cmp : b.cfg.init_layers;
    init_from_decoder(b.stack, b.decoder.layers, n);
  }

  AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, b.cfg.weight_decay});
  for (auto& [name, t] : trainable_params(b, stage1_mask(kind))) opt.add_param(name, t);

  LoopSpec spec;
  spec.n = static_cast<int64_t>(data.train.size());
  spec.epochs = b.cfg.epochs;
  spec.accum = b.cfg.accum_steps;
  spec.sched = loop_schedule(b.cfg, spec.n, spec.epochs);
  spec.shuffle_seed = derive_seed(b.cfg.seed, 0x57a9e1);
  if (!b.cfg.ckpt_dir.empty())
    spec.on_checkpoint = [&] { save_checkpoint(stage1_dir(b.cfg), b, 1); };
  return run_loop(
      spec, opt,
      [&](int64_t i) {
        const TrainSample& s = data.train[static_cast<size_t>(i)];
        return sample_loss(b, kind, data.features[static_cast<size_t>(s.slide_index)], s.prompt_ids,
                           s.answer_ids);
      },
      metrics);
}

double mean_line_loss(ModelBundle& b, const std::vector<TrainSample>& samples) {
  if (samples.empty()) throw eval_error("mean_line_loss: empty sample set");
  double total = 0.0;
  for (const TrainSample& s : samples) total += pretrain_loss(b.decoder, sample_line(s)).item();
  return total / static_cast<double>(samples.size());
}

}  // namespace tcv
