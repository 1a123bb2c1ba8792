#include "tcvqa/eval.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <ostream>

#include "tcvqa/serialize.hpp"

namespace tcv {

// ===== choice parsing =====

std::optional<char> parse_choice(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const unsigned char c0 = static_cast<unsigned char>(text[0]);
  const char upper = static_cast<char>(std::toupper(c0));
  if (upper < 'A' || upper > 'D') return std::nullopt;
  if (text.size() == 1) return upper;
  const unsigned char c1 = static_cast<unsigned char>(text[1]);
  if (c1 == '.' || c1 == ')' || std::isspace(c1)) return upper;
  return std::nullopt;
}

// ===== accuracy =====

EvalReport score_predictions(const std::vector<TrainSample>& samples,
                             const std::map<std::string, std::string>& predictions) {
  std::vector<std::string> missing;
  std::map<std::string, CategoryScore> buckets;
  EvalReport r;
  for (const TrainSample& s : samples) {
    auto it = predictions.find(s.rec_id);
    if (it == predictions.end()) {
      missing.push_back(s.rec_id);
      continue;
    }
    const std::string name = category_names()[s.marker_category];
    CategoryScore& cat = buckets[name];
    cat.name = name;
    cat.total += 1;
    r.total += 1;
    const std::optional<char> letter = parse_choice(it->second);
    if (!letter) {
      r.parse_failures += 1;
    } else if (*letter == s.gold) {
      cat.correct += 1;
      r.correct += 1;
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing predictions for " + std::to_string(missing.size()) + " records:";
    for (size_t i = 0; i < missing.size() && i < 8; ++i) msg += " " + missing[i];
    if (missing.size() > 8) msg += " ...";
    throw eval_error(msg);
  }
  double sum = 0.0;
  for (auto& [name, cat] : buckets) {
    sum += cat.accuracy();
    r.categories.push_back(cat);
  }
  r.average = r.categories.empty() ? 0.0 : sum / double(r.categories.size());
  return r;
}

namespace {

std::string fmt_accuracy(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string render_report(const EvalReport& r) {
  std::string out;
  for (const CategoryScore& c : r.categories)
    out += c.name + "\t" + std::to_string(c.correct) + "\t" + std::to_string(c.total) + "\t" +
           fmt_accuracy(c.accuracy()) + "\n";
  out += "AVG\t" + std::to_string(r.correct) + "\t" + std::to_string(r.total) + "\t" +
         fmt_accuracy(r.average) + "\n";
  return out;
}

std::map<std::string, std::string> predict_split(ModelBundle& b, const Vocabulary& v,
                                                 const LoadedDataset& data,
                                                 const std::vector<TrainSample>& split) {
  const BaselineKind kind = parse_baseline(b.cfg.baseline);
  GenerationSettings settings;
  settings.max_new_tokens = b.cfg.max_new_tokens;
  const int64_t n = static_cast<int64_t>(split.size());
  std::vector<std::string> texts(n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < n; ++i) {
    try {
      const TrainSample& s = split[i];
      Tensor prefix = visual_prefix(b, kind, data.features[s.slide_index], s.prompt_ids);
      std::vector<int32_t> ids = generate(b.decoder, prefix, s.prompt_ids, settings);
      texts[i] = detokenize(v, ids);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::map<std::string, std::string> out;
  for (int64_t i = 0; i < n; ++i) out[split[i].rec_id] = texts[i];
  return out;
}

EvalReport evaluate_split(ModelBundle& b, const Vocabulary& v, const LoadedDataset& data,
                          const std::vector<TrainSample>& split) {
  if (split.empty()) throw eval_error("evaluate_split: empty split");
  return score_predictions(split, predict_split(b, v, data, split));
}

std::vector<TrainSample> filter_template(const std::vector<TrainSample>& samples,
                                         int32_t template_id) {
  std::vector<TrainSample> out;
  for (const TrainSample& s : samples)
    if (s.template_id == template_id) out.push_back(s);
  return out;
}

EvalReport run_baseline(const RunConfig& cfg) {
  Vocabulary v = load_vocab(cfg);
  LoadedDataset data = load_dataset(cfg, v);
  ModelBundle b = make_bundle(cfg, v.size());
  load_checkpoint(stage1_dir(cfg), b);
  return evaluate_split(b, v, data, data.test);
}

// ===== analytic FLOPs =====

double matmul_flops(int64_t m, int64_t n, int64_t k) { return 2.0 * double(m) * double(n) * double(k); }

double layer_flops(int64_t rows, int64_t d) {
  const double L = double(rows), D = double(d);
  return 24.0 * L * D * D + 4.0 * L * L * D;
}

FlopCount count_flops(const RunConfig& cfg, BaselineKind kind, const FlopLens& lens,
                      bool include_encoder) {
  FlopCount f;
  const int64_t d = cfg.d_h;
  if (include_encoder)
    f.encoder = matmul_flops(lens.l_wsi, cfg.d_f, 3 * cfg.patch_px * cfg.patch_px);
  f.projector = matmul_flops(lens.l_wsi, d, cfg.d_f);
  int64_t decoder_prefix = 0;
  switch (kind) {
    case BaselineKind::tcp:
      f.stack = double(cfg.n_cmp) * layer_flops(lens.l_c + lens.l_wsi + lens.l_t, d) +
                matmul_flops(lens.l_c, d, lens.l_wsi);  // pooled visual seed
      decoder_prefix = lens.l_c;
      break;
    case BaselineKind::full_forward:
      decoder_prefix = lens.l_wsi;
      break;
    case BaselineKind::prune_k:
      // k rounds of l_wsi squared distances in feature space
      f.stack = matmul_flops(lens.l_wsi, lens.l_c, cfg.d_f);
      decoder_prefix = lens.l_c;
      break;
    case BaselineKind::mil_pool:
      f.stack = 2.0 * matmul_flops(lens.l_wsi, d, d) + 4.0 * double(lens.l_wsi) * double(d);
      decoder_prefix = 1;
      break;
  }
  const int64_t rows = decoder_prefix + lens.l_t + lens.t_new;
  f.decoder = double(cfg.n_dec) * layer_flops(rows, d);
  if (lens.vocab > 0) f.decoder += matmul_flops(rows, lens.vocab, d);
  return f;
}

// ===== throughput =====

ThroughputReport bench_throughput(ModelBundle& b, const LoadedDataset& data,
                                  const std::vector<TrainSample>& split, Phase phase,
                                  int64_t warmup) {
  const int64_t n = static_cast<int64_t>(split.size());
  if (n == 0) throw eval_error("bench_throughput: empty split");
  if (warmup < 0) warmup = 0;
  if (n <= warmup)
    throw eval_error("bench_throughput: " + std::to_string(n) + " samples cannot cover warmup " +
                     std::to_string(warmup));
  const BaselineKind kind = parse_baseline(b.cfg.baseline);
  GenerationSettings settings;
  settings.max_new_tokens = b.cfg.max_new_tokens;
  using clock = std::chrono::steady_clock;
  clock::time_point start{};
  for (int64_t i = 0; i < n; ++i) {
    if (i == warmup) start = clock::now();
    const TrainSample& s = split[i];
    const Tensor& feats = data.features[s.slide_index];
    if (phase == Phase::inference) {
      Tensor prefix = visual_prefix(b, kind, feats, s.prompt_ids);
      generate(b.decoder, prefix, s.prompt_ids, settings);
    } else {
      TapeScope scope;
      Tensor loss = sample_loss(b, kind, feats, s.prompt_ids, s.answer_ids);
      scope.backward(loss);
    }
  }
  ThroughputReport r;
  r.phase = phase;
  r.warmup = warmup;
  r.timed = n - warmup;
  r.seconds = std::chrono::duration<double>(clock::now() - start).count();
  r.samples_per_sec = r.seconds > 0.0 ? double(r.timed) / r.seconds : 0.0;
  return r;
}

BenchPair bench_pair(const RunConfig& cfg, const Vocabulary& v, const LoadedDataset& data,
                     int64_t warmup) {
  const std::vector<TrainSample>& split = data.test.empty() ? data.train : data.test;
  if (split.empty()) throw eval_error("bench_pair: dataset has no samples");
  FlopLens lens;
  lens.l_wsi = cfg.grid * cfg.grid;
  lens.l_t = static_cast<int64_t>(split.front().prompt_ids.size());
  lens.l_c = cfg.l_c;
  lens.t_new = cfg.max_new_tokens;
  lens.vocab = v.size();

  BenchPair p;
  RunConfig tcp_cfg = cfg;
  tcp_cfg.baseline = "tcp";
  ModelBundle tcp = make_bundle(tcp_cfg, v.size());
  p.tcp_train = bench_throughput(tcp, data, split, Phase::train, warmup);
  p.tcp_infer = bench_throughput(tcp, data, split, Phase::inference, warmup);
  p.tcp_flops = count_flops(tcp_cfg, BaselineKind::tcp, lens);

  RunConfig ff_cfg = cfg;
  ff_cfg.baseline = "full-forward";
  ModelBundle ff = make_bundle(ff_cfg, v.size());
  p.ff_train = bench_throughput(ff, data, split, Phase::train, warmup);
  p.ff_infer = bench_throughput(ff, data, split, Phase::inference, warmup);
  p.ff_flops = count_flops(ff_cfg, BaselineKind::full_forward, lens);
  return p;
}

namespace {

std::string fmt_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string flop_line(const char* name, const FlopCount& f) {
  return std::string("flops\t") + name + "\tencoder " + fmt_g(f.encoder) + "\tprojector " +
         fmt_g(f.projector) + "\tstack " + fmt_g(f.stack) + "\tdecoder " + fmt_g(f.decoder) +
         "\ttotal " + fmt_g(f.total()) + "\n";
}

std::string throughput_line(const char* name, const ThroughputReport& t) {
  return std::string("throughput\t") + name + "\t" +
         (t.phase == Phase::train ? "train" : "inference") + "\t" + fmt_g(t.samples_per_sec) +
         " samples/sec over " + std::to_string(t.timed) + "\n";
}

}  // namespace

std::string render_bench_report(const RunConfig& cfg, const BenchPair& p) {
  const std::string snapshot = render_config(cfg);
  std::string out = "tcvqa-bench v1\n";
  out += "config-hash " + to_hex(fnv1a64_bytes(snapshot.data(), snapshot.size())) + "\n";
  out += "warmup " + std::to_string(p.tcp_infer.warmup) + "\n";
  out += "timer steady_clock, analytic flops = forward closed forms\n";
  out += flop_line("tcp", p.tcp_flops);
  out += flop_line("full-forward", p.ff_flops);
  out += throughput_line("tcp", p.tcp_train);
  out += throughput_line("tcp", p.tcp_infer);
  out += throughput_line("full-forward", p.ff_train);
  out += throughput_line("full-forward", p.ff_infer);
  if (p.ff_infer.samples_per_sec > 0.0)
    out += "inference-ratio " + fmt_g(p.tcp_infer.samples_per_sec / p.ff_infer.samples_per_sec) +
           "\n";
  return out;
}

// ===== l_c ablation =====

std::vector<AblationRow> ablate_lc(const RunConfig& base, const std::vector<int64_t>& lcs,
                                   std::ostream* log) {
  if (lcs.empty()) throw config_error("ablate_lc: empty l_c list");
  const std::string stage0 = stage0_dir(base);
  if (!checkpoint_exists(stage0))
    throw config_error("ablate_lc: stage-0 checkpoint not found: " + stage0 + "/checkpoint.txt");
  Vocabulary v = load_vocab(base);
  LoadedDataset data = load_dataset(base, v);
  std::vector<AblationRow> rows;
  for (int64_t lc : lcs) {
    RunConfig cfg = base;
    cfg.l_c = lc;
    cfg.ckpt_dir = base.ckpt_dir + "/ablate-lc" + std::to_string(lc);
    validate_config(cfg);
    ModelBundle b = make_bundle(cfg, v.size());
    load_checkpoint(stage0, b);
    if (log) *log << "# l_c " << lc << "\n";
    train_vqa(b, data, log);
    rows.push_back({lc, evaluate_split(b, v, data, data.test)});
  }
  return rows;
}

std::string render_ablation(const std::vector<AblationRow>& rows) {
  std::string out = "l_c\tcorrect\ttotal\taccuracy\n";
  for (const AblationRow& r : rows)
    out += std::to_string(r.l_c) + "\t" + std::to_string(r.report.correct) + "\t" +
           std::to_string(r.report.total) + "\t" + fmt_accuracy(r.report.overall()) + "\n";
  return out;
}

// ===== token-state dumps =====

TokenStates token_states(ModelBundle& b, const Tensor& feats, std::span<const int32_t> prompt_ids) {
  TokenStates s;
  s.hv = project(b.projector, feats);
  s.ht = embed_text(b.decoder.tok_table, b.stack.text_pos, prompt_ids);
  s.hc = compress(b.bank, b.stack, s.hv, s.ht);
  return s;
}

namespace {

FeatureBlock to_block(const Tensor& t) {
  FeatureBlock blk;
  blk.rows = t.rows();
  blk.dim = t.cols();
  auto vals = t.data();
  blk.vals.assign(vals.begin(), vals.end());
  return blk;
}

}  // namespace

void dump_token_states(ModelBundle& b, const Tensor& feats, std::span<const int32_t> prompt_ids,
                       const std::string& path_prefix) {
  TokenStates s = token_states(b, feats, prompt_ids);
  const struct {
    const char* tag;
    const char* label;
    const Tensor* t;
  } blocks[] = {{"hv", "visual", &s.hv}, {"ht", "text", &s.ht}, {"hc", "compressed", &s.hc}};
  std::string sidecar;
  for (const auto& blk : blocks) {
    const std::string file = path_prefix + "." + blk.tag + ".tcpf";
    save_feature_block(file, to_block(*blk.t));
    sidecar += std::string(blk.tag) + ".tcpf\t" + blk.label + "\t" +
               std::to_string(blk.t->rows()) + "\n";
  }
  write_text_file(path_prefix + ".labels.txt", sidecar);
}

double mean_pairwise_distance(const Tensor& rows) {
  if (rows.shape().size() != 2 || rows.rows() < 2)
    throw eval_error("mean_pairwise_distance: need a matrix with at least 2 rows");
  const int64_t n = rows.rows(), d = rows.cols();
  auto vals = rows.data();
  double sum = 0.0;
  int64_t pairs = 0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) {
      double sq = 0.0;
      for (int64_t k = 0; k < d; ++k) {
        const double diff = vals[i * d + k] - vals[j * d + k];
        sq += diff * diff;
      }
      sum += std::sqrt(sq);
      ++pairs;
    }
  return sum / double(pairs);
}

}  // namespace tcv
