// Acceptance gate: ten numbered criteria, one PASS/FAIL line each, plus two
// supplementary derived measurements. Criteria build on shared artifacts (desk
// corpora, trained checkpoints) kept under --workdir; a fresh run wipes the
// directory unless --reuse is given. Exit code = number of failed checks.
//
// Full mode is the gate. --quick shrinks the corpora and waives the
// convergence-dependent gates (4, 5, 7, S2) so the harness itself can be
// smoke-tested in about a minute.

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "support/finite_diff.hpp"
#include "tcvqa/bundle.hpp"
#include "tcvqa/common.hpp"
#include "tcvqa/config.hpp"
#include "tcvqa/eval.hpp"
#include "tcvqa/rng.hpp"
#include "tcvqa/serialize.hpp"
#include "tcvqa/trainer.hpp"

namespace fs = std::filesystem;
using namespace tcv;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// ===== shared artifacts =====

struct SeedRun {
  RunConfig cfg;
  double t_stage0 = -1.0;  // seconds; -1 = checkpoint reused, no fresh timing
  double t_stage1 = -1.0;
  EvalReport test_full;    // tcp on the whole test split
  double marker_acc = 0.0; // tcp on marker-identity test records only
  bool evaluated = false;
};

struct Ctx {
  std::string work;
  bool quick = false;
  std::map<uint64_t, SeedRun> runs;
};

RunConfig desk_cfg(const Ctx& c, uint64_t seed) {
  RunConfig cfg;  // struct defaults are the desk configuration
  cfg.seed = seed;
  const std::string tag = (c.quick ? "quick-seed" : "desk-seed") + std::to_string(seed);
  cfg.data_dir = c.work + "/" + tag + "/data";
  cfg.ckpt_dir = c.work + "/" + tag + "/ckpt";
  if (c.quick) cfg.n_slides = 120;
  return cfg;
}

void ensure_corpus(const RunConfig& cfg) {
  if (!fs::exists(cfg.data_dir + "/manifest.tsv")) generate_dataset(cfg);
}

std::ofstream open_log(const Ctx& c, const std::string& name) {
  fs::create_directories(c.work + "/logs");
  return std::ofstream(c.work + "/logs/" + name + ".log");
}

// Train (or reuse) stage 0; returns wall seconds, -1 when reused.
double ensure_stage0(Ctx& c, const RunConfig& cfg, const std::string& tag) {
  if (checkpoint_exists(stage0_dir(cfg))) return -1.0;
  const Vocabulary v = load_vocab(cfg);
  const LoadedDataset data = load_dataset(cfg, v);
  ModelBundle b = make_bundle(cfg, v.size());
  std::ofstream log = open_log(c, "stage0-" + tag);
  const double t0 = now_seconds();
  pretrain_lm(b, data, &log);
  return now_seconds() - t0;
}

// Train (or reuse) stage 1 for cfg.baseline on top of stage 0.
double ensure_stage1(Ctx& c, const RunConfig& cfg, const std::string& tag) {
  if (checkpoint_exists(stage1_dir(cfg))) return -1.0;
  const Vocabulary v = load_vocab(cfg);
  const LoadedDataset data = load_dataset(cfg, v);
  ModelBundle b = make_bundle(cfg, v.size());
  load_checkpoint(stage0_dir(cfg), b);
  std::ofstream log = open_log(c, "stage1-" + cfg.baseline + "-" + tag);
  const double t0 = now_seconds();
  train_vqa(b, data, &log);
  return now_seconds() - t0;
}

EvalReport eval_with_checkpoint(const RunConfig& cfg, const std::string& ckpt,
                                int32_t only_template = -1) {
  const Vocabulary v = load_vocab(cfg);
  const LoadedDataset data = load_dataset(cfg, v);
  ModelBundle b = make_bundle(cfg, v.size());
  load_checkpoint(ckpt, b);
  const std::vector<TrainSample> split =
      only_template < 0 ? data.test : filter_template(data.test, only_template);
  return evaluate_split(b, v, data, split);
}

// Corpus + stage 0 + tcp stage 1 + test evaluations for one desk seed.
SeedRun& ensure_seed_run(Ctx& c, uint64_t seed, std::ostream& out) {
  SeedRun& r = c.runs[seed];
  if (r.evaluated) return r;
  r.cfg = desk_cfg(c, seed);
  const std::string tag = "seed" + std::to_string(seed);
  ensure_corpus(r.cfg);
  r.t_stage0 = ensure_stage0(c, r.cfg, tag);
  r.t_stage1 = ensure_stage1(c, r.cfg, tag);
  out << "    [" << tag << "] stage0 "
      << (r.t_stage0 < 0 ? std::string("reused") : fmt("%.1fs", r.t_stage0)) << ", stage1 "
      << (r.t_stage1 < 0 ? std::string("reused") : fmt("%.1fs", r.t_stage1)) << "\n";
  r.test_full = eval_with_checkpoint(r.cfg, stage1_dir(r.cfg));
  r.marker_acc = eval_with_checkpoint(r.cfg, stage1_dir(r.cfg), 0).overall();
  r.evaluated = true;
  return r;
}

// ===== criteria =====

// 1. Analytic gradients of the VQA loss vs central finite differences over
//    every stage-1 trainable parameter of a d_h=8, 1-fusion-layer, 2-decoder
//    -layer model; max relative error < 1e-4 in under two minutes.
bool crit1(Ctx&, std::ostream& out) {
  const double t0 = now_seconds();
  RunConfig cfg;
  cfg.d_h = 8;
  cfg.d_f = 4;
  cfg.heads = 2;
  cfg.n_cmp = 1;
  cfg.n_dec = 2;
  cfg.l_c = 4;
  cfg.context = 64;
  cfg.seed = 7;
  ModelBundle b = make_bundle(cfg, 32);
  rng r(11);
  const Tensor feats = Tensor::randn({6, 4}, r, 0.0, 1.0);
  const std::vector<int32_t> prompt = {1, 5, 7, 9, 12};
  const std::vector<int32_t> answer = {6, 8, 2};
  const auto loss = [&]() { return sample_loss(b, BaselineKind::tcp, feats, prompt, answer); };
  {
    TapeScope scope;
    scope.backward(loss());
  }
  const auto rep = testing::check_grads([&]() { return loss().item(); },
                                        trainable_params(b, stage1_mask(BaselineKind::tcp)));
  const double secs = now_seconds() - t0;
  out << "criterion  1 " << (rep.max_rel < 1e-4 && secs < 120.0 ? "PASS" : "FAIL")
      << "  gradient fidelity: max rel err " << fmt("%.3g", rep.max_rel) << " over "
      << rep.params_checked << " params, worst " << rep.worst_param << " ("
      << fmt("%.1fs", secs) << ", budget 120s)\n";
  return rep.max_rel < 1e-4 && secs < 120.0;
}

// 2. 10,000 visual tokens with l_c = 100: decoder input is exactly
//    l_c + l_prompt rows; visual contribution cut by >= 99%, integer-exact.
bool crit2(Ctx&, std::ostream& out) {
  RunConfig cfg;
  cfg.d_h = 16;
  cfg.d_f = 8;
  cfg.heads = 2;
  cfg.n_cmp = 1;
  cfg.n_dec = 1;
  cfg.l_c = 100;
  cfg.context = 160;
  cfg.seed = 7;
  ModelBundle b = make_bundle(cfg, 32);
  rng r(13);
  const int64_t l_wsi = 10000;
  const Tensor feats = Tensor::randn({l_wsi, 8}, r, 0.0, 1.0);
  std::vector<int32_t> prompt(20);
  for (size_t i = 0; i < prompt.size(); ++i) prompt[i] = static_cast<int32_t>(4 + i);
  const Tensor prefix = visual_prefix(b, BaselineKind::tcp, feats, prompt);
  const int64_t decoder_rows = prefix.rows() + static_cast<int64_t>(prompt.size());
  const bool rows_exact = prefix.rows() == cfg.l_c &&
                          decoder_rows == cfg.l_c + static_cast<int64_t>(prompt.size());
  const bool reduced = (l_wsi - prefix.rows()) * 100 >= 99 * l_wsi;
  out << "criterion  2 " << (rows_exact && reduced ? "PASS" : "FAIL")
      << "  compression contract: " << l_wsi << " visual tokens -> " << prefix.rows()
      << " rows, decoder input " << decoder_rows << " == l_c + l_prompt, visual reduction >= 99%\n";
  return rows_exact && reduced;
}

// 3. Freeze contract: encoder and decoder hashes identical across a full
//    stage-1 run; optimizer slots cover exactly projector + bank + stack.
bool crit3(Ctx& c, std::ostream& out) {
  RunConfig cfg;
  cfg.d_h = 16;
  cfg.d_f = 8;
  cfg.heads = 2;
  cfg.n_cmp = 1;
  cfg.n_dec = 1;
  cfg.l_c = 4;
  cfg.context = 96;
  cfg.grid = 4;
  cfg.patch_px = 4;
  cfg.n_slides = 12;
  cfg.epochs = 1;
  cfg.accum_steps = 2;
  cfg.warmup_steps = 5;
  cfg.data_dir = c.work + "/freeze/data";
  cfg.ckpt_dir = c.work + "/freeze/ckpt";
  ensure_corpus(cfg);
  const Vocabulary v = load_vocab(cfg);
  const LoadedDataset data = load_dataset(cfg, v);
  ModelBundle b = make_bundle(cfg, v.size());

  std::set<std::string> slot_groups;
  AdamW probe;
  for (auto& [name, p] : trainable_params(b, stage1_mask(BaselineKind::tcp))) {
    probe.add_param(name, p);
    slot_groups.insert(group_of(name));
  }
  const bool slots_ok = slot_groups == std::set<std::string>{"projector", "bank", "stack"};

  const uint64_t enc0 = group_hash(b, "encoder");
  const uint64_t dec0 = group_hash(b, "decoder");
  std::ofstream log = open_log(c, "freeze-stage1");
  train_vqa(b, data, &log);
  const bool frozen = group_hash(b, "encoder") == enc0 && group_hash(b, "decoder") == dec0;
  out << "criterion  3 " << (frozen && slots_ok ? "PASS" : "FAIL")
      << "  freeze contract: encoder/decoder hashes " << (frozen ? "unchanged" : "CHANGED")
      << " across stage 1; optimizer state covers " << probe.n_slots()
      << " tensors in groups {projector, bank, stack} " << (slots_ok ? "only" : "VIOLATED") << "\n";
  return frozen && slots_ok;
}

// 4. Sparse-signal learning: three desk seeds, stage-0 <= 5 min and
//    stage-1 <= 15 min each, marker-identity test accuracy >= 85%.
bool crit4(Ctx& c, std::ostream& out) {
  bool ok = true;
  for (const uint64_t seed : {42ull, 43ull, 44ull}) {
    const SeedRun& r = ensure_seed_run(c, seed, out);
    const bool budget0 = r.t_stage0 < 0 || r.t_stage0 <= 300.0;
    const bool budget1 = r.t_stage1 < 0 || r.t_stage1 <= 900.0;
    const bool acc_ok = c.quick ? r.marker_acc >= 0.30 : r.marker_acc >= 0.85;
    out << "    seed " << seed << ": marker-identity " << fmt("%.4f", r.marker_acc)
        << (c.quick ? " (quick gate 0.30)" : " (gate 0.85)") << ", budgets "
        << (budget0 && budget1 ? "met" : "EXCEEDED") << "\n";
    ok = ok && budget0 && budget1 && acc_ok;
  }
  out << "criterion  4 " << (ok ? "PASS" : "FAIL")
      << "  sparse-signal learning: three seeds on "
      << (c.quick ? "120" : "800") << " slides, grid 16, rarity 0.02, l_c 16"
      << (c.quick ? " [quick]" : "") << "\n";
  return ok;
}

// 5. Baseline ordering under an equal budget: tcp within 2 points of (or
//    above) mil-pool and prune-k on the full test split.
bool crit5(Ctx& c, std::ostream& out) {
  SeedRun& r = ensure_seed_run(c, 42, out);
  const double tcp = r.test_full.overall();
  std::map<std::string, double> acc;
  for (const char* kind : {"mil-pool", "prune-k"}) {
    RunConfig cfg = r.cfg;
    cfg.baseline = kind;
    ensure_stage1(c, cfg, "seed42");
    acc[kind] = eval_with_checkpoint(cfg, stage1_dir(cfg)).overall();
  }
  const bool ok = c.quick || (tcp >= acc["mil-pool"] - 0.02 && tcp >= acc["prune-k"] - 0.02);
  out << "    tcp " << fmt("%.4f", tcp) << ", mil-pool " << fmt("%.4f", acc["mil-pool"])
      << ", prune-k " << fmt("%.4f", acc["prune-k"]) << " (margin 2 points)\n";
  out << "criterion  5 " << (ok ? "PASS" : "FAIL") << "  baseline ordering"
      << (c.quick ? " [quick: measured only, gate waived]" : "") << "\n";
  return ok;
}

// In-memory split for pure throughput measurements: one feature block, n
// identical samples, no files involved.
LoadedDataset bench_split(int64_t l_wsi, int64_t d_f, int64_t n, int64_t vocab) {
  rng r(101);
  LoadedDataset d;
  d.features.push_back(Tensor::randn({l_wsi, d_f}, r, 0.0, 1.0));
  TrainSample s;
  s.slide_index = 0;
  s.rec_id = "bench";
  s.gold = 'A';
  s.prompt_ids = {Vocabulary::kBos};
  for (int i = 0; i < 18; ++i)
    s.prompt_ids.push_back(static_cast<int32_t>(4 + (i * 7) % (vocab - 4)));
  s.answer_ids = {5, 6, Vocabulary::kEos};
  for (int64_t i = 0; i < n; ++i) d.train.push_back(s);
  return d;
}

// 6. Efficiency ordering at l_WSI = 1024: measured tcp inference throughput
//    beats full-forward (ratio > 1), tcp decoder FLOPs invariant to l_WSI,
//    full-forward decoder FLOPs superlinear — closed forms.
bool crit6(Ctx& c, std::ostream& out) {
  RunConfig cfg;  // desk widths, grid 32 -> 1024 patches
  cfg.grid = 32;
  cfg.context = 2048;
  cfg.seed = 42;

  FlopLens lens;
  lens.l_t = 19;
  lens.l_c = cfg.l_c;
  lens.t_new = cfg.max_new_tokens;
  lens.vocab = 90;
  const auto dec = [&](BaselineKind k, int64_t l_wsi) {
    FlopLens l = lens;
    l.l_wsi = l_wsi;
    return count_flops(cfg, k, l).decoder;
  };
  const bool invariant = dec(BaselineKind::tcp, 256) == dec(BaselineKind::tcp, 1024) &&
                         dec(BaselineKind::tcp, 1024) == dec(BaselineKind::tcp, 10000);
  const bool superlinear = dec(BaselineKind::full_forward, 2048) >
                           2.0 * dec(BaselineKind::full_forward, 1024);

  const int64_t warmup = c.quick ? 1 : 2;
  const int64_t n = warmup + (c.quick ? 1 : 3);
  LoadedDataset data = bench_split(1024, cfg.d_f, n, 90);
  RunConfig tcp_cfg = cfg;
  RunConfig ff_cfg = cfg;
  ff_cfg.baseline = "full-forward";
  ModelBundle tcp = make_bundle(tcp_cfg, 90);
  ModelBundle ff = make_bundle(ff_cfg, 90);
  const double tcp_sps = bench_throughput(tcp, data, data.train, Phase::inference, warmup).samples_per_sec;
  const double ff_sps = bench_throughput(ff, data, data.train, Phase::inference, warmup).samples_per_sec;
  const double ratio = tcp_sps / ff_sps;

  const bool ok = invariant && superlinear && ratio > 1.0;
  out << "    measured inference samples/sec at l_WSI=1024: tcp " << fmt("%.3f", tcp_sps)
      << ", full-forward " << fmt("%.3f", ff_sps) << " -> ratio " << fmt("%.2f", ratio)
      << " (gate > 1; large-scale reference ~5.7)\n";
  out << "criterion  6 " << (ok ? "PASS" : "FAIL")
      << "  efficiency ordering: ratio " << fmt("%.2f", ratio) << ", tcp decoder FLOPs "
      << (invariant ? "invariant" : "VARIES") << ", full-forward decoder "
      << (superlinear ? "superlinear" : "NOT superlinear") << "\n";
  return ok;
}

// 7. Ablation stability: overall test accuracy for l_c in {4,16,64,256}
//    spans <= 5 points. The l_c=16 row reuses the seed-42 run (identical
//    protocol and seed); the other three train via the ablation harness.
bool crit7(Ctx& c, std::ostream& out) {
  SeedRun& r = ensure_seed_run(c, 42, out);
  std::ofstream log = open_log(c, "ablate");
  std::vector<AblationRow> rows = ablate_lc(r.cfg, {4, 64, 256}, &log);
  rows.push_back(AblationRow{16, r.test_full});
  double lo = 1.0, hi = 0.0;
  for (const AblationRow& row : rows) {
    const double a = row.report.overall();
    lo = std::min(lo, a);
    hi = std::max(hi, a);
    out << "    l_c " << row.l_c << ": " << fmt("%.4f", a) << "\n";
  }
  const double span = hi - lo;
  const bool ok = c.quick || span <= 0.05;
  out << "criterion  7 " << (ok ? "PASS" : "FAIL") << "  ablation stability: span "
      << fmt("%.4f", span) << (c.quick ? " [quick: measured only, gate waived]" : " (gate 0.05)")
      << "\n";
  return ok;
}

// 8. Parser and metrics: the documented example plus a 30-case suite, and the
//    AVG arithmetic over the ten published per-category rates prints 78.57.
bool crit8(Ctx&, std::ostream& out) {
  struct Case {
    const char* text;
    char want;  // 0 = no parse
  };
  static const Case cases[] = {
      {"A. Surgical resection", 'A'},
      {"b) lobular carcinoma", 'B'},
      {"C", 'C'},
      {"d", 'D'},
      {"A. ", 'A'},
      {"B)", 'B'},
      {"c surgical margin", 'C'},
      {"D\tnecrosis", 'D'},
      {"a.b", 'A'},
      {"B..", 'B'},
      {"C) ) extra", 'C'},
      {"d. keratin pearls", 'D'},
      {"A\n", 'A'},
      {"b\r\n", 'B'},
      {"", 0},
      {" A. leading space", 0},
      {"(A)", 0},
      {"answer: B", 0},
      {"A:", 0},
      {"B-cell", 0},
      {"AB", 0},
      {"A1", 0},
      {"E. out of range", 0},
      {"e)", 0},
      {"1. numeric", 0},
      {". A", 0},
      {"\xce\x94. delta", 0},
      {"\xff\xfe garbage", 0},
      {"aA", 0},
      {"Ba", 0},
  };
  int64_t failed = 0;
  for (const Case& k : cases) {
    const auto got = parse_choice(k.text);
    const bool ok = k.want == 0 ? !got.has_value() : (got.has_value() && *got == k.want);
    if (!ok) {
      ++failed;
      out << "    parser miss on \"" << k.text << "\"\n";
    }
  }

  // Ten per-category rates whose unweighted mean prints as 78.57.
  const int64_t correct[] = {8354, 6756, 7643, 8000, 7879, 7934, 7644, 7345, 8784, 8235};
  std::vector<TrainSample> samples;
  std::map<std::string, std::string> preds;
  int64_t uid = 0;
  for (int32_t cat = 0; cat < 10; ++cat) {
    for (int64_t i = 0; i < 10000; ++i) {
      TrainSample s;
      s.rec_id = "r" + std::to_string(uid++);
      s.marker_category = cat;
      s.gold = 'A';
      samples.push_back(s);
      preds[s.rec_id] = i < correct[cat] ? "A. yes" : "B. no";
    }
  }
  const EvalReport rep = score_predictions(samples, preds);
  const std::string avg = fmt("%.2f", 100.0 * rep.average);
  const bool ok = failed == 0 && avg == "78.57";
  out << "criterion  8 " << (ok ? "PASS" : "FAIL") << "  parser & metrics: " << (30 - failed)
      << "/30 parser cases, AVG over ten published rates prints " << avg << " (want 78.57)\n";
  return ok;
}

// 9. Determinism: identical (config, seed) -> bit-identical checkpoints and
//    reports, exercised twice end to end on a small corpus.
bool crit9(Ctx& c, std::ostream& out) {
  RunConfig base;
  base.d_h = 16;
  base.d_f = 8;
  base.heads = 2;
  base.n_cmp = 1;
  base.n_dec = 1;
  base.l_c = 4;
  base.context = 96;
  base.grid = 4;
  base.patch_px = 4;
  base.n_slides = 50;
  base.epochs = 1;
  base.pretrain_epochs = 2;
  base.accum_steps = 2;
  base.warmup_steps = 10;
  base.peak_lr = 1e-2;
  base.min_lr = 1e-3;

  uint64_t h0[2], h1[2], hm[2];
  std::string report[2];
  // Same directories both passes: an identical config (snapshots embed the
  // paths) must reproduce every artifact bit for bit after a wipe.
  for (int pass = 0; pass < 2; ++pass) {
    RunConfig cfg = base;
    const std::string dir = c.work + "/determinism";
    fs::remove_all(dir);
    cfg.data_dir = dir + "/data";
    cfg.ckpt_dir = dir + "/ckpt";
    generate_dataset(cfg);
    hm[pass] = hash_file(cfg.data_dir + "/manifest.tsv");
    const std::string tag = "determinism-pass" + std::to_string(pass);
    ensure_stage0(c, cfg, tag);
    ensure_stage1(c, cfg, tag);
    h0[pass] = checkpoint_hash(stage0_dir(cfg));
    h1[pass] = checkpoint_hash(stage1_dir(cfg));
    report[pass] = render_report(eval_with_checkpoint(cfg, stage1_dir(cfg)));
  }
  const bool ok = hm[0] == hm[1] && h0[0] == h0[1] && h1[0] == h1[1] && report[0] == report[1];
  out << "criterion  9 " << (ok ? "PASS" : "FAIL")
      << "  determinism: manifest/stage0/stage1 hashes and eval report "
      << (ok ? "bit-identical across two runs" : "DIFFER") << "\n";
  return ok;
}

// 10. Schedule and optimizer oracles at fixed tolerances.
bool crit10(Ctx&, std::ostream& out) {
  bool ok = true;

  const Schedule s{3e-4, 3e-5, 100, 400};
  ok = ok && lr_at(0, s) == 0.0;
  ok = ok && lr_at(100, s) == 3e-4;
  ok = ok && lr_at(250, s) == 3e-5 + (3e-4 - 3e-5) * 0.5;  // cos(pi/2) midpoint, exact

  {
    Tensor p = Tensor::from_vec({1}, {1.0}, true);
    p.grad()[0] = 1.0;
    AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, 0.0});
    opt.add_param("p", p);
    opt.step(0.1);
    ok = ok && std::abs(p.data()[0] - (1.0 - 0.1 * (1.0 / (1.0 + 1e-8)))) < 1e-12;
  }

  double acc_err = 0.0;
  {
    const std::vector<double> w0 = {0.3, -0.2, 0.5, 0.1, 0.4, -0.6, -0.1, 0.2, 0.05};
    const std::vector<std::vector<double>> xs = {
        {1.0, 0.5, -0.25}, {-0.75, 0.3, 0.9}, {0.2, -1.1, 0.4}, {0.6, 0.6, -0.3}};
    Tensor wa = Tensor::from_vec({3, 3}, w0, true);
    AdamW oa(AdamWConfig{0.9, 0.999, 1e-8, 0.05});
    oa.add_param("w", wa);
    for (const auto& row : xs) {
      TapeScope scope;
      Tensor y = matmul(Tensor::from_vec({1, 3}, row), wa);
      scope.backward(scale(sum(mul(y, y)), 0.25));
    }
    oa.step(0.01);

    Tensor wb = Tensor::from_vec({3, 3}, w0, true);
    AdamW ob(AdamWConfig{0.9, 0.999, 1e-8, 0.05});
    ob.add_param("w", wb);
    {
      std::vector<double> flat;
      for (const auto& row : xs) flat.insert(flat.end(), row.begin(), row.end());
      TapeScope scope;
      Tensor y = matmul(Tensor::from_vec({4, 3}, flat), wb);
      scope.backward(scale(sum(mul(y, y)), 0.25));
    }
    ob.step(0.01);
    for (int64_t i = 0; i < 9; ++i) acc_err = std::max(acc_err, std::abs(wa.data()[i] - wb.data()[i]));
    ok = ok && acc_err <= 1e-10;
  }
  out << "criterion 10 " << (ok ? "PASS" : "FAIL")
      << "  schedule/optimizer oracles: lr landmarks exact, adamw step within 1e-12, "
         "accumulation divergence "
      << fmt("%.3g", acc_err) << " (gate 1e-10)\n";
  return ok;
}

// S1. Doubling l_WSI (64 -> 128, the regime where generation cost dominates,
//     matching the large-model setting of a deep decoder behind a shallow
//     fusion stack) lowers full-forward inference throughput while tcp
//     inference changes by < 25%. Timing takes the best batch mean so
//     scheduler interference cannot inflate one side of the pair.
bool supp1(Ctx& c, std::ostream& out) {
  const int batches = c.quick ? 3 : 5;
  const int per_batch = c.quick ? 3 : 6;
  const auto sample_secs = [&](const char* kind, int64_t l_wsi) {
    RunConfig cfg;  // desk widths; corpus fields unused by in-memory probing
    cfg.context = 512;
    cfg.baseline = kind;
    const BaselineKind bk = parse_baseline(kind);
    ModelBundle b = make_bundle(cfg, 90);
    LoadedDataset d = bench_split(l_wsi, cfg.d_f, 1, 90);
    const Tensor& feats = d.features[0];
    const std::vector<int32_t>& prompt = d.train[0].prompt_ids;
    GenerationSettings gs;  // 16 new tokens: decoder-dominated, like the target regime
    const auto once = [&] {
      const Tensor prefix = visual_prefix(b, bk, feats, prompt);
      generate(b.decoder, prefix, prompt, gs);
    };
    once();  // warmup
    double best = 1e300;
    for (int bt = 0; bt < batches; ++bt) {
      const double t0 = now_seconds();
      for (int i = 0; i < per_batch; ++i) once();
      best = std::min(best, (now_seconds() - t0) / per_batch);
    }
    return best;
  };
  const double tcp_small = sample_secs("tcp", 64), tcp_large = sample_secs("tcp", 128);
  const double ff_small = sample_secs("full-forward", 64), ff_large = sample_secs("full-forward", 128);
  const double change = std::abs(tcp_large - tcp_small) / tcp_small;
  const bool ok = ff_large > ff_small && change < 0.25;
  out << "supplement S1 " << (ok ? "PASS" : "FAIL") << "  doubling l_WSI 64->128: tcp "
      << fmt("%.4f", tcp_small) << "s -> " << fmt("%.4f", tcp_large) << "s per sample ("
      << fmt("%.1f", 100.0 * change) << "% change, gate < 25%), full-forward "
      << fmt("%.4f", ff_small) << "s -> " << fmt("%.4f", ff_large) << "s (slower as required)\n";
  return ok;
}

// S2. On a trained desk model, compressed token states sit tighter than the
//     projected visual tokens: mean pairwise distance in hc < in hv.
bool supp2(Ctx& c, std::ostream& out) {
  if (c.quick) {
    out << "supplement S2 SKIP  compression tightening needs a converged desk model\n";
    return true;
  }
  SeedRun& r = ensure_seed_run(c, 42, out);
  const Vocabulary v = load_vocab(r.cfg);
  const LoadedDataset data = load_dataset(r.cfg, v);
  ModelBundle b = make_bundle(r.cfg, v.size());
  load_checkpoint(stage1_dir(r.cfg), b);
  const TrainSample& s = data.test.front();
  const TokenStates ts = token_states(b, data.features[s.slide_index], s.prompt_ids);
  const double dv = mean_pairwise_distance(ts.hv);
  const double dc = mean_pairwise_distance(ts.hc);
  const bool ok = dc < dv;
  out << "supplement S2 " << (ok ? "PASS" : "FAIL")
      << "  compression tightening: mean pairwise distance hc " << fmt("%.4f", dc) << " vs hv "
      << fmt("%.4f", dv) << "\n";
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance gate: ten criteria plus two supplementary measurements"};
  std::string work = (fs::temp_directory_path() / "tcvqa_accept").string();
  std::string only;
  bool quick = false, reuse = false;
  app.add_option("--workdir", work, "artifact directory (corpora, checkpoints, logs)");
  app.add_option("--only", only, "comma-separated subset, e.g. 1,4,7 or s1,s2");
  app.add_flag("--quick", quick, "small corpora, convergence gates waived (smoke, not the gate)");
  app.add_flag("--reuse", reuse, "keep existing artifacts (skips wipe and repeats no training)");
  CLI11_PARSE(app, argc, argv);

  Ctx ctx;
  ctx.work = work;
  ctx.quick = quick;
  if (!reuse) fs::remove_all(work);
  fs::create_directories(work);

  struct Check {
    std::string id;
    std::function<bool(Ctx&, std::ostream&)> run;
  };
  const std::vector<Check> checks = {
      {"1", crit1}, {"2", crit2}, {"3", crit3}, {"4", crit4},   {"5", crit5},   {"6", crit6},
      {"7", crit7}, {"8", crit8}, {"9", crit9}, {"10", crit10}, {"s1", supp1},  {"s2", supp2},
  };
  std::set<std::string> wanted;
  if (!only.empty()) {
    size_t start = 0;
    while (start <= only.size()) {
      const size_t comma = only.find(',', start);
      std::string tok = only.substr(start, (comma == std::string::npos ? only.size() : comma) - start);
      start = comma == std::string::npos ? only.size() + 1 : comma + 1;
      for (char& ch : tok) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (!tok.empty()) wanted.insert(tok);
    }
  }

  int failed = 0, ran = 0;
  const double t0 = now_seconds();
  for (const Check& check : checks) {
    if (!wanted.empty() && !wanted.count(check.id)) continue;
    ++ran;
    bool ok = false;
    try {
      ok = check.run(ctx, std::cout);
    } catch (const std::exception& e) {
      std::cout << "criterion " << check.id << " FAIL  threw: " << e.what() << "\n";
    }
    if (!ok) ++failed;
  }
  std::cout << "acceptance: " << (ran - failed) << "/" << ran << " passed in "
            << fmt("%.1f", now_seconds() - t0) << "s"
            << (quick ? " [quick mode is a smoke run, not the gate]" : "") << "\n";
  return failed;
}
