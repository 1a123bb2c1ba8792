#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tcvqa/trainer.hpp"

using namespace tcv;

namespace {

// One small corpus shared by the cases below; generated once per test run.
RunConfig shared_cfg() {
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
  cfg.peak_lr = 1e-2;
  cfg.min_lr = 1e-3;
  cfg.warmup_steps = 10;
  cfg.accum_steps = 2;
  cfg.epochs = 4;
  cfg.pretrain_epochs = 8;
  cfg.seed = 42;
  cfg.data_dir =
      (std::filesystem::temp_directory_path() / "tcvqa_test" / "trainer_data").string();
  cfg.ckpt_dir = "";  // cases that checkpoint pick their own directory
  return cfg;
}

struct SharedData {
  Vocabulary vocab;
  LoadedDataset data;
};

const SharedData& shared() {
  static SharedData s = [] {
    RunConfig cfg = shared_cfg();
    std::filesystem::remove_all(cfg.data_dir);
    generate_dataset(cfg);
    Vocabulary v = load_vocab(cfg);
    LoadedDataset d = load_dataset(cfg, v);
    return SharedData{std::move(v), std::move(d)};
  }();
  return s;
}

std::string fresh_ckpt(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / "tcvqa_test" / name;
  std::filesystem::remove_all(p);
  return p.string();
}

std::vector<uint64_t> all_group_hashes(ModelBundle& b) {
  std::vector<uint64_t> out;
  for (const std::string& g : bundle_group_names()) out.push_back(group_hash(b, g));
  return out;
}

}  // namespace

// ===== schedule =====

TEST_CASE("warmup and cosine decay hit their landmark values exactly") {
  Schedule s{3e-4, 3e-5, 100, 400};
  CHECK(lr_at(0, s) == 0.0);
  CHECK(lr_at(100, s) == 3e-4);                           // ramp apex is peak itself
  CHECK(lr_at(250, s) == 3e-5 + (3e-4 - 3e-5) * 0.5);     // cosine midpoint
  CHECK(lr_at(400, s) == 3e-5);                           // decay floor
  CHECK(lr_at(1000, s) == 3e-5);                          // clamps past the end
  CHECK(lr_at(50, s) == doctest::Approx(1.5e-4).epsilon(1e-12));
  double prev = lr_at(100, s);
  for (int64_t step = 110; step <= 400; step += 10) {
    double cur = lr_at(step, s);
    CHECK(cur <= prev);
    prev = cur;
  }
  Schedule no_warmup{5e-3, 0.0, 0, 10};
  CHECK(lr_at(0, no_warmup) == 5e-3);
}

TEST_CASE("schedule rejects inconsistent shapes and negative steps") {
  CHECK_THROWS_AS(lr_at(0, Schedule{3e-4, 3e-5, 10, 10}), config_error);
  CHECK_THROWS_AS(lr_at(0, Schedule{3e-4, 3e-5, 10, 5}), config_error);
  CHECK_THROWS_AS(lr_at(0, Schedule{1e-4, 2e-4, 0, 10}), config_error);
  CHECK_THROWS_AS(lr_at(0, Schedule{-1e-4, 0.0, 0, 10}), config_error);
  CHECK_THROWS_AS(lr_at(-1, Schedule{3e-4, 0.0, 0, 10}), contract_error);
}

// ===== optimizer =====

TEST_CASE("first adamw step matches the closed form") {
  Tensor p = Tensor::from_vec({1}, {1.0}, true);
  p.grad()[0] = 1.0;
  AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, 0.0});
  opt.add_param("p", p);
  opt.step(0.1);
  // Bias correction makes m_hat = v_hat = 1 at t=1, so the update is
  // lr * g / (|g| + eps) independent of the betas.
  const double expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
  CHECK(std::abs(p.data()[0] - expected) < 1e-15);
  CHECK(std::abs(p.data()[0] - 0.9) < 1e-8);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("weight decay is decoupled from the gradient path") {
  Tensor p = Tensor::from_vec({1}, {1.0}, true);
  p.grad()[0] = 0.0;  // pure-decay step
  AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, 0.1});
  opt.add_param("p", p);
  opt.step(0.1);
  CHECK(std::abs(p.data()[0] - (1.0 - 0.1 * 0.1)) < 1e-15);
}

TEST_CASE("optimizer state covers exactly the registered parameters") {
  Tensor a = Tensor::zeros({3, 4}, true);
  Tensor b = Tensor::zeros({5}, true);
  AdamW opt;
  opt.add_param("a", a);
  opt.add_param("b", b);
  CHECK(opt.n_slots() == 2);
  CHECK(opt.n_scalars() == 2 * (12 + 5));
  CHECK(opt.slots()[0].name == "a");

  CHECK_THROWS_AS(opt.add_param("a", a), contract_error);
  Tensor frozen = Tensor::zeros({2});
  CHECK_THROWS_AS(opt.add_param("f", frozen), contract_error);

  Tensor c = Tensor::zeros({2}, true);  // registered but never given a gradient
  opt.add_param("c", c);
  a.grad()[0] = 1.0;
  b.grad()[0] = 1.0;
  CHECK_THROWS_WITH_AS(opt.step(0.1), doctest::Contains("c"), contract_error);
}

TEST_CASE("zero_grad clears accumulated gradients") {
  Tensor a = Tensor::zeros({4}, true);
  AdamW opt;
  opt.add_param("a", a);
  for (int64_t i = 0; i < 4; ++i) a.grad()[i] = 2.0;
  opt.step(0.01);
  opt.zero_grad();
  for (int64_t i = 0; i < 4; ++i) CHECK(a.grad()[i] == 0.0);
}

TEST_CASE("four accumulated micro-batches match one batched step") {
  std::vector<double> w0 = {0.3, -0.2, 0.5, 0.1, 0.4, -0.6, -0.1, 0.2, 0.05};
  std::vector<std::vector<double>> xs = {
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

  for (int64_t i = 0; i < 9; ++i) CHECK(std::abs(wa.data()[i] - wb.data()[i]) <= 1e-10);
  for (int64_t i = 0; i < 9; ++i) {
    CHECK(std::abs(oa.slots()[0].m[i] - ob.slots()[0].m[i]) <= 1e-10);
    CHECK(std::abs(oa.slots()[0].v[i] - ob.slots()[0].v[i]) <= 1e-10);
  }
}

// ===== freeze masks =====

TEST_CASE("stage masks expose the contracted trainable groups") {
  CHECK(stage0_mask().trainable == std::set<std::string>{"decoder"});
  CHECK(stage1_mask(BaselineKind::tcp).trainable ==
        std::set<std::string>{"projector", "bank", "stack"});
  CHECK(stage1_mask(BaselineKind::full_forward).trainable == std::set<std::string>{"projector"});
  CHECK(stage1_mask(BaselineKind::prune_k).trainable == std::set<std::string>{"projector"});
  CHECK(stage1_mask(BaselineKind::mil_pool).trainable ==
        std::set<std::string>{"projector", "mil"});
  CHECK(stage0_mask().is_trainable("decoder"));
  CHECK_FALSE(stage0_mask().is_trainable("encoder"));
}

TEST_CASE("frozen groups survive one hundred optimizer steps untouched") {
  RunConfig cfg = shared_cfg();
  ModelBundle b = make_bundle(cfg, 40);
  const uint64_t enc0 = group_hash(b, "encoder");
  const uint64_t dec0 = group_hash(b, "decoder");
  const uint64_t mil0 = group_hash(b, "mil");
  const uint64_t proj0 = group_hash(b, "projector");

  auto params = trainable_params(b, stage1_mask(BaselineKind::tcp));
  CHECK(params.size() == 2 + 1 + 14);
  CHECK(params[0].first == "projector.weight");
  AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, 0.01});
  for (auto& [name, t] : params) opt.add_param(name, t);
  for (int step = 0; step < 100; ++step) {
    for (auto& [name, t] : params)
      for (double& g : t.grad()) g = 0.01;
    opt.step(1e-3);
    opt.zero_grad();
  }
  CHECK(group_hash(b, "encoder") == enc0);
  CHECK(group_hash(b, "decoder") == dec0);
  CHECK(group_hash(b, "mil") == mil0);
  CHECK(group_hash(b, "projector") != proj0);

  auto stage0 = trainable_params(b, stage0_mask());
  CHECK(stage0.size() == 16);
  CHECK(stage0[0].first == "decoder.tok_table");
}

// ===== dataset pipeline =====

TEST_CASE("generated dataset loads back with verifiable features and splits") {
  const SharedData& s = shared();
  const RunConfig cfg = shared_cfg();
  CHECK(s.data.manifest.slides.size() == 12);
  CHECK(s.data.features.size() == 12);
  CHECK(s.data.train.size() == 36);  // every category too small to split off val/test
  CHECK(s.data.val.empty());
  CHECK(s.data.test.empty());

  // Features on disk must equal a from-scratch regeneration of slide 0.
  DatasetPlan plan;
  plan.n_slides = cfg.n_slides;
  plan.grid_rows = cfg.grid;
  plan.grid_cols = cfg.grid;
  plan.patch_px = cfg.patch_px;
  plan.marker_rarity = cfg.marker_rarity;
  plan.seed = cfg.seed;
  SlideSpec spec = plan_slide_spec(plan, 0);
  GeneratedSlide slide = generate_slide(spec);
  FrozenVisualEncoder enc(3 * cfg.patch_px * cfg.patch_px, cfg.d_f,
                          derive_seed(cfg.seed, 0xe0c0de));
  Tensor expect = enc.encode_patches(slide.patches);
  size_t idx = 0;
  while (s.data.manifest.slides[idx].meta.slide_id != spec.slide_id) ++idx;
  const Tensor& got = s.data.features[idx];
  REQUIRE(got.shape() == expect.shape());
  for (int64_t i = 0; i < got.numel(); ++i) CHECK(got.data()[i] == expect.data()[i]);

  for (const TrainSample& t : s.data.train) {
    CHECK(t.prompt_ids.front() == Vocabulary::kBos);
    CHECK(t.answer_ids.back() == Vocabulary::kEos);
    CHECK(t.answer_ids.size() >= 3);
    CHECK(t.marker_category >= 0);
    CHECK(t.marker_category < kNumCategories);
    CHECK((t.gold >= 'A' && t.gold <= 'D'));
    CHECK(t.slide_index >= 0);
    CHECK(t.slide_index < 12);
    for (int32_t id : t.prompt_ids) CHECK(id != Vocabulary::kUnk);
    for (int32_t id : t.answer_ids) CHECK(id != Vocabulary::kUnk);
    CHECK_FALSE(t.rec_id.empty());
  }
}

TEST_CASE("checkpoint directories are derived from config") {
  RunConfig cfg = shared_cfg();
  cfg.ckpt_dir = "/runs/x";
  cfg.baseline = "mil-pool";
  CHECK(stage0_dir(cfg) == "/runs/x/stage0");
  CHECK(stage1_dir(cfg) == "/runs/x/stage1-mil-pool");
  cfg.baseline = "tcp";
  CHECK(stage1_dir(cfg) == "/runs/x/stage1-tcp");
}

// ===== training loops =====

TEST_CASE("language pretraining fits the answer-line corpus") {
  const SharedData& s = shared();
  RunConfig cfg = shared_cfg();
  cfg.ckpt_dir = fresh_ckpt("trainer_stage0");
  ModelBundle b = make_bundle(cfg, s.vocab.size());
  const uint64_t enc0 = group_hash(b, "encoder");
  const uint64_t proj0 = group_hash(b, "projector");
  const double init_loss = mean_line_loss(b, s.data.train);
  CHECK(init_loss == doctest::Approx(std::log(double(s.vocab.size()))).epsilon(0.05));

  std::ostringstream metrics;
  TrainStats stats = pretrain_lm(b, s.data, &metrics);
  CHECK(stats.optimizer_steps == 144);  // 8 epochs * ceil(36 / 2)
  CHECK(stats.last_window_mean < stats.first_window_mean);

  const double fit_loss = mean_line_loss(b, s.data.train);
  CHECK(fit_loss < 0.7 * init_loss);
  CHECK(group_hash(b, "encoder") == enc0);     // stage 0 trains the decoder only
  CHECK(group_hash(b, "projector") == proj0);
  CHECK(checkpoint_exists(stage0_dir(cfg)));

  // Metrics stream: one line per optimizer step, four tab-separated fields.
  std::istringstream in(metrics.str());
  std::string line;
  long long expect_step = 1;
  while (std::getline(in, line)) {
    long long step = 0;
    double loss = 0.0, lr = 0.0, sps = 0.0;
    REQUIRE(std::sscanf(line.c_str(), "%lld\t%lf\t%lf\t%lf", &step, &loss, &lr, &sps) == 4);
    CHECK(step == expect_step);
    CHECK(loss > 0.0);
    CHECK(lr >= 0.0);
    CHECK(sps > 0.0);
    if (expect_step == 1) CHECK(loss == doctest::Approx(init_loss).epsilon(0.1));
    ++expect_step;
  }
  CHECK(expect_step - 1 == stats.optimizer_steps);
}

TEST_CASE("visual stage trains only its mask and reruns bit-identically") {
  const SharedData& s = shared();
  RunConfig cfg = shared_cfg();
  cfg.ckpt_dir = fresh_ckpt("trainer_stage1");
  ModelBundle b = make_bundle(cfg, s.vocab.size());
  auto before = all_group_hashes(b);

  TrainStats stats = train_vqa(b, s.data, nullptr);
  CHECK(stats.optimizer_steps == 72);  // 4 epochs * ceil(36 / 2)
  auto after = all_group_hashes(b);
  const auto& groups = bundle_group_names();
  for (size_t i = 0; i < groups.size(); ++i) {
    const bool trained = stage1_mask(BaselineKind::tcp).is_trainable(groups[i]);
    if (trained)
      CHECK(after[i] != before[i]);
    else
      CHECK(after[i] == before[i]);
  }
  REQUIRE(checkpoint_exists(stage1_dir(cfg)));
  const uint64_t h1 = checkpoint_hash(stage1_dir(cfg));

  ModelBundle b2 = make_bundle(cfg, s.vocab.size());
  train_vqa(b2, s.data, nullptr);
  CHECK(checkpoint_hash(stage1_dir(cfg)) == h1);
  for (const std::string& g : groups) CHECK(group_hash(b2, g) == group_hash(b, g));
}

TEST_CASE("every visual path trains through the loop with a frozen decoder") {
  const SharedData& s = shared();
  for (const char* name : {"full-forward", "prune-k", "mil-pool"}) {
    CAPTURE(name);
    RunConfig cfg = shared_cfg();
    cfg.baseline = name;
    cfg.epochs = 1;
    cfg.ckpt_dir = fresh_ckpt(std::string("trainer_") + name);
    ModelBundle b = make_bundle(cfg, s.vocab.size());
    auto before = all_group_hashes(b);
    TrainStats stats = train_vqa(b, s.data, nullptr);
    CHECK(stats.optimizer_steps == 18);
    auto after = all_group_hashes(b);
    const auto& groups = bundle_group_names();
    const FreezeMask mask = stage1_mask(parse_baseline(name));
    for (size_t i = 0; i < groups.size(); ++i) {
      if (mask.is_trainable(groups[i]))
        CHECK(after[i] != before[i]);
      else
        CHECK(after[i] == before[i]);
    }
    CHECK(checkpoint_exists(stage1_dir(cfg)));
  }
}

TEST_CASE("empty sample sets are rejected") {
  const SharedData& s = shared();
  RunConfig cfg = shared_cfg();
  ModelBundle b = make_bundle(cfg, s.vocab.size());
  CHECK_THROWS_AS(mean_line_loss(b, s.data.val), eval_error);
}
