#include "tcvqa/cli.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tcvqa/bundle.hpp"
#include "tcvqa/common.hpp"
#include "tcvqa/config.hpp"
#include "tcvqa/eval.hpp"
#include "tcvqa/serialize.hpp"
#include "tcvqa/trainer.hpp"

namespace tcv {
namespace {

// Wrong invocation shape (bad flag, bad list syntax) -> exit 1. Everything the
// pipeline itself throws (config / format / shape / eval errors) -> exit 2.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

bool is_config_key(const std::string& key) {
  for (const std::string& k : config_keys())
    if (k == key) return true;
  return false;
}

// --config file first, then "--key value" / "--key=value" pairs in order.
RunConfig build_config(const std::string& config_path, const std::vector<std::string>& extras) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = load_config_file(config_path);
  for (size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.size() <= 2 || tok.rfind("--", 0) != 0)
      throw UsageError("expected --<key> <value>, got \"" + tok + "\"");
    std::string key = tok.substr(2);
    std::string value;
    if (const size_t eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw UsageError("flag --" + key + " needs a value");
      value = extras[++i];
    }
    if (!is_config_key(key)) throw UsageError("unknown flag --" + key);
    apply_override(cfg, key, value);
  }
  return cfg;
}

std::vector<int64_t> parse_lc_list(const std::string& csv) {
  std::vector<int64_t> out;
  size_t start = 0;
  while (start <= csv.size()) {
    const size_t comma = csv.find(',', start);
    const std::string item = csv.substr(start, (comma == std::string::npos ? csv.size() : comma) - start);
    start = comma == std::string::npos ? csv.size() + 1 : comma + 1;
    int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size() || v <= 0)
      throw UsageError("--lc wants positive integers like 4,16,64; got \"" + item + "\"");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--lc needs at least one value");
  return out;
}

std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt4(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// ===== subcommand bodies =====

int run_gen_data(const RunConfig& cfg, std::ostream& out) {
  validate_config(cfg);
  const Manifest m = generate_dataset(cfg);
  int64_t n_train = 0, n_val = 0, n_test = 0;
  for (const VQARecord& r : m.records) {
    if (r.split == "train") ++n_train;
    else if (r.split == "val") ++n_val;
    else ++n_test;
  }
  out << "wrote " << cfg.data_dir << ": " << m.slides.size() << " slides, " << m.records.size()
      << " records (" << n_train << " train / " << n_val << " val / " << n_test << " test)\n";
  out << "slides-hash " << hex64(hash_file(cfg.data_dir + "/slides.tsv")) << "\n";
  out << "manifest-hash " << hex64(hash_file(cfg.data_dir + "/manifest.tsv")) << "\n";
  out << "vocab-hash " << hex64(hash_file(vocab_path(cfg))) << "\n";
  return 0;
}

int run_pretrain(const RunConfig& cfg, std::ostream& out) {
  validate_config(cfg);
  const Vocabulary v = load_vocab(cfg);
  const LoadedDataset data = load_dataset(cfg, v);
  ModelBundle b = make_bundle(cfg, v.size());
  const TrainStats st = pretrain_lm(b, data, &out);
  out << "stage0 done: " << st.optimizer_steps << " steps, window loss "
      << fmt4(st.first_window_mean) << " -> " << fmt4(st.last_window_mean) << ", checkpoint "
      << stage0_dir(cfg) << "\n";
  return 0;
}

int run_train(const RunConfig& cfg, std::ostream& out) {
  validate_config(cfg);
  const std::string s0 = stage0_dir(cfg);
  if (!checkpoint_exists(s0))
    throw config_error("train: stage-0 checkpoint not found at " + s0 +
                       "/checkpoint.txt (run pretrain-lm first)");
  const Vocabulary v = load_vocab(cfg);
  const LoadedDataset data = load_dataset(cfg, v);
  ModelBundle b = make_bundle(cfg, v.size());
  load_checkpoint(s0, b);
  const TrainStats st = train_vqa(b, data, &out);
  out << "stage1 done (" << cfg.baseline << "): " << st.optimizer_steps << " steps, window loss "
      << fmt4(st.first_window_mean) << " -> " << fmt4(st.last_window_mean) << ", checkpoint "
      << stage1_dir(cfg) << "\n";
  return 0;
}

int run_eval(const RunConfig& cfg, std::ostream& out) {
  validate_config(cfg);
  out << render_report(run_baseline(cfg));
  return 0;
}

int run_bench(const RunConfig& cfg, int64_t warmup, std::ostream& out) {
  validate_config(cfg);
  const Vocabulary v = load_vocab(cfg);
  const LoadedDataset data = load_dataset(cfg, v);
  out << render_bench_report(cfg, bench_pair(cfg, v, data, warmup));
  return 0;
}

int run_ablate(const RunConfig& cfg, const std::string& lc_csv, std::ostream& out) {
  validate_config(cfg);
  const std::vector<int64_t> lcs = parse_lc_list(lc_csv);
  const std::vector<AblationRow> rows = ablate_lc(cfg, lcs, &out);
  for (const AblationRow& row : rows) out << "\nl_c " << row.l_c << "\n" << render_report(row.report);
  out << "\n" << render_ablation(rows);
  return 0;
}

int run_dump(const RunConfig& cfg, const std::string& out_prefix, std::ostream& out) {
  validate_config(cfg);
  if (parse_baseline(cfg.baseline) != BaselineKind::tcp)
    throw config_error("dump-hidden needs baseline = tcp (the states come from the fusion stack)");
  const Vocabulary v = load_vocab(cfg);
  const LoadedDataset data = load_dataset(cfg, v);
  ModelBundle b = make_bundle(cfg, v.size());
  load_checkpoint(stage1_dir(cfg), b);
  const std::vector<TrainSample>* split = !data.test.empty()  ? &data.test
                                          : !data.val.empty() ? &data.val
                                                              : &data.train;
  if (split->empty()) throw config_error("dump-hidden: dataset has no records");
  const TrainSample& s = split->front();
  const std::string prefix = out_prefix.empty() ? stage1_dir(cfg) + "/tokens" : out_prefix;
  if (const auto parent = std::filesystem::path(prefix).parent_path(); !parent.empty())
    std::filesystem::create_directories(parent);
  dump_token_states(b, data.features[s.slide_index], s.prompt_ids, prefix);
  const TokenStates ts = token_states(b, data.features[s.slide_index], s.prompt_ids);
  const auto spread = [](const Tensor& t) {
    return t.rows() >= 2 ? fmt4(mean_pairwise_distance(t)) : std::string("n/a");
  };
  out << "wrote " << prefix << ".{hv,ht,hc}.tcpf + labels for record " << s.rec_id << "\n";
  out << "hv " << ts.hv.rows() << " rows, mean pairwise distance " << spread(ts.hv) << "\n";
  out << "ht " << ts.ht.rows() << " rows, mean pairwise distance " << spread(ts.ht) << "\n";
  out << "hc " << ts.hc.rows() << " rows, mean pairwise distance " << spread(ts.hc) << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"token-compression VQA: synthetic slides, two-stage training, efficiency benches"};
  app.name("tcvqa");
  app.require_subcommand(1);

  std::string config_path;
  std::string lc_csv = "4,16,64,256";
  std::string dump_prefix;
  int64_t warmup = 5;

  const auto add = [&](const char* name, const char* desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "run-config file; --<key> <value> overrides follow");
    sub->allow_extras();
    return sub;
  };
  CLI::App* gen = add("gen-data", "write the synthetic slide corpus + vocab under data_dir");
  CLI::App* pre = add("pretrain-lm", "stage 0: language-model warmup of the decoder");
  CLI::App* trn = add("train", "stage 1: train the configured baseline (needs stage 0)");
  CLI::App* evl = add("eval", "score the test split with the stage-1 checkpoint");
  CLI::App* ben = add("bench", "tcp vs full-forward throughput + analytic FLOPs");
  CLI::App* abl = add("ablate", "stage-1 sweep over compression-token counts");
  CLI::App* dmp = add("dump-hidden", "export visual / text / compressed token states");
  ben->add_option("--warmup", warmup, "untimed leading samples per phase");
  abl->add_option("--lc", lc_csv, "comma-separated compression-token counts");
  dmp->add_option("--out", dump_prefix, "output path prefix (default <stage1 dir>/tokens)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen_data(build_config(config_path, gen->remaining()), out);
    if (pre->parsed()) return run_pretrain(build_config(config_path, pre->remaining()), out);
    if (trn->parsed()) return run_train(build_config(config_path, trn->remaining()), out);
    if (evl->parsed()) return run_eval(build_config(config_path, evl->remaining()), out);
    if (ben->parsed()) return run_bench(build_config(config_path, ben->remaining()), warmup, out);
    if (abl->parsed()) return run_ablate(build_config(config_path, abl->remaining()), lc_csv, out);
    if (dmp->parsed()) return run_dump(build_config(config_path, dmp->remaining()), dump_prefix, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << "usage error: no subcommand\n";
  return 1;
}

}  // namespace tcv
