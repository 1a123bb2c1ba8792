#include "tcvqa/config.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <string_view>
#include <vector>

#include "tcvqa/common.hpp"
#include "tcvqa/serialize.hpp"

namespace tcv {

namespace {

enum class FieldKind { i64, u64, f64, str };

struct FieldDef {
  const char* key;
  FieldKind kind;
  int64_t RunConfig::*i = nullptr;
  uint64_t RunConfig::*u = nullptr;
  double RunConfig::*d = nullptr;
  std::string RunConfig::*s = nullptr;
};

FieldDef int_field(const char* key, int64_t RunConfig::*p) { return {key, FieldKind::i64, p}; }
FieldDef u64_field(const char* key, uint64_t RunConfig::*p) {
  return {key, FieldKind::u64, nullptr, p};
}
FieldDef dbl_field(const char* key, double RunConfig::*p) {
  return {key, FieldKind::f64, nullptr, nullptr, p};
}
FieldDef str_field(const char* key, std::string RunConfig::*p) {
  return {key, FieldKind::str, nullptr, nullptr, nullptr, p};
}

const std::vector<FieldDef>& fields() {
  static const std::vector<FieldDef> defs = {
      int_field("d_h", &RunConfig::d_h),
      int_field("d_f", &RunConfig::d_f),
      int_field("heads", &RunConfig::heads),
      int_field("n_cmp", &RunConfig::n_cmp),
      int_field("n_dec", &RunConfig::n_dec),
      int_field("l_c", &RunConfig::l_c),
      int_field("context", &RunConfig::context),
      int_field("max_new_tokens", &RunConfig::max_new_tokens),
      int_field("init_layers", &RunConfig::init_layers),
      int_field("grid", &RunConfig::grid),
      int_field("patch_px", &RunConfig::patch_px),
      int_field("n_slides", &RunConfig::n_slides),
      dbl_field("marker_rarity", &RunConfig::marker_rarity),
      dbl_field("peak_lr", &RunConfig::peak_lr),
      dbl_field("min_lr", &RunConfig::min_lr),
      dbl_field("weight_decay", &RunConfig::weight_decay),
      int_field("warmup_steps", &RunConfig::warmup_steps),
      int_field("total_steps", &RunConfig::total_steps),
      int_field("accum_steps", &RunConfig::accum_steps),
      int_field("epochs", &RunConfig::epochs),
      int_field("pretrain_epochs", &RunConfig::pretrain_epochs),
      u64_field("seed", &RunConfig::seed),
      str_field("baseline", &RunConfig::baseline),
      str_field("data_dir", &RunConfig::data_dir),
      str_field("ckpt_dir", &RunConfig::ckpt_dir),
      str_field("vocab", &RunConfig::vocab),
  };
  return defs;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string line_tag(int64_t lineno) { return "line " + std::to_string(lineno) + ": "; }

void assign(RunConfig& cfg, const FieldDef& f, std::string_view value, int64_t lineno) {
  const char* b = value.data();
  const char* e = value.data() + value.size();
  switch (f.kind) {
    case FieldKind::i64: {
      int64_t v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e)
        throw config_error(line_tag(lineno) + "key \"" + f.key + "\" expects an integer, got \"" +
                           std::string(value) + "\"");
      cfg.*(f.i) = v;
      return;
    }
    case FieldKind::u64: {
      uint64_t v = 0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e)
        throw config_error(line_tag(lineno) + "key \"" + f.key +
                           "\" expects an unsigned integer, got \"" + std::string(value) + "\"");
      cfg.*(f.u) = v;
      return;
    }
    case FieldKind::f64: {
      double v = 0.0;
      auto [p, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || p != e)
        throw config_error(line_tag(lineno) + "key \"" + f.key + "\" expects a number, got \"" +
                           std::string(value) + "\"");
      cfg.*(f.d) = v;
      return;
    }
    case FieldKind::str:
      cfg.*(f.s) = std::string(value);
      return;
  }
}

std::string render_double(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), p);
}

std::string render_value(const RunConfig& cfg, const FieldDef& f) {
  switch (f.kind) {
    case FieldKind::i64: return std::to_string(cfg.*(f.i));
    case FieldKind::u64: return std::to_string(cfg.*(f.u));
    case FieldKind::f64: return render_double(cfg.*(f.d));
    case FieldKind::str: return cfg.*(f.s);
  }
  return {};
}

}  // namespace

BaselineKind parse_baseline(const std::string& name) {
  if (name == "tcp") return BaselineKind::tcp;
  if (name == "full-forward") return BaselineKind::full_forward;
  if (name == "prune-k") return BaselineKind::prune_k;
  if (name == "mil-pool") return BaselineKind::mil_pool;
  throw config_error("unknown baseline \"" + name +
                     "\" (expected tcp, full-forward, prune-k, or mil-pool)");
}

const std::string& baseline_name(BaselineKind kind) {
  static const std::array<std::string, 4> names = {"tcp", "full-forward", "prune-k", "mil-pool"};
  return names[static_cast<size_t>(kind)];
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const FieldDef& f : fields()) {
    if (key == f.key) {
      assign(cfg, f, trim(value), 0);
      return;
    }
  }
  throw config_error("unknown key \"" + key + "\"");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const FieldDef& f : fields()) k.emplace_back(f.key);
    return k;
  }();
  return keys;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  int64_t lineno = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = text.find('\n', pos);
    std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++lineno;

    const size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw config_error(line_tag(lineno) + "expected \"key = value\", got \"" + std::string(line) +
                         "\"");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));

    bool matched = false;
    for (const FieldDef& f : fields()) {
      if (key == f.key) {
        assign(cfg, f, value, lineno);
        matched = true;
        break;
      }
    }
    if (!matched) throw config_error(line_tag(lineno) + "unknown key \"" + key + "\"");
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  try {
    return parse_config(read_text_file(path));
  } catch (const config_error& e) {
    throw config_error(path + ": " + e.what());
  }
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  for (const FieldDef& f : fields()) {
    out += f.key;
    out += " = ";
    out += render_value(cfg, f);
    out += "\n";
  }
  return out;
}

void validate_config(const RunConfig& cfg) {
  if (cfg.d_h < 1 || cfg.d_f < 1) throw config_error("widths must be positive");
  if (cfg.heads < 1 || cfg.d_h % cfg.heads != 0)
    throw config_error("heads must divide d_h (" + std::to_string(cfg.heads) + " vs " +
                       std::to_string(cfg.d_h) + ")");
  if (cfg.n_cmp < 0 || cfg.n_dec < 1) throw config_error("layer counts out of range");
  if (cfg.l_c < 1) throw config_error("l_c must be positive");
  if (cfg.context < 2) throw config_error("context must be at least 2");
  if (cfg.max_new_tokens < 1) throw config_error("max_new_tokens must be positive");
  if (cfg.init_layers < -1 || cfg.init_layers > cfg.n_cmp)
    throw config_error("init_layers must lie in [-1, n_cmp]");
  if (cfg.grid < 2 || cfg.patch_px < 2) throw config_error("grid and patch_px must be at least 2");
  if (cfg.n_slides < 10) throw config_error("n_slides must be at least 10");
  if (!(cfg.marker_rarity > 0.0) || cfg.marker_rarity > 0.1)
    throw config_error("marker_rarity must lie in (0, 0.1]");
  if (!(cfg.peak_lr > 0.0) || cfg.min_lr < 0.0 || cfg.min_lr > cfg.peak_lr)
    throw config_error("learning rates must satisfy 0 <= min_lr <= peak_lr, peak_lr > 0");
  if (cfg.weight_decay < 0.0) throw config_error("weight_decay must be non-negative");
  if (cfg.warmup_steps < 0 || cfg.total_steps < 0 || cfg.accum_steps < 1)
    throw config_error("schedule fields out of range");
  if (cfg.epochs < 1 || cfg.pretrain_epochs < 1) throw config_error("epochs must be positive");
  parse_baseline(cfg.baseline);
  if (cfg.data_dir.empty()) throw config_error("data_dir must be set");
}

std::string vocab_path(const RunConfig& cfg) {
  return cfg.vocab.empty() ? cfg.data_dir + "/vocab.txt" : cfg.vocab;
}

}  // namespace tcv
