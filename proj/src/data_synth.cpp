#include "tcvqa/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <numeric>

#include "tcvqa/rng.hpp"
#include "tcvqa/serialize.hpp"

namespace tcv {

namespace {

// Per-category texture: distinct base color plus a distinct luminance stripe
// frequency. Frequencies stay under the 8-cycle Nyquist limit of a 16px patch.
struct TextureSpec {
  double r, g, b;
};

constexpr TextureSpec kPalette[kNumCategories] = {
    {0.85, 0.80, 0.20}, {0.20, 0.70, 0.30}, {0.15, 0.55, 0.80}, {0.45, 0.25, 0.60},
    {0.80, 0.35, 0.25}, {0.70, 0.70, 0.70}, {0.25, 0.30, 0.75}, {0.80, 0.25, 0.55},
    {0.35, 0.65, 0.65}, {0.55, 0.45, 0.20},
};

constexpr double kStripeAmp = 0.12;
constexpr double kAccentAmp = 0.22;
constexpr double kNoiseSigma = 0.03;

double stripe_freq(int32_t cat) { return 1.0 + 0.7 * static_cast<double>(cat); }

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

void render_patch(Patch& p, int64_t patch_px, int32_t cat, bool marker, rng& r) {
  p.px = patch_px;
  p.category = cat;
  p.marker = marker;
  p.pixels.resize(static_cast<size_t>(patch_px * patch_px * 3));
  const TextureSpec& tex = kPalette[cat % kNumCategories];
  const double base[3] = {tex.r, tex.g, tex.b};
  const double freq = stripe_freq(cat);
  size_t idx = 0;
  for (int64_t py = 0; py < patch_px; ++py) {
    for (int64_t px = 0; px < patch_px; ++px) {
      const double stripe =
          kStripeAmp * std::cos(2.0 * std::numbers::pi * freq * (static_cast<double>(px) + 0.5) /
                                static_cast<double>(patch_px));
      const double accent = marker ? (((px / 4 + py / 4) % 2 == 0) ? kAccentAmp : -kAccentAmp) : 0.0;
      for (int64_t c = 0; c < 3; ++c) {
        p.pixels[idx++] = clamp01(base[c] + stripe + accent + kNoiseSigma * r.normal());
      }
    }
  }
}

// Integer quotas from weights: floor shares, remainder by largest fraction,
// then a strict majority enforced by transferring a cell if counts tie.
std::vector<int64_t> quota_counts(const std::vector<double>& weights, int64_t total) {
  const size_t n = weights.size();
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  std::vector<int64_t> counts(n, 0);
  std::vector<std::pair<double, size_t>> fracs;
  int64_t assigned = 0;
  for (size_t i = 0; i < n; ++i) {
    const double share = weights[i] / wsum * static_cast<double>(total);
    counts[i] = static_cast<int64_t>(std::floor(share));
    assigned += counts[i];
    fracs.emplace_back(share - std::floor(share), i);
  }
  std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int64_t k = 0; k < total - assigned; ++k) counts[fracs[static_cast<size_t>(k) % n].second] += 1;

  if (n > 1) {
    size_t top = 0, second = 1;
    if (counts[second] > counts[top]) std::swap(top, second);
    for (size_t i = 2; i < n; ++i) {
      if (counts[i] > counts[top]) {
        second = top;
        top = i;
      } else if (counts[i] > counts[second]) {
        second = i;
      }
    }
    if (counts[top] == counts[second] && counts[second] > 0) {
      counts[second] -= 1;
      counts[top] += 1;
    }
  }
  return counts;
}

std::string format_slide_id(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "slide_%05lld", static_cast<long long>(index));
  return buf;
}

void check_no_tabs(const std::string& field, const char* what) {
  if (field.find_first_of("\t\n\r") != std::string::npos) {
    throw format_error(std::string("write_dataset: ") + what + " contains a tab or newline: \"" +
                       field + "\"");
  }
}

std::vector<std::string> split_tsv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

int64_t parse_int(const std::string& s, const std::string& file, size_t lineno, const char* what) {
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw format_error(file + " line " + std::to_string(lineno) + ": bad " + what + " \"" + s + "\"");
  }
}

uint64_t parse_u64(const std::string& s, const std::string& file, size_t lineno, const char* what) {
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw format_error(file + " line " + std::to_string(lineno) + ": bad " + what + " \"" + s + "\"");
  }
}

bool valid_split(const std::string& s) { return s == "train" || s == "val" || s == "test"; }

}  // namespace

const std::array<std::string, kNumCategories>& category_names() {
  static const std::array<std::string, kNumCategories> names = {
      "adipose", "stromal",  "mucinous", "necrotic",  "serous",
      "keratin", "lymphoid", "vascular", "glandular", "spindle"};
  return names;
}

// ===== slide generation =====

GeneratedSlide generate_slide(const SlideSpec& spec) {
  const int64_t k_cats = static_cast<int64_t>(spec.background_mix.size());
  if (k_cats < 4) {
    throw config_error("generate_slide: need at least 4 categories for 4 choices, got " +
                       std::to_string(k_cats));
  }
  if (!(spec.marker_rarity > 0.0 && spec.marker_rarity <= 0.1)) {
    throw config_error("generate_slide: marker_rarity must be in (0, 0.1], got " +
                       std::to_string(spec.marker_rarity));
  }
  const int64_t cells = spec.grid_rows * spec.grid_cols;
  if (spec.grid_rows < 1 || spec.grid_cols < 1 || cells < 4) {
    throw config_error("generate_slide: grid must have at least 4 cells, got " +
                       std::to_string(spec.grid_rows) + "x" + std::to_string(spec.grid_cols));
  }
  if (spec.marker_category < 0 || spec.marker_category >= k_cats) {
    throw config_error("generate_slide: marker_category " + std::to_string(spec.marker_category) +
                       " outside [0, " + std::to_string(k_cats) + ")");
  }
  if (spec.patch_px < 2) {
    throw config_error("generate_slide: patch_px must be >= 2, got " + std::to_string(spec.patch_px));
  }

  rng r(spec.seed);

  // 1. marker cells: one Bernoulli draw per cell in row-major order
  std::vector<uint8_t> is_marker(static_cast<size_t>(cells), 0);
  int64_t marker_count = 0;
  for (int64_t i = 0; i < cells; ++i) {
    if (r.bernoulli(spec.marker_rarity)) {
      is_marker[static_cast<size_t>(i)] = 1;
      ++marker_count;
    }
  }
  if (marker_count == 0) {
    is_marker[r.below(static_cast<uint64_t>(cells))] = 1;
    marker_count = 1;
  }

  // 2. background categories by quota, shuffled into the non-marker cells
  const int64_t n_bg = cells - marker_count;
  std::vector<int64_t> counts = quota_counts(spec.background_mix, n_bg);
  std::vector<int32_t> bg_cats;
  bg_cats.reserve(static_cast<size_t>(n_bg));
  for (size_t c = 0; c < counts.size(); ++c) {
    for (int64_t k = 0; k < counts[c]; ++k) bg_cats.push_back(static_cast<int32_t>(c));
  }
  for (size_t i = bg_cats.size(); i > 1; --i) {
    std::swap(bg_cats[i - 1], bg_cats[r.below(i)]);
  }
  int32_t majority = 0;
  for (size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[static_cast<size_t>(majority)]) majority = static_cast<int32_t>(c);
  }

  // 3. pixels, one patch at a time in row-major order
  GeneratedSlide out;
  out.patches.resize(static_cast<size_t>(cells));
  size_t bg_next = 0;
  for (int64_t i = 0; i < cells; ++i) {
    const bool marker = is_marker[static_cast<size_t>(i)] != 0;
    const int32_t cat = marker ? spec.marker_category : bg_cats[bg_next++];
    render_patch(out.patches[static_cast<size_t>(i)], spec.patch_px, cat, marker, r);
  }

  out.meta.slide_id = spec.slide_id;
  out.meta.marker_category = spec.marker_category;
  out.meta.majority_category = majority;
  out.meta.marker_count = marker_count;
  out.meta.grid_rows = spec.grid_rows;
  out.meta.grid_cols = spec.grid_cols;
  out.meta.seed = spec.seed;
  return out;
}

// ===== tiling =====

std::vector<Patch> tile(const std::vector<double>& image, int64_t height, int64_t width,
                        int64_t patch_px) {
  if (patch_px < 1 || height % patch_px != 0 || width % patch_px != 0) {
    throw shape_error("tile: image " + std::to_string(height) + "x" + std::to_string(width) +
                      " not divisible by patch " + std::to_string(patch_px));
  }
  if (static_cast<int64_t>(image.size()) != height * width * 3) {
    throw shape_error("tile: image buffer has " + std::to_string(image.size()) + " values, expected " +
                      std::to_string(height * width * 3));
  }
  const int64_t gr = height / patch_px, gc = width / patch_px;
  std::vector<Patch> patches(static_cast<size_t>(gr * gc));
  for (int64_t ty = 0; ty < gr; ++ty) {
    for (int64_t tx = 0; tx < gc; ++tx) {
      Patch& p = patches[static_cast<size_t>(ty * gc + tx)];
      p.px = patch_px;
      p.pixels.resize(static_cast<size_t>(patch_px * patch_px * 3));
      for (int64_t py = 0; py < patch_px; ++py) {
        const double* src = image.data() + ((ty * patch_px + py) * width + tx * patch_px) * 3;
        std::copy(src, src + patch_px * 3, p.pixels.data() + py * patch_px * 3);
      }
    }
  }
  return patches;
}

std::vector<double> assemble(const std::vector<Patch>& patches, int64_t grid_rows, int64_t grid_cols) {
  if (static_cast<int64_t>(patches.size()) != grid_rows * grid_cols || patches.empty()) {
    throw shape_error("assemble: " + std::to_string(patches.size()) + " patches cannot fill a " +
                      std::to_string(grid_rows) + "x" + std::to_string(grid_cols) + " grid");
  }
  const int64_t px = patches[0].px;
  for (const Patch& p : patches) {
    if (p.px != px || static_cast<int64_t>(p.pixels.size()) != px * px * 3) {
      throw shape_error("assemble: mixed patch sizes");
    }
  }
  std::vector<double> image(static_cast<size_t>(grid_rows * px * grid_cols * px * 3));
  const int64_t width = grid_cols * px;
  for (int64_t ty = 0; ty < grid_rows; ++ty) {
    for (int64_t tx = 0; tx < grid_cols; ++tx) {
      const Patch& p = patches[static_cast<size_t>(ty * grid_cols + tx)];
      for (int64_t py = 0; py < px; ++py) {
        double* dst = image.data() + ((ty * px + py) * width + tx * px) * 3;
        std::copy(p.pixels.data() + py * px * 3, p.pixels.data() + (py + 1) * px * 3, dst);
      }
    }
  }
  return image;
}

// ===== QA =====

int CountBands::band_of(int64_t count) const {
  if (count <= edges[0]) return 0;
  if (count <= edges[1]) return 1;
  if (count <= edges[2]) return 2;
  return 3;
}

CountBands count_bands(int64_t cells, double rarity) {
  if (cells < 1 || !(rarity > 0.0 && rarity < 1.0)) {
    throw config_error("count_bands: need cells >= 1 and rarity in (0,1), got " +
                       std::to_string(cells) + ", " + std::to_string(rarity));
  }
  // Binomial quartiles by direct CDF walk; normal approximation if the pmf at
  // zero underflows (grids far beyond desk scale).
  std::array<int64_t, 3> edges{};
  double pmf = std::pow(1.0 - rarity, static_cast<double>(cells));
  if (pmf > 0.0) {
    const std::array<double, 3> targets = {0.25, 0.5, 0.75};
    double cdf = pmf;
    int64_t k = 0;
    for (size_t t = 0; t < 3; ++t) {
      while (cdf < targets[t] && k < cells) {
        pmf *= static_cast<double>(cells - k) / static_cast<double>(k + 1) * rarity / (1.0 - rarity);
        cdf += pmf;
        ++k;
      }
      edges[t] = k;
    }
  } else {
    const double mean = static_cast<double>(cells) * rarity;
    const double sd = std::sqrt(mean * (1.0 - rarity));
    const std::array<double, 3> z = {-0.6744897501960817, 0.0, 0.6744897501960817};
    for (size_t t = 0; t < 3; ++t) edges[t] = static_cast<int64_t>(std::llround(mean + z[t] * sd));
  }
  edges[0] = std::max<int64_t>(edges[0], 1);
  edges[1] = std::max(edges[1], edges[0] + 1);
  edges[2] = std::max(edges[2], edges[1] + 1);

  CountBands b;
  b.edges = edges;
  b.labels[0] = std::to_string(edges[0]) + " or fewer";
  b.labels[1] = std::to_string(edges[0] + 1) + " to " + std::to_string(edges[1]);
  b.labels[2] = std::to_string(edges[1] + 1) + " to " + std::to_string(edges[2]);
  b.labels[3] = std::to_string(edges[2] + 1) + " or more";
  return b;
}

VQARecord generate_qa(const SlideMeta& meta, Template tmpl, const CountBands& bands, uint64_t seed) {
  rng r(seed);
  VQARecord rec;
  rec.slide_id = meta.slide_id;
  rec.template_id = static_cast<int32_t>(tmpl);
  rec.seed = seed;

  std::string gold_text;
  std::vector<std::string> choice_texts;
  switch (tmpl) {
    case Template::marker_identity:
    case Template::majority_tissue: {
      const int32_t gold_cat = tmpl == Template::marker_identity ? meta.marker_category
                                                                 : meta.majority_category;
      rec.question = tmpl == Template::marker_identity
                         ? "which tissue type do the sparse marker patches show?"
                         : "which tissue type covers the largest share of the slide?";
      gold_text = category_names()[static_cast<size_t>(gold_cat)];
      std::vector<std::string> pool;
      for (int32_t c = 0; c < kNumCategories; ++c) {
        if (c != gold_cat) pool.push_back(category_names()[static_cast<size_t>(c)]);
      }
      for (size_t i = 0; i < 3; ++i) {  // partial Fisher-Yates: 3 distinct distractors
        std::swap(pool[i], pool[i + r.below(pool.size() - i)]);
      }
      choice_texts = {gold_text, pool[0], pool[1], pool[2]};
      break;
    }
    case Template::marker_count_band: {
      rec.question = "how many marker patches are present on the slide?";
      const int gold_band = bands.band_of(meta.marker_count);
      gold_text = bands.labels[static_cast<size_t>(gold_band)];
      choice_texts.assign(bands.labels.begin(), bands.labels.end());
      break;
    }
    default:
      throw config_error("generate_qa: unknown template " + std::to_string(static_cast<int>(tmpl)));
  }

  for (size_t i = choice_texts.size(); i > 1; --i) {
    std::swap(choice_texts[i - 1], choice_texts[r.below(i)]);
  }
  for (size_t i = 0; i < 4; ++i) {
    rec.choices[i] = choice_texts[i];
    if (choice_texts[i] == gold_text) rec.gold = static_cast<char>('A' + i);
  }
  return rec;
}

// ===== dataset planning =====

SlideSpec plan_slide_spec(const DatasetPlan& plan, int64_t index) {
  SlideSpec spec;
  spec.slide_id = format_slide_id(index);
  spec.grid_rows = plan.grid_rows;
  spec.grid_cols = plan.grid_cols;
  spec.patch_px = plan.patch_px;
  spec.marker_rarity = plan.marker_rarity;
  spec.marker_category = static_cast<int32_t>(index % kNumCategories);
  spec.seed = derive_seed(plan.seed, static_cast<uint64_t>(index));

  rng r(derive_seed(spec.seed, 0xbacc));
  std::vector<int32_t> pool;
  for (int32_t c = 0; c < kNumCategories; ++c) {
    if (c != spec.marker_category) pool.push_back(c);
  }
  for (size_t i = 0; i < 3; ++i) {
    std::swap(pool[i], pool[i + r.below(pool.size() - i)]);
  }
  // weights in [1,2] normalized; retry until the top two are clearly apart so
  // integer quotas keep a strict majority
  std::array<double, 3> w{};
  bool ok = false;
  for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
    double s = 0.0;
    for (auto& v : w) {
      v = r.uniform(1.0, 2.0);
      s += v;
    }
    for (auto& v : w) v /= s;
    std::array<double, 3> sorted = w;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    ok = sorted[0] - sorted[1] >= 0.05;
  }
  if (!ok) w = {0.5, 0.3, 0.2};
  spec.background_mix.assign(kNumCategories, 0.0);
  for (size_t i = 0; i < 3; ++i) spec.background_mix[static_cast<size_t>(pool[i])] = w[i];
  return spec;
}

std::vector<std::string> plan_splits(const DatasetPlan& plan) {
  std::vector<std::string> splits(static_cast<size_t>(plan.n_slides), "train");
  for (int32_t cat = 0; cat < kNumCategories; ++cat) {
    std::vector<int64_t> members;
    for (int64_t i = cat; i < plan.n_slides; i += kNumCategories) members.push_back(i);
    rng r(derive_seed(plan.seed, 0x5917 + static_cast<uint64_t>(cat)));
    for (size_t i = members.size(); i > 1; --i) {
      std::swap(members[i - 1], members[r.below(i)]);
    }
    const int64_t n = static_cast<int64_t>(members.size());
    const int64_t n_val = std::llround(0.1 * static_cast<double>(n));
    const int64_t n_test = std::llround(0.1 * static_cast<double>(n));
    for (int64_t i = 0; i < n; ++i) {
      splits[static_cast<size_t>(members[static_cast<size_t>(i)])] =
          i < n_val ? "val" : (i < n_val + n_test ? "test" : "train");
    }
  }
  return splits;
}

Manifest build_manifest(const DatasetPlan& plan,
                        const std::function<void(const SlideEntry&, const GeneratedSlide&)>& on_slide) {
  if (plan.n_slides < 0) throw config_error("build_manifest: negative slide count");
  Manifest m;
  const std::vector<std::string> splits = plan_splits(plan);
  const CountBands bands = count_bands(plan.grid_rows * plan.grid_cols, plan.marker_rarity);
  for (int64_t i = 0; i < plan.n_slides; ++i) {
    const SlideSpec spec = plan_slide_spec(plan, i);
    GeneratedSlide g = generate_slide(spec);
    SlideEntry entry;
    entry.meta = g.meta;
    entry.split = splits[static_cast<size_t>(i)];
    entry.feature_path = "features/" + spec.slide_id + ".tcpf";
    const int64_t per_tmpl =
        entry.split == "train" ? plan.train_records_per_template : plan.eval_records_per_template;
    for (int32_t t = 0; t < 3; ++t) {
      for (int64_t k = 0; k < per_tmpl; ++k) {
        VQARecord rec = generate_qa(g.meta, static_cast<Template>(t), bands,
                                    derive_seed(spec.seed, 0x9a0 + static_cast<uint64_t>(t) * 16 +
                                                               static_cast<uint64_t>(k)));
        rec.split = entry.split;
        m.records.push_back(std::move(rec));
      }
    }
    if (on_slide) on_slide(entry, g);
    m.slides.push_back(std::move(entry));
  }
  return m;
}

// ===== persistence =====

void write_dataset(const Manifest& m, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::string slides;
  for (const SlideEntry& s : m.slides) {
    check_no_tabs(s.meta.slide_id, "slide_id");
    check_no_tabs(s.feature_path, "feature_path");
    if (!valid_split(s.split)) throw format_error("write_dataset: bad split \"" + s.split + "\"");
    slides += s.meta.slide_id + "\t" + s.split + "\t" + std::to_string(s.meta.marker_category) + "\t" +
              std::to_string(s.meta.majority_category) + "\t" + std::to_string(s.meta.marker_count) +
              "\t" + std::to_string(s.meta.grid_rows) + "\t" + std::to_string(s.meta.grid_cols) +
              "\t" + std::to_string(s.meta.seed) + "\t" + s.feature_path + "\n";
  }
  write_text_file(dir + "/slides.tsv", slides);

  std::string lines;
  for (const VQARecord& r : m.records) {
    check_no_tabs(r.slide_id, "slide_id");
    check_no_tabs(r.question, "question");
    for (const auto& c : r.choices) check_no_tabs(c, "choice");
    if (!valid_split(r.split)) throw format_error("write_dataset: bad split \"" + r.split + "\"");
    if (r.gold < 'A' || r.gold > 'D') {
      throw format_error(std::string("write_dataset: bad gold letter '") + r.gold + "'");
    }
    lines += r.slide_id + "\t" + r.split + "\t" + std::to_string(r.template_id) + "\t" + r.question +
             "\t" + r.choices[0] + "\t" + r.choices[1] + "\t" + r.choices[2] + "\t" + r.choices[3] +
             "\t" + r.gold + "\t" + std::to_string(r.seed) + "\n";
  }
  write_text_file(dir + "/manifest.tsv", lines);
}

Manifest read_dataset(const std::string& dir) {
  Manifest m;
  const std::string slides_path = dir + "/slides.tsv";
  const std::string manifest_path = dir + "/manifest.tsv";

  std::vector<std::pair<std::string, std::string>> slide_splits;  // id -> split
  {
    const std::string text = read_text_file(slides_path);
    size_t lineno = 0, start = 0;
    while (start < text.size()) {
      size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(start, end - start);
      start = end + 1;
      ++lineno;
      if (line.empty()) continue;
      const auto f = split_tsv_line(line);
      if (f.size() != 9) {
        throw format_error(slides_path + " line " + std::to_string(lineno) + ": expected 9 fields, got " +
                           std::to_string(f.size()));
      }
      SlideEntry e;
      e.meta.slide_id = f[0];
      e.split = f[1];
      if (!valid_split(e.split)) {
        throw format_error(slides_path + " line " + std::to_string(lineno) + ": bad split \"" + f[1] +
                           "\"");
      }
      e.meta.marker_category = static_cast<int32_t>(parse_int(f[2], slides_path, lineno, "marker_category"));
      e.meta.majority_category =
          static_cast<int32_t>(parse_int(f[3], slides_path, lineno, "majority_category"));
      e.meta.marker_count = parse_int(f[4], slides_path, lineno, "marker_count");
      e.meta.grid_rows = parse_int(f[5], slides_path, lineno, "grid_rows");
      e.meta.grid_cols = parse_int(f[6], slides_path, lineno, "grid_cols");
      e.meta.seed = parse_u64(f[7], slides_path, lineno, "seed");
      e.feature_path = f[8];
      for (const auto& [id, split] : slide_splits) {
        if (id == e.meta.slide_id) {
          throw format_error(slides_path + " line " + std::to_string(lineno) + ": duplicate slide_id \"" +
                             id + "\"");
        }
      }
      slide_splits.emplace_back(e.meta.slide_id, e.split);
      m.slides.push_back(std::move(e));
    }
  }

  {
    const std::string text = read_text_file(manifest_path);
    size_t lineno = 0, start = 0;
    while (start < text.size()) {
      size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(start, end - start);
      start = end + 1;
      ++lineno;
      if (line.empty()) continue;
      const auto f = split_tsv_line(line);
      if (f.size() != 10) {
        throw format_error(manifest_path + " line " + std::to_string(lineno) +
                           ": expected 10 fields, got " + std::to_string(f.size()));
      }
      VQARecord r;
      r.slide_id = f[0];
      r.split = f[1];
      if (!valid_split(r.split)) {
        throw format_error(manifest_path + " line " + std::to_string(lineno) + ": bad split \"" + f[1] +
                           "\"");
      }
      r.template_id = static_cast<int32_t>(parse_int(f[2], manifest_path, lineno, "template_id"));
      if (r.template_id < 0 || r.template_id > 2) {
        throw format_error(manifest_path + " line " + std::to_string(lineno) + ": template_id " + f[2] +
                           " outside [0,2]");
      }
      r.question = f[3];
      for (size_t c = 0; c < 4; ++c) r.choices[c] = f[4 + c];
      if (f[8].size() != 1 || f[8][0] < 'A' || f[8][0] > 'D') {
        throw format_error(manifest_path + " line " + std::to_string(lineno) + ": bad gold \"" + f[8] +
                           "\"");
      }
      r.gold = f[8][0];
      r.seed = parse_u64(f[9], manifest_path, lineno, "seed");

      const auto it = std::find_if(slide_splits.begin(), slide_splits.end(),
                                   [&](const auto& p) { return p.first == r.slide_id; });
      if (it == slide_splits.end()) {
        throw format_error(manifest_path + " line " + std::to_string(lineno) +
                           ": record references unknown slide_id \"" + r.slide_id + "\"");
      }
      if (it->second != r.split) {
        throw format_error(manifest_path + " line " + std::to_string(lineno) + ": record split \"" +
                           r.split + "\" disagrees with slide split \"" + it->second + "\"");
      }
      m.records.push_back(std::move(r));
    }
  }
  return m;
}

std::string record_id(const VQARecord& rec, int64_t ordinal) {
  return rec.slide_id + "#" + std::to_string(rec.template_id) + "#" + std::to_string(ordinal);
}

}  // namespace tcv
