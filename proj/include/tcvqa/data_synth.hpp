#pragma once
// Synthetic slide corpus: procedural tissue textures on a patch grid with a
// sparse marker category planted at low rarity, multiple-choice QA records
// derived from generator metadata (zero label noise), and TSV persistence.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tcvqa/common.hpp"

namespace tcv {

constexpr int32_t kNumCategories = 10;

// Single-word names so each category is one vocabulary token.
const std::array<std::string, kNumCategories>& category_names();

// ===== slides =====

struct SlideSpec {
  std::string slide_id;
  int64_t grid_rows = 16;
  int64_t grid_cols = 16;
  int64_t patch_px = 16;
  int32_t marker_category = 0;
  double marker_rarity = 0.02;
  std::vector<double> background_mix;  // weight per category; nonzero entries form the mix
  uint64_t seed = 0;
};

struct Patch {
  int64_t px = 0;
  std::vector<double> pixels;  // (py, px, channel) row-major, values in [0,1]
  int32_t category = -1;       // generator metadata, never shown to the model
  bool marker = false;
};

struct SlideMeta {
  std::string slide_id;
  int32_t marker_category = -1;
  int32_t majority_category = -1;
  int64_t marker_count = 0;
  int64_t grid_rows = 0;
  int64_t grid_cols = 0;
  uint64_t seed = 0;
};

struct GeneratedSlide {
  std::vector<Patch> patches;  // row-major over the grid
  SlideMeta meta;
};

// Markers drawn per cell by seeded Bernoulli(rarity), at least one forced.
// Background cells carry quota-assigned categories from background_mix so the
// intended majority is the actual majority by count.
GeneratedSlide generate_slide(const SlideSpec& spec);

// Row-major non-overlapping tiling; extents must divide by patch_px.
std::vector<Patch> tile(const std::vector<double>& image, int64_t height, int64_t width,
                        int64_t patch_px);
// Inverse of tile for a full grid of patches.
std::vector<double> assemble(const std::vector<Patch>& patches, int64_t grid_rows, int64_t grid_cols);

// ===== QA records =====

enum class Template : int32_t {
  marker_identity = 0,
  majority_tissue = 1,
  marker_count_band = 2,
};

struct VQARecord {
  std::string slide_id;
  std::string split;  // train / val / test
  int32_t template_id = 0;
  std::string question;
  std::array<std::string, 4> choices;
  char gold = 'A';
  uint64_t seed = 0;
};

// Count bands split Binomial(cells, rarity) roughly into quartiles; the four
// band strings partition all counts and are each exactly three words.
struct CountBands {
  std::array<int64_t, 3> edges;  // strictly increasing
  std::array<std::string, 4> labels;
  int band_of(int64_t count) const;
};
CountBands count_bands(int64_t cells, double rarity);

VQARecord generate_qa(const SlideMeta& meta, Template tmpl, const CountBands& bands, uint64_t seed);

// ===== dataset =====

struct SlideEntry {
  SlideMeta meta;
  std::string split;
  std::string feature_path;  // relative to the dataset dir
};

struct Manifest {
  std::vector<SlideEntry> slides;
  std::vector<VQARecord> records;
};

struct DatasetPlan {
  int64_t n_slides = 800;
  int64_t grid_rows = 16;
  int64_t grid_cols = 16;
  int64_t patch_px = 16;
  double marker_rarity = 0.02;
  uint64_t seed = 0;
  int64_t train_records_per_template = 1;
  int64_t eval_records_per_template = 3;
};

// Deterministic slide spec for index i: marker category round-robin (exact
// stratification), three non-marker background categories with a clear margin
// between the top two weights.
SlideSpec plan_slide_spec(const DatasetPlan& plan, int64_t index);

// Per-category 8:1:1 assignment, within one slide of target, seeded shuffle.
std::vector<std::string> plan_splits(const DatasetPlan& plan);

// Generates every slide and its records. on_slide (optional) receives each
// generated slide so callers can encode and persist features in one pass.
Manifest build_manifest(const DatasetPlan& plan,
                        const std::function<void(const SlideEntry&, const GeneratedSlide&)>& on_slide = {});

// manifest.tsv + slides.tsv under dir. Tabs/newlines in text fields are
// rejected rather than escaped.
void write_dataset(const Manifest& m, const std::string& dir);
Manifest read_dataset(const std::string& dir);

std::string record_id(const VQARecord& rec, int64_t ordinal);  // slide#template#ordinal

}  // namespace tcv
