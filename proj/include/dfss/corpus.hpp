#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dfss/tensor.hpp"

namespace dfss {

enum class Stratum : std::uint8_t { in_dist = 0, shifted = 1, ood = 2 };

const char* stratum_name(Stratum s);
Stratum parse_stratum(const std::string& name);

using Rgb = std::array<float, 3>;

// Knobs of the synthetic scene distribution. Defaults define the toy
// "original" data distribution.
struct CorpusConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_classes = 4;
  std::size_t min_shapes = 1;
  std::size_t max_shapes = 3;
  double min_shape_size = 4.0;  // circle radius, square half-side, triangle circumradius
  double max_shape_size = 9.0;
  double color_jitter = 0.08;
  double texture_min_amplitude = 0.05;
  double texture_max_amplitude = 0.12;
  double pixel_noise = 0.03;
  // Shifted stratum: hue rotation drawn from [min, max] degrees plus an
  // extra high-frequency grating and stronger pixel noise.
  double hue_shift_min_deg = 60.0;
  double hue_shift_max_deg = 300.0;
  double shift_texture_amplitude = 0.15;
  double shift_pixel_noise = 0.06;
  // Out-of-distribution patterns: chance that a pattern color comes from the
  // class palette rather than the background palette, and additive noise on
  // gratings and noise fields.
  double ood_class_color_prob = 0.2;
  double ood_pixel_noise = 0.2;

  friend bool operator==(const CorpusConfig&, const CorpusConfig&) = default;
};

std::string canonical_config_text(const CorpusConfig& config);

enum class ShapeKind : std::uint8_t { circle = 1, square = 2, triangle = 3 };

struct ShapeInstance {
  ShapeKind kind = ShapeKind::circle;
  double cx = 0, cy = 0;
  double size = 0;
  double angle = 0;  // triangle orientation, radians
  Rgb color{};
};

struct SceneParams {
  Rgb background{};
  double texture_amplitude = 0;
  double texture_fx = 0, texture_fy = 0, texture_phase = 0;
  std::uint64_t noise_seed = 0;
  std::vector<ShapeInstance> shapes;  // painted in order, later ones on top
};

// Pixel centers sit at (x + 0.5, y + 0.5).
bool shape_contains(const ShapeInstance& shape, double x, double y);

SceneParams sample_scene(const CorpusConfig& config, std::mt19937_64& rng);

struct RenderedImage {
  std::vector<float> pixels;  // planar 3 x H x W in [0, 1]
  std::vector<std::uint8_t> labels;  // H x W class indices
};

RenderedImage render_scene(const SceneParams& scene, const CorpusConfig& config);

struct ImageRecord {
  std::uint32_t id = 0;
  Stratum stratum = Stratum::in_dist;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
  std::optional<std::vector<std::uint8_t>> labels;
  std::uint64_t seed = 0;

  // 1 x 3 x H x W tensor view of the pixels.
  Tensor as_tensor() const;
};

struct Corpus {
  std::string name;
  bool labeled = false;
  std::size_t height = 0;
  std::size_t width = 0;
  std::array<double, 3> proportions{1.0, 0.0, 0.0};  // in_dist, shifted, ood
  std::string config_hash;
  std::vector<ImageRecord> records;

  std::size_t size() const { return records.size(); }
};

// Exact partition of n into strata by largest-remainder rounding. Ties in the
// remainder go to the lower stratum index.
std::array<std::size_t, 3> stratum_counts(std::size_t n,
                                          const std::array<double, 3>& mix);

// Labeled scenes drawn from the original distribution.
Corpus gen_original(const CorpusConfig& config, std::uint64_t seed,
                    std::size_t n);

// Unlabeled stratified corpus. The in_dist stratum uses the original scene
// generator (with an independent seed stream); shifted is hue-rotated and
// texture-perturbed; ood holds flat colors, gratings and block-noise fields
// built from the same palette.
Corpus gen_openworld(const CorpusConfig& config, std::uint64_t seed,
                     std::size_t n, const std::array<double, 3>& mix);

enum class OodKind : std::uint8_t { flat = 0, grating = 1, block_noise = 2 };
// The kind chosen for an ood record with the given record seed.
OodKind ood_kind_for_seed(std::uint64_t record_seed);

// Shannon entropy (bits) of the 256-bin histogram of the grayscale image
// g = 0.299 R + 0.587 G + 0.114 B, binned as round(255 * g).
double image_entropy(std::span<const float> planar_rgb);

struct EntropyReport {
  std::vector<double> entropies;
  double mean = 0;
  double median = 0;    // lower middle for even counts
  double variance = 0;  // population variance
};

EntropyReport summarize_entropies(std::vector<double> entropies);
EntropyReport corpus_richness(const Corpus& corpus);

struct SelectionPrinciplesReport {
  bool cardinality_ok = false;
  bool richness_ok = false;
  std::size_t original_count = 0;
  std::size_t collected_count = 0;
  double original_mean_entropy = 0;
  double collected_mean_entropy = 0;
  std::string task_relevance = "by construction";
};

// cardinality_ok iff |collected| >= ratio * |original|; richness_ok iff the
// collected mean entropy is at least the original one.
SelectionPrinciplesReport check_selection_principles(const Corpus& original,
                                                     const Corpus& collected,
                                                     double ratio = 10.0);

// Manifest (JSON) plus packed payload file. The payload starts with the magic
// "DFSSIMG1"; each record is u32 id, u8 stratum, u16 H, u16 W, then
// 3*H*W f32 planar pixels and, for labeled corpora, H*W u8 labels.
// Manifest entries store the byte offset of each record header.
void write_corpus(const Corpus& corpus, const std::filesystem::path& manifest_path);
Corpus read_corpus(const std::filesystem::path& manifest_path);

// 8-bit binary PPM of one record, for eyeballing.
void export_ppm(const ImageRecord& record, const std::filesystem::path& path);

}  // namespace dfss
