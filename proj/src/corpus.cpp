#include "dfss/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "dfss/hash.hpp"

namespace dfss {
namespace {

constexpr std::uint64_t kOriginalSalt = 0x6f726967;   // "orig"
constexpr std::uint64_t kOpenWorldSalt = 0x6f70656e;  // "open"
constexpr std::uint64_t kStrataSalt = 0x73747261;     // "stra"

// Muted background tones and per-class shape colors of the original scenes.
constexpr std::array<Rgb, 4> kBackgroundPalette{{
    {0.45f, 0.42f, 0.38f},
    {0.35f, 0.38f, 0.33f},
    {0.52f, 0.50f, 0.46f},
    {0.40f, 0.35f, 0.30f},
}};
constexpr std::array<Rgb, 3> kClassPalette{{
    {0.85f, 0.25f, 0.20f},  // circle
    {0.25f, 0.75f, 0.30f},  // square
    {0.20f, 0.35f, 0.85f},  // triangle
}};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

Rgb jitter(const Rgb& c, double amount, std::mt19937_64& rng) {
  Rgb out;
  for (int i = 0; i < 3; ++i) {
    out[i] = static_cast<float>(std::clamp(c[i] + uniform(rng, -amount, amount), 0.0, 1.0));
  }
  return out;
}

Rgb pattern_color(const CorpusConfig& config, std::mt19937_64& rng) {
  if (uniform(rng, 0.0, 1.0) < config.ood_class_color_prob) {
    return kClassPalette[uniform_index(rng, kClassPalette.size())];
  }
  return kBackgroundPalette[uniform_index(rng, kBackgroundPalette.size())];
}

void clamp_unit(std::vector<float>& v) {
  for (float& x : v) x = std::clamp(x, 0.0f, 1.0f);
}

std::array<std::array<double, 2>, 3> triangle_vertices(const ShapeInstance& s) {
  std::array<std::array<double, 2>, 3> v;
  for (int k = 0; k < 3; ++k) {
    const double a = s.angle + k * 2.0 * std::numbers::pi / 3.0;
    v[k] = {s.cx + s.size * std::cos(a), s.cy + s.size * std::sin(a)};
  }
  return v;
}

double edge(const std::array<double, 2>& a, const std::array<double, 2>& b,
            double x, double y) {
  return (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
}

std::string hash_corpus(const CorpusConfig& config, const std::string& kind,
                        std::uint64_t seed, std::size_t n,
                        const std::array<double, 3>& mix) {
  std::ostringstream out;
  out.precision(17);
  out << canonical_config_text(config) << "|kind=" << kind << "|seed=" << seed
      << "|n=" << n << "|mix=" << mix[0] << ',' << mix[1] << ',' << mix[2];
  return to_hex(sha256(out.str()));
}

void hue_rotate(std::vector<float>& px, std::size_t plane, double degrees) {
  const double a = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  const double k = (1.0 - c) / 3.0, r = std::sqrt(1.0 / 3.0) * s;
  // Rotation about the gray axis (1,1,1).
  const double m[3][3] = {{c + k, k - r, k + r}, {k + r, c + k, k - r}, {k - r, k + r, c + k}};
  for (std::size_t i = 0; i < plane; ++i) {
    const double in[3] = {px[i], px[plane + i], px[2 * plane + i]};
    for (int ch = 0; ch < 3; ++ch) {
      px[ch * plane + i] =
          static_cast<float>(m[ch][0] * in[0] + m[ch][1] * in[1] + m[ch][2] * in[2]);
    }
  }
}

ImageRecord make_record(std::uint32_t id, Stratum stratum, std::uint64_t seed,
                        const CorpusConfig& config) {
  ImageRecord r;
  r.id = id;
  r.stratum = stratum;
  r.height = config.height;
  r.width = config.width;
  r.seed = seed;
  return r;
}

std::vector<float> render_shifted(const CorpusConfig& config, std::mt19937_64& rng) {
  const SceneParams scene = sample_scene(config, rng);
  std::vector<float> px = render_scene(scene, config).pixels;
  const std::size_t plane = config.height * config.width;
  hue_rotate(px, plane, uniform(rng, config.hue_shift_min_deg, config.hue_shift_max_deg));
  const double fx = uniform(rng, 0.8, 2.0), fy = uniform(rng, 0.8, 2.0);
  const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, config.shift_pixel_noise);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t y = 0; y < config.height; ++y) {
      for (std::size_t x = 0; x < config.width; ++x) {
        const double t = config.shift_texture_amplitude *
                         std::sin(fx * double(x) + fy * double(y) + phase);
        px[ch * plane + y * config.width + x] += static_cast<float>(t + noise(rng));
      }
    }
  }
  clamp_unit(px);
  return px;
}

std::vector<float> render_ood(const CorpusConfig& config, OodKind kind,
                              std::mt19937_64& rng) {
  const std::size_t h = config.height, w = config.width, plane = h * w;
  std::vector<float> px(3 * plane);
  switch (kind) {
    case OodKind::flat: {
      const Rgb c = jitter(pattern_color(config, rng), config.color_jitter, rng);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        std::fill(px.begin() + ch * plane, px.begin() + (ch + 1) * plane, c[ch]);
      }
      break;
    }
    case OodKind::grating: {
      const Rgb a = jitter(pattern_color(config, rng), config.color_jitter, rng);
      const Rgb b = jitter(pattern_color(config, rng), config.color_jitter, rng);
      const double f = uniform(rng, 0.3, 1.2);
      const double dir = uniform(rng, 0.0, std::numbers::pi);
      const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      std::normal_distribution<double> noise(0.0, config.ood_pixel_noise);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double t = 0.5 + 0.5 * std::sin(f * (double(x) * std::cos(dir) +
                                                     double(y) * std::sin(dir)) + phase);
          for (std::size_t ch = 0; ch < 3; ++ch) {
            px[ch * plane + y * w + x] =
                static_cast<float>(a[ch] + (b[ch] - a[ch]) * t + noise(rng));
          }
        }
      }
      clamp_unit(px);
      break;
    }
    case OodKind::block_noise: {
      const std::size_t block = uniform_index(rng, 2) == 0 ? 4 : 8;
      const std::size_t by = (h + block - 1) / block, bx = (w + block - 1) / block;
      std::vector<Rgb> colors(by * bx);
      for (Rgb& c : colors) c = jitter(pattern_color(config, rng), config.color_jitter, rng);
      std::normal_distribution<double> noise(0.0, config.ood_pixel_noise);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            px[ch * plane + y * w + x] = static_cast<float>(
                colors[(y / block) * bx + x / block][ch] + noise(rng));
          }
        }
      }
      clamp_unit(px);
      break;
    }
  }
  return px;
}

}  // namespace

const char* stratum_name(Stratum s) {
  switch (s) {
    case Stratum::in_dist:
      return "in_dist";
    case Stratum::shifted:
      return "shifted";
    case Stratum::ood:
      return "ood";
  }
  return "?";
}

Stratum parse_stratum(const std::string& name) {
  if (name == "in_dist") return Stratum::in_dist;
  if (name == "shifted") return Stratum::shifted;
  if (name == "ood") return Stratum::ood;
  throw FormatError("unknown stratum '" + name + "'");
}

std::string canonical_config_text(const CorpusConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "h=" << c.height << ";w=" << c.width << ";k=" << c.num_classes
      << ";shapes=" << c.min_shapes << '-' << c.max_shapes << ";size="
      << c.min_shape_size << '-' << c.max_shape_size << ";jitter=" << c.color_jitter
      << ";texture=" << c.texture_min_amplitude << '-' << c.texture_max_amplitude
      << ";noise=" << c.pixel_noise << ";hue=" << c.hue_shift_min_deg << '-'
      << c.hue_shift_max_deg << ";shift_texture=" << c.shift_texture_amplitude
      << ";shift_noise=" << c.shift_pixel_noise << ";ood_class_color=" << c.ood_class_color_prob
      << ";ood_noise=" << c.ood_pixel_noise;
  return out.str();
}

bool shape_contains(const ShapeInstance& s, double x, double y) {
  switch (s.kind) {
    case ShapeKind::circle: {
      const double dx = x - s.cx, dy = y - s.cy;
      return dx * dx + dy * dy <= s.size * s.size;
    }
    case ShapeKind::square:
      return std::abs(x - s.cx) <= s.size && std::abs(y - s.cy) <= s.size;
    case ShapeKind::triangle: {
      const auto v = triangle_vertices(s);
      const double e0 = edge(v[0], v[1], x, y);
      const double e1 = edge(v[1], v[2], x, y);
      const double e2 = edge(v[2], v[0], x, y);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
  return false;
}

SceneParams sample_scene(const CorpusConfig& config, std::mt19937_64& rng) {
  if (config.num_classes != 4) {
    throw PreconditionError("scene generator draws exactly 3 shape classes plus background");
  }
  SceneParams scene;
  scene.background = jitter(kBackgroundPalette[uniform_index(rng, kBackgroundPalette.size())],
                            0.05, rng);
  scene.texture_amplitude =
      uniform(rng, config.texture_min_amplitude, config.texture_max_amplitude);
  scene.texture_fx = uniform(rng, 0.1, 0.6);
  scene.texture_fy = uniform(rng, 0.1, 0.6);
  scene.texture_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  scene.noise_seed = rng();
  const std::size_t count =
      config.min_shapes + uniform_index(rng, config.max_shapes - config.min_shapes + 1);
  for (std::size_t i = 0; i < count; ++i) {
    ShapeInstance s;
    const std::size_t cls = uniform_index(rng, 3);
    s.kind = static_cast<ShapeKind>(cls + 1);
    s.size = uniform(rng, config.min_shape_size, config.max_shape_size);
    s.cx = uniform(rng, s.size, double(config.width) - s.size);
    s.cy = uniform(rng, s.size, double(config.height) - s.size);
    s.angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    s.color = jitter(kClassPalette[cls], config.color_jitter, rng);
    scene.shapes.push_back(s);
  }
  return scene;
}

RenderedImage render_scene(const SceneParams& scene, const CorpusConfig& config) {
  const std::size_t h = config.height, w = config.width, plane = h * w;
  RenderedImage img{std::vector<float>(3 * plane), std::vector<std::uint8_t>(plane, 0)};
  std::mt19937_64 noise_rng(scene.noise_seed);
  std::normal_distribution<double> noise(0.0, config.pixel_noise);
  std::vector<double> grain(3 * plane);
  for (double& g : grain) g = noise(noise_rng);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      const double px = double(x) + 0.5, py = double(y) + 0.5;
      Rgb base = scene.background;
      double texture = scene.texture_amplitude *
                       std::sin(scene.texture_fx * double(x) + scene.texture_fy * double(y) +
                                scene.texture_phase);
      for (const ShapeInstance& s : scene.shapes) {
        if (shape_contains(s, px, py)) {
          base = s.color;
          texture = 0.0;
          img.labels[i] = static_cast<std::uint8_t>(s.kind);
        }
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        img.pixels[ch * plane + i] = static_cast<float>(
            std::clamp(base[ch] + texture + grain[ch * plane + i], 0.0, 1.0));
      }
    }
  }
  return img;
}

Tensor ImageRecord::as_tensor() const {
  return Tensor({1, 3, height, width}, pixels);
}

std::array<std::size_t, 3> stratum_counts(std::size_t n,
                                          const std::array<double, 3>& mix) {
  double total = 0;
  for (double p : mix) {
    if (!(p >= 0.0)) throw PreconditionError("stratum proportions must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw PreconditionError("stratum proportions must sum to 1");
  }
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = mix[i] * double(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    rem[i] = exact - double(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

OodKind ood_kind_for_seed(std::uint64_t record_seed) {
  // One in five patterns is a flat color; the rest split between gratings
  // and noise fields.
  const std::uint64_t u = mix_seed(record_seed, 0x6f6f64) % 5;
  return u == 0 ? OodKind::flat : (u <= 2 ? OodKind::grating : OodKind::block_noise);
}

Corpus gen_original(const CorpusConfig& config, std::uint64_t seed, std::size_t n) {
  if (n == 0) throw PreconditionError("gen_original: n must be >= 1");
  Corpus corpus;
  corpus.name = "original";
  corpus.labeled = true;
  corpus.height = config.height;
  corpus.width = config.width;
  corpus.proportions = {1.0, 0.0, 0.0};
  corpus.config_hash = hash_corpus(config, "original", seed, n, corpus.proportions);
  corpus.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t rs = mix_seed(seed ^ kOriginalSalt, i);
    std::mt19937_64 rng(rs);
    SceneParams scene = sample_scene(config, rng);
    RenderedImage img = render_scene(scene, config);
    // Shapes can in principle cover the whole frame; drop the topmost until
    // some background remains.
    while (std::find(img.labels.begin(), img.labels.end(), 0) == img.labels.end() &&
           scene.shapes.size() > 1) {
      scene.shapes.pop_back();
      img = render_scene(scene, config);
    }
    ImageRecord r = make_record(static_cast<std::uint32_t>(i), Stratum::in_dist, rs, config);
    r.pixels = std::move(img.pixels);
    r.labels = std::move(img.labels);
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

Corpus gen_openworld(const CorpusConfig& config, std::uint64_t seed, std::size_t n,
                     const std::array<double, 3>& mix) {
  if (n == 0) throw PreconditionError("gen_openworld: n must be >= 1");
  const auto counts = stratum_counts(n, mix);
  std::vector<Stratum> strata;
  strata.reserve(n);
  for (int s = 0; s < 3; ++s) strata.insert(strata.end(), counts[s], static_cast<Stratum>(s));
  std::mt19937_64 shuffle_rng(mix_seed(seed ^ kStrataSalt, n));
  std::shuffle(strata.begin(), strata.end(), shuffle_rng);

  Corpus corpus;
  corpus.name = "openworld";
  corpus.labeled = false;
  corpus.height = config.height;
  corpus.width = config.width;
  corpus.proportions = mix;
  corpus.config_hash = hash_corpus(config, "openworld", seed, n, mix);
  corpus.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t rs = mix_seed(seed ^ kOpenWorldSalt, i);
    std::mt19937_64 rng(rs);
    ImageRecord r = make_record(static_cast<std::uint32_t>(i), strata[i], rs, config);
    switch (strata[i]) {
      case Stratum::in_dist:
        r.pixels = render_scene(sample_scene(config, rng), config).pixels;
        break;
      case Stratum::shifted:
        r.pixels = render_shifted(config, rng);
        break;
      case Stratum::ood:
        r.pixels = render_ood(config, ood_kind_for_seed(rs), rng);
        break;
    }
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

double image_entropy(std::span<const float> px) {
  if (px.size() % 3 != 0 || px.empty()) {
    throw ShapeError("image_entropy: expected planar RGB data");
  }
  const std::size_t plane = px.size() / 3;
  std::array<std::size_t, 256> hist{};
  for (std::size_t i = 0; i < plane; ++i) {
    const double g = 0.299 * px[i] + 0.587 * px[plane + i] + 0.114 * px[2 * plane + i];
    const long level = std::clamp(std::lround(g * 255.0), 0L, 255L);
    ++hist[static_cast<std::size_t>(level)];
  }
  double h = 0;
  for (std::size_t count : hist) {
    if (count == 0) continue;
    const double p = double(count) / double(plane);
    h -= p * std::log2(p);
  }
  return h <= 0.0 ? 0.0 : h;
}

EntropyReport summarize_entropies(std::vector<double> entropies) {
  if (entropies.empty()) throw PreconditionError("entropy summary of an empty corpus");
  EntropyReport r;
  r.entropies = std::move(entropies);
  const double n = double(r.entropies.size());
  double sum = 0;
  for (double e : r.entropies) sum += e;
  r.mean = sum / n;
  double sq = 0;
  for (double e : r.entropies) sq += (e - r.mean) * (e - r.mean);
  r.variance = sq / n;
  std::vector<double> sorted = r.entropies;
  std::sort(sorted.begin(), sorted.end());
  r.median = sorted[(sorted.size() - 1) / 2];
  return r;
}

EntropyReport corpus_richness(const Corpus& corpus) {
  if (corpus.records.empty()) throw PreconditionError("corpus_richness: empty corpus");
  std::vector<double> e;
  e.reserve(corpus.size());
  for (const ImageRecord& r : corpus.records) e.push_back(image_entropy(r.pixels));
  return summarize_entropies(std::move(e));
}

SelectionPrinciplesReport check_selection_principles(const Corpus& original,
                                                     const Corpus& collected,
                                                     double ratio) {
  SelectionPrinciplesReport r;
  r.original_count = original.size();
  r.collected_count = collected.size();
  r.cardinality_ok = double(r.collected_count) >= ratio * double(r.original_count);
  r.original_mean_entropy = corpus_richness(original).mean;
  r.collected_mean_entropy = corpus_richness(collected).mean;
  r.richness_ok = r.collected_mean_entropy >= r.original_mean_entropy;
  return r;
}

}  // namespace dfss
