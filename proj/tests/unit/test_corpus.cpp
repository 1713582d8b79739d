#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include <json.hpp>

#include "dfss/corpus.hpp"
#include "dfss/io.hpp"
#include "oracles.hpp"

using namespace dfss;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dfss_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ImageRecord flat_record(std::uint32_t id, float level, std::size_t side = 4) {
  ImageRecord r;
  r.id = id;
  r.height = side;
  r.width = side;
  r.pixels.assign(3 * side * side, level);
  return r;
}

// 16x16 gray ramp hitting each of the 256 histogram bins exactly once.
std::vector<float> uniform_histogram_image() {
  std::vector<float> px(3 * 256);
  for (std::size_t i = 0; i < 256; ++i) {
    for (std::size_t ch = 0; ch < 3; ++ch) px[ch * 256 + i] = float(i) / 255.0f;
  }
  return px;
}

Corpus corpus_of(std::vector<ImageRecord> records, bool labeled = false) {
  Corpus c;
  c.name = "constructed";
  c.labeled = labeled;
  c.height = records.front().height;
  c.width = records.front().width;
  c.records = std::move(records);
  return c;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("original generation is deterministic and labeled") {
    const CorpusConfig cfg;
    const Corpus a = gen_original(cfg, 5, 20), b = gen_original(cfg, 5, 20);
    REQUIRE(a.size() == 20);
    CHECK(a.config_hash == b.config_hash);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.records[i].pixels == b.records[i].pixels);
      CHECK(a.records[i].labels == b.records[i].labels);
    }
    CHECK(gen_original(cfg, 6, 20).config_hash != a.config_hash);
    CHECK_THROWS_AS(gen_original(cfg, 5, 0), PreconditionError);
  }

  TEST_CASE("every original label map has background and only valid classes") {
    const Corpus c = gen_original(CorpusConfig{}, 11, 200);
    for (const ImageRecord& r : c.records) {
      REQUIRE(r.labels.has_value());
      CHECK(std::count(r.labels->begin(), r.labels->end(), 0) > 0);
      for (auto l : *r.labels) CHECK(l < 4);
      for (float p : r.pixels) CHECK((p >= 0.0f && p <= 1.0f));
    }
  }

  TEST_CASE("rendered masks match an independent rasterization") {
    const CorpusConfig cfg;
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      const SceneParams scene = sample_scene(cfg, rng);
      const RenderedImage img = render_scene(scene, cfg);
      for (std::size_t y = 0; y < cfg.height; ++y) {
        for (std::size_t x = 0; x < cfg.width; ++x) {
          const double px = x + 0.5, py = y + 0.5;
          std::uint8_t want = 0;
          for (const ShapeInstance& s : scene.shapes) {
            bool inside = false;
            switch (s.kind) {
              case ShapeKind::circle:
                inside = oracle::in_circle(s.cx, s.cy, s.size, px, py);
                break;
              case ShapeKind::square:
                inside = oracle::in_square(s.cx, s.cy, s.size, px, py);
                break;
              case ShapeKind::triangle:
                inside = oracle::in_triangle(s.cx, s.cy, s.size, s.angle, px, py);
                break;
            }
            if (inside) want = static_cast<std::uint8_t>(s.kind);
          }
          REQUIRE(img.labels[y * cfg.width + x] == want);
        }
      }
    }
  }

  TEST_CASE("open-world strata follow the mix") {
    const CorpusConfig cfg;
    const Corpus pure = gen_openworld(cfg, 1, 50, {1.0, 0.0, 0.0});
    for (const ImageRecord& r : pure.records) {
      CHECK(r.stratum == Stratum::in_dist);
      CHECK_FALSE(r.labels.has_value());
    }
    CHECK(stratum_counts(1000, {0.3, 0.3, 0.4}) == std::array<std::size_t, 3>{300, 300, 400});
    CHECK(stratum_counts(10, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == std::array<std::size_t, 3>{4, 3, 3});
    CHECK(stratum_counts(7, {0.5, 0.25, 0.25}) == std::array<std::size_t, 3>{3, 2, 2});
    CHECK_THROWS_AS(stratum_counts(10, {0.5, 0.5, 0.5}), PreconditionError);
    const Corpus mixed = gen_openworld(cfg, 2, 1000, {0.3, 0.3, 0.4});
    std::array<std::size_t, 3> seen{};
    for (const ImageRecord& r : mixed.records) ++seen[static_cast<std::size_t>(r.stratum)];
    CHECK(seen == std::array<std::size_t, 3>{300, 300, 400});
  }

  TEST_CASE("largest remainder always partitions exactly") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
      double a = u(rng), b = u(rng), c = u(rng);
      const double s = a + b + c;
      const std::array<double, 3> mix{a / s, b / s, 1.0 - a / s - b / s};
      const std::size_t n = 1 + trial * 7;
      const auto counts = stratum_counts(n, mix);
      CHECK(counts[0] + counts[1] + counts[2] == n);
      for (int k = 0; k < 3; ++k) CHECK(std::fabs(double(counts[k]) - mix[k] * n) < 1.0);
    }
  }

  TEST_CASE("open-world generation is a pure function of config, seed and n") {
    const CorpusConfig cfg;
    const Corpus a = gen_openworld(cfg, 9, 60, {0.3, 0.3, 0.4});
    const Corpus b = gen_openworld(cfg, 9, 60, {0.3, 0.3, 0.4});
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.records[i].stratum == b.records[i].stratum);
      CHECK(a.records[i].pixels == b.records[i].pixels);
    }
  }

  TEST_CASE("flat ood images carry no entropy") {
    const Corpus c = gen_openworld(CorpusConfig{}, 4, 400, {0.0, 0.0, 1.0});
    std::size_t flats = 0;
    for (const ImageRecord& r : c.records) {
      if (ood_kind_for_seed(r.seed) != OodKind::flat) continue;
      ++flats;
      CHECK(image_entropy(r.pixels) < 0.1);
    }
    CHECK(flats > 0);
  }

  TEST_CASE("entropy examples") {
    CHECK(image_entropy(flat_record(0, 0.4f).pixels) == 0.0);
    CHECK(image_entropy(uniform_histogram_image()) == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(std::fabs(image_entropy(uniform_histogram_image()) - 8.0) < 1e-9);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<float> px(3 * 24 * 24);
      for (float& p : px) p = u(rng);
      CHECK(std::fabs(image_entropy(px) - oracle::entropy(px)) < 1e-9);
    }
  }

  TEST_CASE("entropy ignores pixel order and stays within [0, 8]") {
    const Corpus c = gen_openworld(CorpusConfig{}, 6, 60, {0.3, 0.3, 0.4});
    std::mt19937_64 rng(1);
    for (const ImageRecord& r : c.records) {
      const double e = image_entropy(r.pixels);
      CHECK(e >= 0.0);
      CHECK(e <= 8.0);
      const std::size_t plane = r.height * r.width;
      std::vector<std::size_t> perm(plane);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<float> shuffled(r.pixels.size());
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < plane; ++i)
          shuffled[ch * plane + i] = r.pixels[ch * plane + perm[i]];
      CHECK(image_entropy(shuffled) == e);
    }
  }

  TEST_CASE("richness statistics conventions") {
    const EntropyReport two = summarize_entropies({4.0, 2.0});
    CHECK(two.mean == 3.0);
    CHECK(two.median == 2.0);
    CHECK(two.variance == 1.0);
    std::vector<ImageRecord> same;
    for (std::uint32_t i = 0; i < 5; ++i) same.push_back(flat_record(i, 0.3f));
    same[0].pixels[0] = 0.9f;
    for (std::uint32_t i = 1; i < 5; ++i) same[i].pixels = same[0].pixels;
    CHECK(corpus_richness(corpus_of(same)).variance == 0.0);
    CHECK_THROWS_AS(summarize_entropies({}), PreconditionError);
  }

  TEST_CASE("selection principles on constructed corpora") {
    ImageRecord textured;
    textured.height = 16;
    textured.width = 16;
    textured.pixels = uniform_histogram_image();
    std::vector<ImageRecord> small(100, textured), large(5000, textured);
    for (std::uint32_t i = 0; i < small.size(); ++i) small[i].id = i;
    for (std::uint32_t i = 0; i < large.size(); ++i) large[i].id = i;
    const Corpus original = corpus_of(small), collected = corpus_of(large);

    const auto both = check_selection_principles(original, collected);
    CHECK(both.cardinality_ok);
    CHECK(both.richness_ok);
    CHECK(both.task_relevance == "by construction");

    const auto same_size = check_selection_principles(original, original);
    CHECK_FALSE(same_size.cardinality_ok);

    std::vector<ImageRecord> flats;
    for (std::uint32_t i = 0; i < 5000; ++i) flats.push_back(flat_record(i, 0.2f + 0.0001f * i, 16));
    const auto flat = check_selection_principles(original, corpus_of(flats));
    CHECK(flat.cardinality_ok);
    CHECK_FALSE(flat.richness_ok);
  }

  TEST_CASE("default open-world corpus is at least as rich as the original data") {
    const CorpusConfig cfg;
    const Corpus original = gen_original(cfg, 21, 200);
    const Corpus collected = gen_openworld(cfg, 22, 2000, {0.3, 0.3, 0.4});
    const auto report = check_selection_principles(original, collected);
    CHECK(report.cardinality_ok);
    CHECK(report.richness_ok);
  }

  TEST_CASE("manifest and payload round trip") {
    const fs::path dir = temp_dir("corpus_io");
    const Corpus ow = gen_openworld(CorpusConfig{}, 3, 25, {0.3, 0.3, 0.4});
    write_corpus(ow, dir / "ow.json");
    CHECK(fs::exists(dir / "ow.bin"));
    const Corpus back = read_corpus(dir / "ow.json");
    CHECK(back.name == ow.name);
    CHECK(back.config_hash == ow.config_hash);
    CHECK(back.proportions == ow.proportions);
    REQUIRE(back.size() == ow.size());
    for (std::size_t i = 0; i < ow.size(); ++i) {
      CHECK(back.records[i].id == ow.records[i].id);
      CHECK(back.records[i].stratum == ow.records[i].stratum);
      CHECK(back.records[i].seed == ow.records[i].seed);
      CHECK(back.records[i].pixels == ow.records[i].pixels);
    }
    const auto manifest = nlohmann::json::parse(read_text_file(dir / "ow.json"));
    CHECK(manifest.at("record_count") == 25);
    CHECK(manifest.at("entries").size() == 25);
    double total = 0;
    for (const auto& [k, v] : manifest.at("proportions").items()) total += v.get<double>();
    CHECK(std::fabs(total - 1.0) < 1e-9);
    const auto payload = read_file(dir / "ow.bin");
    CHECK(std::string(payload.begin(), payload.begin() + 8) == "DFSSIMG1");

    const Corpus orig = gen_original(CorpusConfig{}, 3, 5);
    write_corpus(orig, dir / "orig.json");
    const Corpus orig_back = read_corpus(dir / "orig.json");
    for (std::size_t i = 0; i < orig.size(); ++i) CHECK(orig_back.records[i].labels == orig.records[i].labels);
  }

  TEST_CASE("damaged corpus files are rejected") {
    const fs::path dir = temp_dir("corpus_bad");
    write_corpus(gen_openworld(CorpusConfig{}, 3, 5, {0.3, 0.3, 0.4}), dir / "ow.json");
    auto payload = read_file(dir / "ow.bin");
    payload.resize(payload.size() - 7);
    write_file(dir / "ow.bin", payload);
    CHECK_THROWS_AS(read_corpus(dir / "ow.json"), FormatError);
    CHECK_THROWS_AS(read_corpus(dir / "missing.json"), IoError);
  }

  TEST_CASE("ppm export writes a binary P6 image") {
    const fs::path dir = temp_dir("ppm");
    const Corpus c = gen_original(CorpusConfig{}, 2, 1);
    export_ppm(c.records[0], dir / "x.ppm");
    const auto bytes = read_file(dir / "x.ppm");
    CHECK(std::string(bytes.begin(), bytes.begin() + 2) == "P6");
    CHECK(bytes.size() > 32 * 32 * 3);
  }
}
