#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>

#include "dfss/corpus.hpp"
#include "dfss/io.hpp"
#include "dfss/network.hpp"
#include "dfss/sampler.hpp"
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

Network warmed_teacher(std::uint64_t seed) {
  Network net = build_network(default_teacher_spec(), seed);
  net.set_mode(Mode::train);
  const Corpus c = gen_original(CorpusConfig{}, seed, 8);
  for (std::size_t k = 0; k < c.size(); k += 4) {
    Tensor batch({4, 3, 32, 32});
    for (std::size_t j = 0; j < 4; ++j) {
      const auto& px = c.records[k + j].pixels;
      std::copy(px.begin(), px.end(), batch.data() + j * px.size());
    }
    net.forward(batch);
  }
  net.set_mode(Mode::eval);
  net.clear_tape();
  return net;
}

std::vector<std::vector<double>> widen(const std::vector<std::vector<float>>& v) {
  std::vector<std::vector<double>> out;
  for (const auto& row : v) out.emplace_back(row.begin(), row.end());
  return out;
}

Corpus numbered_corpus(std::size_t n, std::uint32_t first_id = 0) {
  Corpus c;
  c.name = "numbered";
  c.height = 2;
  c.width = 2;
  for (std::size_t i = 0; i < n; ++i) {
    ImageRecord r;
    r.id = first_id + std::uint32_t(i);
    r.height = 2;
    r.width = 2;
    r.stratum = Stratum(i % 3);
    r.pixels.assign(12, 0.5f);
    c.records.push_back(r);
  }
  return c;
}

std::vector<DistanceResult> as_distances(const std::vector<double>& d) {
  std::vector<DistanceResult> out;
  for (double v : d) out.push_back({{v}, v});
  return out;
}

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("harvest copies every running statistic") {
    const Network teacher = warmed_teacher(3);
    const BnReference ref = harvest_bn_reference(teacher);
    const auto bns = teacher.batchnorm_layers();
    REQUIRE(ref.layers.size() == bns.size());
    for (std::size_t i = 0; i < bns.size(); ++i) {
      CHECK(ref.layers[i].mean == bns[i]->running_mean);
      CHECK(ref.layers[i].var == bns[i]->running_var);
    }
    NetworkSpec plain = default_student_spec();
    plain.layers.erase(std::remove_if(plain.layers.begin(), plain.layers.end(),
                                      [](const LayerSpec& l) { return l.kind == LayerKind::batchnorm; }),
                       plain.layers.end());
    CHECK_THROWS_AS(harvest_bn_reference(build_network(plain, 1)), PreconditionError);
  }

  TEST_CASE("distance examples") {
    BnReference ref;
    ref.layers.push_back({{1.0f}, {2.0f}});
    FeatureStats same;
    same.layers.push_back({{1.0f}, {2.0f}});
    CHECK(distribution_distance(same, ref).d == 0.0);

    FeatureStats off;
    off.layers.push_back({{4.0f}, {6.0f}});
    CHECK(distribution_distance(off, ref).d == doctest::Approx(7.0));

    BnReference ref4;
    ref4.layers.push_back({{0, 0, 0, 0}, {1, 1, 1, 1}});
    FeatureStats s4;
    s4.layers.push_back({{1.5f, 1.5f, 1.5f, 1.5f}, {3, 3, 3, 3}});
    CHECK(distribution_distance(s4, ref4).d == doctest::Approx(3.5));
    DistanceOptions raw;
    raw.normalize_by_channels = false;
    CHECK(distribution_distance(s4, ref4, raw).d == doctest::Approx(7.0));

    FeatureStats short_stats;
    CHECK_THROWS_AS(distribution_distance(short_stats, ref), ShapeError);
  }

  TEST_CASE("distance agrees with an independent oracle") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<float> u(-2.0f, 2.0f), pos(0.01f, 3.0f);
    std::uniform_int_distribution<int> layers_dist(1, 5), ch_dist(1, 12);
    for (int trial = 0; trial < 150; ++trial) {
      const int layers = layers_dist(rng);
      BnReference ref;
      FeatureStats stats;
      std::vector<std::vector<float>> mu, var, rmu, rvar;
      for (int l = 0; l < layers; ++l) {
        const int c = ch_dist(rng);
        std::vector<float> a(c), b(c), ra(c), rb(c);
        for (int k = 0; k < c; ++k) {
          a[k] = u(rng);
          b[k] = pos(rng);
          ra[k] = u(rng);
          rb[k] = pos(rng);
        }
        mu.push_back(a);
        var.push_back(b);
        rmu.push_back(ra);
        rvar.push_back(rb);
        stats.layers.push_back({a, b});
        ref.layers.push_back({ra, rb});
      }
      for (bool norm : {true, false}) {
        for (bool mean : {true, false}) {
          DistanceOptions opt;
          opt.normalize_by_channels = norm;
          opt.aggregation = mean ? LayerAggregation::mean : LayerAggregation::sum;
          const double want = oracle::distance(widen(mu), widen(var), widen(rmu), widen(rvar), norm, mean);
          CHECK(distribution_distance(stats, ref, opt).d == doctest::Approx(want).epsilon(1e-9));
        }
      }
    }
  }

  TEST_CASE("teacher distances are non-negative and zero stats give the reference back") {
    const Network teacher = warmed_teacher(5);
    const Corpus c = gen_openworld(CorpusConfig{}, 5, 30, {0.3, 0.3, 0.4});
    for (const DistanceResult& r : score_corpus(c, teacher)) {
      CHECK(r.d >= 0.0);
      CHECK(std::isfinite(r.d));
    }
    Network train_mode = teacher;
    train_mode.set_mode(Mode::train);
    CHECK_THROWS_AS(score_corpus(c, train_mode), PreconditionError);
  }

  TEST_CASE("weight examples") {
    const std::vector<double> d{1.0, 2.0, 3.0};
    CHECK(compute_weights(d) == std::vector<double>{1.0, 0.5, 0.0});
    CHECK(compute_weights(std::vector<double>{2.0, 2.0, 2.0}) == std::vector<double>{1.0, 1.0, 1.0});
    CHECK(compute_weights(std::vector<double>{1.0, 3.0}) == std::vector<double>{1.0, 0.0});
    const std::vector<double> flat{4.0, 4.0};
    CHECK(compute_weights(flat) == std::vector<double>{1.0, 1.0});
    const std::vector<double> one{0.3};
    CHECK(compute_weights(one) == std::vector<double>{1.0});
    CHECK_THROWS_AS(compute_weights(std::vector<double>{}), PreconditionError);
  }

  TEST_CASE("weights are bounded, anti-monotone in d and match the oracle") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> d(2 + trial % 40);
      for (double& v : d) v = u(rng);
      const auto w = compute_weights(d);
      const auto want = oracle::weights(d);
      const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
      CHECK(w[lo - d.begin()] == 1.0);
      CHECK(w[hi - d.begin()] == 0.0);
      for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(w[i] >= 0.0);
        CHECK(w[i] <= 1.0);
        CHECK(w[i] == doctest::Approx(want[i]).epsilon(1e-12));
        for (std::size_t j = 0; j < d.size(); ++j) {
          if (d[i] <= d[j]) CHECK(w[i] >= w[j]);
        }
      }
    }
  }

  TEST_CASE("ads keeps the epsilon smallest distances") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t n = 20 + trial;
      const Corpus c = numbered_corpus(n, 100);
      std::vector<double> d(n);
      for (double& v : d) v = std::round(u(rng) * 4) / 4;  // forces ties
      const std::size_t eps = 1 + trial % n;
      const SelectionResult sel = ads_select_from_scores(c, as_distances(d), eps);

      std::vector<std::pair<double, std::uint32_t>> all;
      for (std::size_t i = 0; i < n; ++i) all.push_back({d[i], c.records[i].id});
      std::sort(all.begin(), all.end());
      REQUIRE(sel.ids.size() == eps);
      for (std::size_t k = 0; k < eps; ++k) {
        CHECK(sel.ids[k] == all[k].second);
        CHECK(sel.scores[k].rank == k);
      }
      std::vector<double> picked;
      for (std::size_t k = 0; k < eps; ++k) picked.push_back(all[k].first);
      const auto w = oracle::weights(picked);
      const auto got = sel.weights();
      for (std::size_t k = 0; k < eps; ++k) CHECK(got[k] == doctest::Approx(w[k]));
    }
  }

  TEST_CASE("ads selection does not depend on record order") {
    const Network teacher = warmed_teacher(7);
    Corpus c = gen_openworld(CorpusConfig{}, 8, 40, {0.3, 0.3, 0.4});
    const SelectionResult a = ads_select(c, teacher, 12);
    std::mt19937_64 rng(2);
    std::shuffle(c.records.begin(), c.records.end(), rng);
    const SelectionResult b = ads_select(c, teacher, 12);
    CHECK(a.ids == b.ids);
    CHECK(a.weights() == b.weights());
    CHECK_THROWS_AS(ads_select(c, teacher, 41), PreconditionError);
    CHECK_THROWS_AS(ads_select(c, teacher, 0), PreconditionError);
  }

  TEST_CASE("random selection is a seeded subset without repeats") {
    const Corpus c = numbered_corpus(50);
    const SelectionResult a = random_select(c, 20, 3), b = random_select(c, 20, 3);
    CHECK(a.ids == b.ids);
    CHECK(random_select(c, 20, 4).ids != a.ids);
    CHECK(std::set<std::uint32_t>(a.ids.begin(), a.ids.end()).size() == 20);
    CHECK(a.weights() == std::vector<double>(20, 1.0));
    const SelectionResult full = random_select(c, 50, 1);
    std::vector<std::uint32_t> sorted = full.ids;
    std::sort(sorted.begin(), sorted.end());
    for (std::uint32_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
    CHECK_THROWS_AS(random_select(c, 51, 1), PreconditionError);
  }

  TEST_CASE("random selection tracks the stratum mix") {
    const Corpus c = gen_openworld(CorpusConfig{}, 10, 300, {0.3, 0.3, 0.4});
    const double n = 300, eps = 60, p = 0.4;
    double total = 0;
    const int seeds = 50;
    for (int s = 0; s < seeds; ++s) {
      const SelectionResult sel = random_select(c, 60, 1000 + s);
      std::set<std::uint32_t> ids(sel.ids.begin(), sel.ids.end());
      for (const ImageRecord& r : c.records) {
        if (ids.count(r.id) && r.stratum == Stratum::ood) total += 1;
      }
    }
    // Hypergeometric spread of the ood count, averaged over the seeds.
    const double sd = std::sqrt(eps * p * (1 - p) * (n - eps) / (n - 1)) / std::sqrt(double(seeds));
    CHECK(std::fabs(total / seeds - eps * p) < 3 * sd);
  }

  TEST_CASE("confidence lies in [1/K, 1] and ties break by id") {
    const Network teacher = warmed_teacher(11);
    const Corpus c = gen_openworld(CorpusConfig{}, 11, 30, {0.3, 0.3, 0.4});
    for (double v : confidence_scores(c, teacher)) {
      CHECK(v >= 0.25 - 1e-6);
      CHECK(v <= 1.0 + 1e-6);
    }
    Tensor uniform({1, 4, 3, 3});
    CHECK(pixel_confidence(uniform) == doctest::Approx(0.25));

    const Corpus n = numbered_corpus(6, 10);
    const std::vector<double> conf{0.5, 0.9, 0.5, 0.9, 0.1, 0.5};
    const SelectionResult sel = confidence_select_from_scores(n, conf, 4);
    CHECK(sel.ids == std::vector<std::uint32_t>{11, 13, 10, 12});
    CHECK(sel.confidences == std::vector<double>{0.9, 0.9, 0.5, 0.5});
  }

  TEST_CASE("stats csv has a header and one row per record") {
    const fs::path dir = temp_dir("stats");
    const Corpus c = numbered_corpus(3);
    const std::vector<double> d{0.5, 0.25, 1.0};
    const SelectionResult sel = ads_select_from_scores(c, as_distances(d), 2);
    const auto dist = as_distances(d);
    export_stats_csv(make_stats_rows(c, dist, {}, &sel), dir / "s.csv");
    const std::string text = read_text_file(dir / "s.csv");
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    CHECK(text.rfind("id,stratum,d,omega,confidence\n", 0) == 0);
    const auto rows = read_stats_csv(dir / "s.csv");
    REQUIRE(rows.size() == 3);
    CHECK(*rows[0].d == 0.5);
    CHECK(*rows[0].omega == 0.0);
    CHECK(*rows[1].omega == 1.0);
    CHECK_FALSE(rows[2].omega.has_value());
    CHECK_FALSE(rows[2].confidence.has_value());
    CHECK(rows[2].stratum == Stratum::ood);
  }

  TEST_CASE("selection json round trip") {
    const fs::path dir = temp_dir("selection");
    const Corpus c = numbered_corpus(10);
    const std::vector<double> d{3, 1, 4, 1.5, 9, 2.6, 5, 3.5, 8, 9.7};
    const SelectionResult ads = ads_select_from_scores(c, as_distances(d), 5);
    write_selection(ads, dir / "a.json");
    const SelectionResult back = read_selection(dir / "a.json");
    CHECK(back.ids == ads.ids);
    CHECK(back.weights() == ads.weights());
    CHECK(back.epsilon == 5);

    const SelectionResult rnd = random_select(c, 4, 77);
    write_selection(rnd, dir / "r.json");
    const SelectionResult rback = read_selection(dir / "r.json");
    CHECK(rback.ids == rnd.ids);
    CHECK(rback.seed == 77);
    CHECK(rback.strategy == Strategy::random);
  }
}
