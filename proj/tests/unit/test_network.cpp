#include <doctest.h>

#include <filesystem>
#include <random>

#include "dfss/checkpoint.hpp"
#include "dfss/io.hpp"
#include "dfss/network.hpp"
#include "oracles.hpp"

using namespace dfss;
namespace fs = std::filesystem;

namespace {

Tensor random_image(std::uint64_t seed, std::size_t h = 32, std::size_t w = 32) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor t({1, 3, h, w});
  for (float& v : t.values()) v = u(rng);
  return t;
}

// Gives the BN layers non-trivial running statistics.
Network warmed_teacher(std::uint64_t seed) {
  Network net = build_network(default_teacher_spec(), seed);
  net.set_mode(Mode::train);
  for (std::uint64_t k = 0; k < 3; ++k) {
    Tensor batch({2, 3, 32, 32});
    const Tensor a = random_image(seed + 10 * k), b = random_image(seed + 10 * k + 1);
    std::copy(a.storage().begin(), a.storage().end(), batch.data());
    std::copy(b.storage().begin(), b.storage().end(), batch.data() + a.size());
    net.forward(batch);
  }
  net.set_mode(Mode::eval);
  net.clear_tape();
  return net;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dfss_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::vector<float>> bn_state(const Network& net) {
  std::vector<std::vector<float>> out;
  for (const auto* bn : net.batchnorm_layers()) {
    out.push_back(bn->running_mean);
    out.push_back(bn->running_var);
    out.push_back(bn->gamma.value.storage());
    out.push_back(bn->beta.value.storage());
  }
  return out;
}

}  // namespace

TEST_SUITE("nets") {
  TEST_CASE("same spec and seed give identical parameters") {
    const Network a = build_network(default_teacher_spec(), 42);
    const Network b = build_network(default_teacher_spec(), 42);
    const Network c = build_network(default_teacher_spec(), 43);
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i]->value == pb[i]->value);
      any_diff = any_diff || !(pa[i]->value == pc[i]->value);
    }
    CHECK(any_diff);
  }

  TEST_CASE("teacher is larger than student and has at least five BN layers") {
    const Network t = build_network(default_teacher_spec(), 1);
    const Network s = build_network(default_student_spec(), 1);
    CHECK(t.parameter_count() > s.parameter_count());
    CHECK(t.batchnorm_layers().size() >= 5);
  }

  TEST_CASE("fresh networks give finite logits at input resolution for a zero input") {
    for (const NetworkSpec& spec : {default_teacher_spec(), default_student_spec()}) {
      Network net = build_network(spec, 5);
      net.set_mode(Mode::eval);
      const Tensor y = net.infer(Tensor({1, 3, 32, 32}, 0.0f));
      CHECK(y.shape() == Shape{1, 4, 32, 32});
      CHECK(y.all_finite());
    }
  }

  TEST_CASE("inconsistent specs are rejected") {
    NetworkSpec spec = default_student_spec();
    spec.layers.pop_back();
    CHECK_THROWS_AS(validate_spec(spec), ShapeError);
    spec = default_teacher_spec();
    // Without the upsample the logits come out at half resolution.
    std::erase_if(spec.layers, [](const LayerSpec& l) { return l.kind == LayerKind::upsample; });
    CHECK_THROWS_AS(build_network(spec, 1), ShapeError);
  }

  TEST_CASE("forward_with_stats is deterministic and leaves BN state alone") {
    const Network net = warmed_teacher(3);
    const auto before = bn_state(net);
    const Tensor x = random_image(99);
    const auto [y1, s1] = net.forward_with_stats(x);
    const auto [y2, s2] = net.forward_with_stats(x);
    CHECK(y1 == y2);
    REQUIRE(s1.layers.size() == net.batchnorm_layers().size());
    for (std::size_t l = 0; l < s1.layers.size(); ++l) {
      CHECK(s1.layers[l].mean == s2.layers[l].mean);
      CHECK(s1.layers[l].var == s2.layers[l].var);
      CHECK(s1.layers[l].mean.size() == net.batchnorm_layers()[l]->channels());
      for (float v : s1.layers[l].var) CHECK(v >= 0.0f);
    }
    CHECK(bn_state(net) == before);
    CHECK(y1 == net.infer(x));
  }

  TEST_CASE("forward_with_stats refuses train mode and batches") {
    Network net = build_network(default_teacher_spec(), 1);
    net.set_mode(Mode::train);
    CHECK_THROWS_AS(net.forward_with_stats(random_image(1)), PreconditionError);
    net.set_mode(Mode::eval);
    CHECK_THROWS_AS(net.forward_with_stats(Tensor({2, 3, 32, 32})), PreconditionError);
  }

  TEST_CASE("doubling the spatial size keeps the channel dimensions of the stats") {
    const Network net = warmed_teacher(4);
    const auto small = net.forward_with_stats(random_image(5, 32, 32)).second;
    const auto large = net.forward_with_stats(random_image(5, 64, 64)).second;
    REQUIRE(small.layers.size() == large.layers.size());
    for (std::size_t l = 0; l < small.layers.size(); ++l) {
      CHECK(small.layers[l].mean.size() == large.layers[l].mean.size());
    }
  }

  TEST_CASE("captured stats equal a two-pass oracle over the BN input") {
    const Network net = warmed_teacher(6);
    const Tensor x = random_image(7);
    const auto stats = net.forward_with_stats(x).second;
    // Replay the layers up to each BN input and compare.
    Tensor h = x;
    std::size_t bn_index = 0;
    for (const auto& layer : net.layers()) {
      if (std::holds_alternative<BatchNormLayer<float>>(layer)) {
        const std::size_t c = h.dim(1), plane = h.dim(2) * h.dim(3);
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::vector<double> xs(h.data() + ch * plane, h.data() + (ch + 1) * plane);
          double m = 0, v = 0;
          oracle::moments(xs, &m, &v);
          CHECK(std::fabs(stats.layers[bn_index].mean[ch] - m) < 1e-5);
          CHECK(std::fabs(stats.layers[bn_index].var[ch] - v) < 1e-5);
        }
        ++bn_index;
      }
      h = std::visit([&](const auto& l) { return l.infer(h); }, layer);
    }
    CHECK(bn_index == stats.layers.size());
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    const fs::path dir = temp_dir("ckpt");
    const Network net = warmed_teacher(8);
    save_checkpoint(net, dir / "t.ckpt");
    const Network back = load_checkpoint(dir / "t.ckpt", default_teacher_spec());
    CHECK(back.mode() == Mode::eval);
    CHECK(bn_state(back) == bn_state(net));
    CHECK(back.init_seed() == net.init_seed());
    const auto pa = net.parameters(), pb = back.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
    const Tensor x = random_image(9);
    CHECK(back.infer(x) == net.infer(x));
    CHECK(serialize_checkpoint(back) == serialize_checkpoint(net));
  }

  TEST_CASE("checkpoint error paths") {
    const fs::path dir = temp_dir("ckpt_err");
    const Network net = warmed_teacher(10);
    const auto bytes = serialize_checkpoint(net);

    auto corrupt = bytes;
    corrupt[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(corrupt, default_teacher_spec()), FormatError);

    auto version = bytes;
    version[8] = 9;
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(version, default_teacher_spec()),
                         doctest::Contains("version"), FormatError);

    CHECK_THROWS_WITH_AS(deserialize_checkpoint(bytes, default_student_spec()),
                         doctest::Contains("digest"), FormatError);

    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 5);
    CHECK_THROWS_WITH_AS(deserialize_checkpoint(truncated, default_teacher_spec()),
                         doctest::Contains("truncated"), FormatError);

    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(deserialize_checkpoint(trailing, default_teacher_spec()), FormatError);

    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt", default_teacher_spec()), IoError);
  }

  TEST_CASE("checkpoint header layout") {
    const Network net = build_network(default_student_spec(), 2);
    const auto bytes = serialize_checkpoint(net);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "DFSSCKPT");
    ByteReader r(bytes, "ckpt");
    r.seek(8);
    CHECK(r.u32() == kCheckpointVersion);
    std::array<std::uint8_t, 32> digest{};
    r.bytes(std::span<std::uint8_t>(digest));
    CHECK(digest == spec_digest(default_student_spec()));
    CHECK(r.u64() == net.parameter_count());
  }
}
