#include <doctest.h>

#include <cmath>
#include <random>

#include "dfss/checkpoint.hpp"
#include "dfss/corpus.hpp"
#include "dfss/distiller.hpp"
#include "dfss/network.hpp"
#include "dfss/ops.hpp"
#include "dfss/sampler.hpp"
#include "oracles.hpp"

using namespace dfss;

namespace {

TrainConfig small_config(DistillStrategy strategy = DistillStrategy::vanilla) {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.lr = 0.05;
  c.seed = 21;
  c.strategy = strategy;
  return c;
}

const Network& shared_teacher() {
  static const Network teacher = [] {
    const Corpus original = gen_original(CorpusConfig{}, 100, 16);
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 8;
    c.seed = 5;
    Network net = train_teacher(original, default_teacher_spec(), c).net;
    return net;
  }();
  return teacher;
}

const Corpus& shared_openworld() {
  static const Corpus c = gen_openworld(CorpusConfig{}, 200, 16, {0.3, 0.3, 0.4});
  return c;
}

SelectionResult all_of(const Corpus& c) {
  SelectionResult s;
  s.strategy = Strategy::random;
  s.epsilon = c.size();
  for (const ImageRecord& r : c.records) s.ids.push_back(r.id);
  return s;
}

std::vector<double> spread_weights(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = double(i) / double(n - 1);
  return w;
}

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  Tensor t(shape);
  for (float& v : t.values()) v = g(rng);
  return t;
}

}  // namespace

TEST_SUITE("distiller") {
  TEST_CASE("alpha examples") {
    CHECK(alpha(0, 0.2, 100) == doctest::Approx(0.2));
    CHECK(alpha(25, 0.2, 100) == doctest::Approx(0.6));
    CHECK(alpha(25, 0.4, 100) == doctest::Approx(0.7));
    CHECK(alpha(50, 0.2, 100) == 1.0);
    CHECK(alpha(80, 0.0, 100) == 1.0);
    CHECK(alpha(100, 0.7, 100) == 1.0);
    CHECK(alpha(0, 1.0, 10) == 1.0);
    CHECK_THROWS_AS(alpha(-1, 0.5, 10), PreconditionError);
    CHECK_THROWS_AS(alpha(11, 0.5, 10), PreconditionError);
    CHECK_THROWS_AS(alpha(1, 1.5, 10), PreconditionError);
  }

  TEST_CASE("alpha over a grid is bounded, monotone and matches the oracle") {
    for (long total : {2L, 10L, 64L, 250L}) {
      for (int k = 0; k <= 20; ++k) {
        const double omega = k / 20.0;
        double prev = -1;
        for (long t = 0; t <= total; ++t) {
          const double a = alpha(t, omega, total);
          CHECK(std::fabs(a - oracle::alpha(t, omega, total)) < 1e-12);
          CHECK(a >= omega);
          CHECK(a <= 1.0);
          CHECK(a >= prev);
          if (2 * t >= total) CHECK(a == 1.0);
          prev = a;
        }
      }
    }
  }

  TEST_CASE("iteration count must be even") {
    TrainConfig c;
    c.batch_size = 4;
    c.epochs = 3;
    CHECK(total_iterations(c, 8) == 6);
    CHECK(total_iterations(c, 16) == 12);
    CHECK_THROWS_AS(total_iterations(c, 9), PreconditionError);  // 3 * 3 = 9
    c.epochs = 1;
    CHECK_THROWS_AS(total_iterations(c, 4), PreconditionError);
  }

  TEST_CASE("weighted L1 on a two-sample scalar batch") {
    Tensor s({2, 1, 1, 1}), t({2, 1, 1, 1});
    s[0] = 1.0f;
    s[1] = 3.0f;
    t[0] = 0.0f;
    t[1] = 1.0f;
    const std::vector<double> w{1.0, 0.5};
    const BatchObjective obj = kd_batch_objective(s, t, w, KdSpace::logits);
    CHECK(obj.loss == doctest::Approx(1.0));
    CHECK(obj.grad[0] == doctest::Approx(0.5));
    CHECK(obj.grad[1] == doctest::Approx(0.25));
  }

  TEST_CASE("weighted L1 loss and gradient match the oracle") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Tensor s = random_tensor({2, 4, 3, 5}, seed), t = random_tensor({2, 4, 3, 5}, seed + 500);
      const std::vector<double> a{1.0, 0.5};
      const BatchObjective obj = kd_batch_objective(s, t, a, KdSpace::logits);
      const std::size_t per = s.size() / 2;
      double want = 0;
      for (std::size_t i = 0; i < 2; ++i) {
        std::vector<double> si(s.data() + i * per, s.data() + (i + 1) * per);
        std::vector<double> ti(t.data() + i * per, t.data() + (i + 1) * per);
        want += a[i] * oracle::l1(si, ti);
      }
      CHECK(std::fabs(obj.loss - want / 2.0) < 1e-6);
      for (std::size_t j = 0; j < s.size(); ++j) {
        const double sign = s[j] > t[j] ? 1.0 : (s[j] < t[j] ? -1.0 : 0.0);
        CHECK(std::fabs(obj.grad[j] - sign * a[j / per] / double(2 * per)) < 1e-9);
      }
    }
  }

  TEST_CASE("probability-space loss compares channel softmaxes") {
    const Tensor s = random_tensor({1, 3, 2, 2}, 1), t_logits = random_tensor({1, 3, 2, 2}, 2);
    const Tensor t = ops::softmax_channels(t_logits);
    const std::vector<double> w{1.0};
    const BatchObjective obj = kd_batch_objective(s, t, w, KdSpace::probs);
    const Tensor ps = ops::softmax_channels(s);
    std::vector<double> a(ps.values().begin(), ps.values().end()), b(t.values().begin(), t.values().end());
    CHECK(std::fabs(obj.loss - oracle::l1(a, b)) < 1e-6);
    // Softmax gradients sum to zero over channels at each pixel.
    for (std::size_t p = 0; p < 4; ++p) {
      CHECK(std::fabs(obj.grad[p] + obj.grad[4 + p] + obj.grad[8 + p]) < 1e-6);
    }
  }

  TEST_CASE("a zero weight silences its sample") {
    const Tensor s = random_tensor({3, 4, 2, 2}, 7), t = random_tensor({3, 4, 2, 2}, 8);
    const std::vector<double> w{0.3, 0.0, 1.0};
    const BatchObjective obj = kd_batch_objective(s, t, w, KdSpace::logits);
    for (std::size_t j = 16; j < 32; ++j) CHECK(obj.grad[j] == 0.0f);
    for (std::size_t j = 0; j < 16; ++j) CHECK(obj.grad[j] != 0.0f);
  }

  TEST_CASE("past the midpoint the progressive batch loss equals the plain one") {
    const Tensor s = random_tensor({4, 4, 3, 3}, 3), t = random_tensor({4, 4, 3, 3}, 4);
    const std::vector<double> omega{0.0, 0.25, 0.6, 1.0};
    const long total = 40;
    for (long step = total / 2 + 1; step <= total; ++step) {
      std::vector<double> a;
      for (double o : omega) a.push_back(alpha(step, o, total));
      const std::vector<double> ones(4, 1.0);
      const BatchObjective weighted = kd_batch_objective(s, t, a, KdSpace::logits);
      const BatchObjective plain = kd_batch_objective(s, t, ones, KdSpace::logits);
      CHECK(weighted.loss == plain.loss);
      CHECK(weighted.grad.storage() == plain.grad.storage());
    }
  }

  TEST_CASE("unit weights reduce both weighted schemes to vanilla") {
    const Corpus& ow = shared_openworld();
    const SelectionResult sel = all_of(ow);
    const std::vector<double> ones(sel.ids.size(), 1.0);
    const auto spec = default_student_spec();
    const auto vanilla = serialize_checkpoint(distill_vanilla(shared_teacher(), spec, ow, sel, small_config()).net);
    const auto wdd = serialize_checkpoint(distill_wdd(shared_teacher(), spec, ow, sel, ones, small_config()).net);
    const auto wdpd = serialize_checkpoint(distill_wdpd(shared_teacher(), spec, ow, sel, ones, small_config()).net);
    CHECK(vanilla == wdd);
    CHECK(vanilla == wdpd);
    const auto spread = spread_weights(sel.ids.size());
    CHECK(serialize_checkpoint(distill_wdd(shared_teacher(), spec, ow, sel, spread, small_config()).net) != vanilla);
  }

  TEST_CASE("distillation is deterministic and leaves the teacher alone") {
    const Corpus& ow = shared_openworld();
    const SelectionResult sel = all_of(ow);
    const auto before = serialize_checkpoint(shared_teacher());
    const auto w = spread_weights(sel.ids.size());
    const auto a = distill_wdpd(shared_teacher(), default_student_spec(), ow, sel, w, small_config());
    const auto b = distill_wdpd(shared_teacher(), default_student_spec(), ow, sel, w, small_config());
    CHECK(serialize_checkpoint(a.net) == serialize_checkpoint(b.net));
    CHECK(serialize_checkpoint(shared_teacher()) == before);
    CHECK(a.net.mode() == Mode::eval);
    REQUIRE(a.log.size() == 2);
    CHECK(a.log.back().step == 8);
  }

  TEST_CASE("training loss goes down") {
    const Corpus& ow = shared_openworld();
    TrainConfig c = small_config();
    c.epochs = 6;
    const auto r = distill_vanilla(shared_teacher(), default_student_spec(), ow, all_of(ow), c);
    CHECK(r.log.back().loss < r.log.front().loss);
  }

  TEST_CASE("a student equal to the teacher is a fixed point") {
    const Corpus& ow = shared_openworld();
    TrainConfig c = small_config();
    c.freeze_student_bn = true;
    const Network& teacher = shared_teacher();
    const auto r = distill(teacher, teacher.spec(), ow, all_of(ow), {}, c, nullptr, &teacher);
    for (const EpochMetrics& m : r.log) CHECK(m.loss == 0.0);
    CHECK(serialize_checkpoint(r.net) == serialize_checkpoint(teacher));
    CHECK_THROWS_AS(distill(teacher, default_student_spec(), ow, all_of(ow), {}, c, nullptr, &teacher),
                    PreconditionError);
  }

  TEST_CASE("kd with lambda zero is plain supervised training") {
    const Corpus original = gen_original(CorpusConfig{}, 300, 8);
    TrainConfig c = small_config();
    c.lambda = 0.0;
    const auto kd = kd_with_original_data(shared_teacher(), default_student_spec(), original, c);
    const auto sup = train_supervised(original, default_student_spec(), c);
    CHECK(serialize_checkpoint(kd.net) == serialize_checkpoint(sup.net));
    c.lambda = 1.0;
    const auto mixed = kd_with_original_data(shared_teacher(), default_student_spec(), original, c);
    CHECK(serialize_checkpoint(mixed.net) != serialize_checkpoint(sup.net));
  }

  TEST_CASE("objective normalizes by the selection size") {
    const Corpus& ow = shared_openworld();
    const Network student = build_network(default_student_spec(), 3);
    const std::vector<std::uint32_t> ids{ow.records[0].id, ow.records[1].id};
    const std::vector<std::uint32_t> doubled{ids[0], ids[0], ids[1], ids[1]};
    const std::vector<double> w{0.4, 1.0}, w2{0.4, 0.4, 1.0, 1.0};
    const double once = weighted_distillation_objective(student, shared_teacher(), ow, ids, w, KdSpace::logits);
    const double twice = weighted_distillation_objective(student, shared_teacher(), ow, doubled, w2, KdSpace::logits);
    CHECK(once > 0.0);
    CHECK(twice == doctest::Approx(once).epsilon(1e-12));
  }

  TEST_CASE("weighted schemes need valid weights") {
    const Corpus& ow = shared_openworld();
    const SelectionResult sel = all_of(ow);
    const auto spec = default_student_spec();
    CHECK_THROWS_AS(distill_wdd(shared_teacher(), spec, ow, sel, {}, small_config()), PreconditionError);
    const std::vector<double> short_w(3, 1.0);
    CHECK_THROWS_AS(distill_wdpd(shared_teacher(), spec, ow, sel, short_w, small_config()), PreconditionError);
    std::vector<double> bad(sel.ids.size(), 1.0);
    bad[2] = 1.5;
    CHECK_THROWS_AS(distill_wdd(shared_teacher(), spec, ow, sel, bad, small_config()), PreconditionError);
    SelectionResult unknown = sel;
    unknown.ids[0] = 99999;
    CHECK_THROWS_AS(distill_vanilla(shared_teacher(), spec, ow, unknown, small_config()), PreconditionError);
    TrainConfig odd = small_config();
    odd.epochs = 1;
    odd.batch_size = 6;  // ceil(16 / 6) = 3 steps
    CHECK_THROWS_AS(distill_vanilla(shared_teacher(), spec, ow, sel, odd), PreconditionError);
  }

  TEST_CASE("strategy names round trip") {
    for (auto s : {DistillStrategy::vanilla, DistillStrategy::wdd, DistillStrategy::wdpd}) {
      CHECK(parse_distill_strategy(distill_strategy_name(s)) == s);
    }
    CHECK(parse_kd_space("probs") == KdSpace::probs);
    CHECK_THROWS_AS(parse_distill_strategy("fancy"), PreconditionError);
  }
}
