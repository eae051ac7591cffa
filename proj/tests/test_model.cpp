#include <doctest.h>

#include <map>

#include "pgt/model.hpp"
#include "pgt/ops.hpp"
#include "pgt/weights.hpp"
#include "support.hpp"

using namespace pgt;
using pgt::testing::random_tensor;

TEST_CASE("epsilon schedule golden values") {
  const auto p = ScalingPolicy::proposed();
  CHECK(epsilon(p, 15) == 0.09);
  CHECK(epsilon(p, 30) == -0.06);
  CHECK(epsilon(p, 24) == -0.01);
  CHECK(epsilon(p, 23) > 0.0);
  for (int s = 1; s <= 84; ++s) {
    CHECK(epsilon(p, s) != 0.0);
    CHECK((epsilon(p, s) > 0.0) == (s <= 23));
  }
  CHECK_THROWS_AS(epsilon(p, 0), ModelError);
  for (double a : {61.0, 85.0}) {
    const auto q = ScalingPolicy::all_positive(a);
    for (int s = 1; s < a; ++s) CHECK(epsilon(q, s) > 0.0);
  }
  CHECK(epsilon(ScalingPolicy::all_positive(61), 60) == 0.01);
}

TEST_CASE("block-84 multitask layout") {
  const ModelGraph g = build({});
  REQUIRE(g.blocks.size() == 84);
  std::map<Segment, int> seg;
  int sigmoid = 0;
  for (const auto& b : g.blocks) {
    ++seg[b.branch];
    sigmoid += b.activation == Activation::sigmoid;
    CHECK(b.epsilon == epsilon(g.policy(), b.stage));
  }
  CHECK(seg[Segment::shared] == 24);
  CHECK(seg[Segment::binary] == 36);
  CHECK(seg[Segment::main] == 24);
  CHECK(sigmoid == 36);
  const double target = 6636994.0;
  CHECK(std::abs(g.parameter_count() - target) / target <= 0.10);
  std::int64_t sum = 0;
  for (const auto& l : g.breakdown()) sum += l.parameters;
  CHECK(sum == g.parameter_count());
}

TEST_CASE("phase-1 tags cover stem, shared and binary layers only") {
  const ModelGraph g = build({});
  for (const auto& c : g.convs) {
    CHECK(c.phase1 == (c.segment != Segment::main));
  }
}

TEST_CASE("edge layout and channel schedule") {
  BuildOptions o;
  o.variant = Variant::edge;
  o.base_channels = 32;
  const ModelGraph g = build(o);
  REQUIRE(g.blocks.size() == 32);
  for (const auto& b : g.blocks) {
    CHECK(b.activation == Activation::relu);
    CHECK(b.channels == (b.stage <= 28 ? 32 : 16));
  }
  CHECK(g.conv("main.reduce").out_channels == 16);
}

TEST_CASE("alpha 85 numbers the main branch after the binary branch") {
  const ModelGraph g =
      build(options_for(Variant::block84_multitask, ScalingPolicy::all_positive(85), 8));
  int first_main = 0, last_main = 0;
  for (const auto& b : g.blocks) {
    CHECK(b.epsilon > 0.0);
    if (b.branch == Segment::main) {
      if (!first_main) first_main = b.stage;
      last_main = b.stage;
    }
  }
  CHECK(first_main == 61);
  CHECK(last_main == 84);
}

TEST_CASE("initialization is seeded") {
  BuildOptions o;
  o.base_channels = 8;
  o.init_seed = 5;
  const ModelGraph a = build(o);
  const ModelGraph b = build(o);
  o.init_seed = 6;
  const ModelGraph c = build(o);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(),
                     pb[i].tensor.data().begin()));
    differs |= !std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(),
                           pc[i].tensor.data().begin());
  }
  CHECK(differs);
}

TEST_CASE("taped forward, double inference and float inference agree") {
  Rng rng(1);
  for (Variant v : {Variant::block84_multitask, Variant::block84_singletask, Variant::edge}) {
    BuildOptions o;
    o.variant = v;
    o.base_channels = 8;
    o.init_seed = 2;
    const ModelGraph g = build(o);
    const Tensor x = random_tensor(rng, {2, 1, 9, 13}, 0, 1, false);
    const ForwardOutputs a = forward(g, x);
    const ForwardOutputs b = infer(g, x);
    const ForwardOutputs c = infer_f32(g, x);
    REQUIRE(a.main.shape() == Shape{2, 1, 9, 13});
    CHECK(a.binary.defined() == (v == Variant::block84_multitask));
    for (std::int64_t i = 0; i < a.main.size(); ++i) {
      const double clamped = std::clamp(a.main.data()[i], 0.0, 1.0);
      CHECK(b.main.data()[i] == doctest::Approx(clamped).epsilon(1e-12));
      CHECK(c.main.data()[i] == doctest::Approx(b.main.data()[i]).epsilon(1e-4));
    }
    if (a.binary.defined()) {
      for (std::int64_t i = 0; i < a.binary.size(); ++i) {
        CHECK(a.binary.data()[i] > 0.0);
        CHECK(a.binary.data()[i] < 1.0);
      }
    }
  }
}

TEST_CASE("binary-only forward matches the full forward's binary output") {
  BuildOptions o;
  o.base_channels = 8;
  const ModelGraph g = build(o);
  Rng rng(4);
  const Tensor x = random_tensor(rng, {1, 1, 8, 8}, 0, 1, false);
  ForwardOptions fo;
  fo.binary_only = true;
  const ForwardOutputs a = forward(g, x, fo);
  const ForwardOutputs b = forward(g, x);
  CHECK_FALSE(a.main.defined());
  for (std::int64_t i = 0; i < a.binary.size(); ++i) CHECK(a.binary.data()[i] == b.binary.data()[i]);
}

TEST_CASE("forward rejects multi-channel input") {
  BuildOptions o;
  o.base_channels = 8;
  const ModelGraph g = build(o);
  CHECK_THROWS_AS(forward(g, Tensor::zeros({1, 2, 8, 8})), ModelError);
  CHECK_THROWS_AS(build(BuildOptions{Variant::edge, ScalingPolicy::proposed(), 4}), ModelError);
}

TEST_CASE("weight container round trip") {
  BuildOptions o;
  o.variant = Variant::edge;
  o.base_channels = 8;
  o.init_seed = 3;
  const ModelGraph g = build(o);
  Precision p{};
  const ModelGraph r = load_weights(save_weights(g), &p);
  CHECK(p == Precision::f64);
  const auto a = g.parameters(), b = r.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
  }

  const auto f32 = save_weights(g, Precision::f32);
  const ModelGraph r32 = load_weights(f32, &p);
  CHECK(p == Precision::f32);
  const auto c = r32.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::int64_t k = 0; k < a[i].tensor.size(); ++k) {
      CHECK(c[i].tensor.data()[k] == static_cast<double>(static_cast<float>(a[i].tensor.data()[k])));
    }
  }
}

TEST_CASE("weight container errors") {
  BuildOptions o;
  o.base_channels = 8;
  ModelGraph g = build(o);
  auto bytes = save_weights(g);
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
  CHECK_THROWS_AS(load_weights(cut), ModelError);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(load_weights(bad), ModelError);

  BuildOptions e = o;
  e.variant = Variant::edge;
  ModelGraph edge = build(e);
  CHECK_THROWS_AS(load_weights_into(edge, bytes), ModelError);
  ModelGraph same = build(o);
  CHECK_NOTHROW(load_weights_into(same, bytes));
}
