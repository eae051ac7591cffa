#include <doctest.h>

#include "pgt/trainer.hpp"
#include "pgt/weights.hpp"
#include "support.hpp"

using namespace pgt;

namespace {

TrainingSet tiny_set(int n, std::uint64_t seed = 3) {
  std::vector<SampleTriplet> s;
  for (int i = 0; i < n; ++i) {
    s.push_back(generate_triplet(derive_seed(seed, SeedStream::sample, i), NoiseParams{}, {}, 24, 48));
  }
  return to_training_set(s);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.base_channels = 8;
  c.max_steps = 4;
  c.batch_size = 2;
  c.seed = 11;
  return c;
}

bool same_values(const Tensor& a, const Tensor& b) {
  return std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
}

}  // namespace

TEST_CASE("config text round trip and defaults") {
  const TrainConfig c = parse_config(
      "variant = edge  # small model\n"
      "base_channels = 16\n"
      "\n"
      "policy = all_positive\n"
      "max_steps = 12\n"
      "learning_rate = 0.0005\n");
  CHECK(c.variant == Variant::edge);
  CHECK(c.base_channels == 16);
  CHECK(c.policy == ScalingKind::all_positive);
  CHECK(c.alpha == 61.0);
  CHECK(c.learning_rate == 0.0005);
  CHECK(c.batch_size == 4);
  const TrainConfig r = parse_config(config_to_text(c));
  CHECK(config_to_text(r) == config_to_text(c));
  CHECK(parse_config("policy = proposed\n").alpha == 24.0);
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch_size = two\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch_size = 0\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("optimizer = sgd\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("policy = proposed\nalpha = 30\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("variant = edge\nphase1_steps = 3\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("crop_height = 10\n").validate(), ConfigError);
  CHECK_THROWS_AS(parse_config("variant = edge\nbase_channels = 9\n").validate(), ConfigError);
  try {
    parse_config("seed = 1\nwhat = 2\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("adam matches a hand computation") {
  Tensor w = Tensor::from({1, 1, 1, 2}, {0.5, -1.0}, true);
  Tensor frozen = Tensor::from({1, 1, 1, 1}, {2.0}, true);
  std::vector<ParamRef> params = {{"w", w, true}, {"f", frozen, false}};
  Adam adam(0.1, 0.9, 0.999, 1e-8);
  // loss = 3*w0 + w1^2 -> grad (3, -2)
  Tensor loss = add(sum(mul(w, Tensor::from({1, 1, 1, 2}, {3.0, 0.0}))),
                    sum(mul(square(w), Tensor::from({1, 1, 1, 2}, {0.0, 1.0}))));
  add(loss, sum(frozen)).backward();
  adam.step(params, {true, false});
  // First step: m_hat = g, v_hat = g^2 -> update lr * g / (|g| + eps).
  CHECK(w.data()[0] == doctest::Approx(0.5 - 0.1 * 3.0 / (3.0 + 1e-8)).epsilon(1e-15));
  CHECK(w.data()[1] == doctest::Approx(-1.0 + 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-15));
  CHECK(frozen.data()[0] == 2.0);
  CHECK(adam.state().t[0] == 1);
  CHECK(adam.state().t[1] == 0);

  // Second step with the same gradient: m = 0.19 g, v = 0.001999 g^2.
  w.zero_grad();
  sum(mul(w, Tensor::from({1, 1, 1, 2}, {3.0, 3.0}))).backward();
  const double before = w.data()[0];
  adam.step(params, {true, false});
  const double m = 0.9 * 0.3 + 0.1 * 3.0;
  const double v = 0.999 * 0.009 + 0.001 * 9.0;
  const double upd = 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.998001)) + 1e-8);
  CHECK(w.data()[0] == doctest::Approx(before - upd).epsilon(1e-12));
}

TEST_CASE("phase 1 leaves main-branch parameters bit-identical") {
  TrainConfig c = tiny_config();
  c.max_steps = 3;
  c.phase1_steps = 2;
  Trainer t(c, tiny_set(4));
  const ModelGraph init = t.graph().clone();
  t.step();
  t.step();
  const auto a = init.parameters(), b = t.graph().parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].phase1) {
      CHECK_FALSE(same_values(a[i].tensor, b[i].tensor));
    } else {
      CHECK(same_values(a[i].tensor, b[i].tensor));
    }
  }
  CHECK(t.trace().rows[0].phase == 1);
  CHECK(t.trace().rows[0].loss_main == 0.0);
  t.step();
  CHECK(t.trace().rows.back().phase == 2);
  const auto d = t.graph().parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK_FALSE(same_values(a[i].tensor, d[i].tensor));
}

TEST_CASE("trace rows decompose the total loss") {
  TrainConfig c = tiny_config();
  c.max_steps = 2;
  Trainer t(c, tiny_set(4));
  t.run();
  REQUIRE(t.trace().rows.size() == 2);
  for (const auto& r : t.trace().rows) {
    CHECK(r.loss_total ==
          doctest::Approx(0.1 * r.loss_mse + 0.2 * r.loss_lap + 0.7 * r.loss_ssim).epsilon(1e-12));
    CHECK(r.loss_total == doctest::Approx(0.3 * r.loss_binary + 0.7 * r.loss_main).epsilon(1e-12));
  }
}

TEST_CASE("training is deterministic for a seed") {
  TrainConfig c = tiny_config();
  c.crop_height = 8;
  c.crop_width = 12;
  Trainer a(c, tiny_set(5)), b(c, tiny_set(5));
  a.run();
  b.run();
  CHECK(trace_to_csv(a.trace()) == trace_to_csv(b.trace()));
  CHECK(save_weights(a.graph()) == save_weights(b.graph()));
  c.seed = 12;
  Trainer d(c, tiny_set(5));
  d.run();
  CHECK(trace_to_csv(a.trace()) != trace_to_csv(d.trace()));
}

TEST_CASE("batch plans cover each epoch once") {
  TrainConfig c = tiny_config();
  c.batch_size = 2;
  c.max_steps = 6;
  Trainer t(c, tiny_set(5));
  std::vector<int> seen(5, 0);
  for (int s = 0; s < 3; ++s) {
    for (auto i : t.plan(s).indices) ++seen[i];
  }
  for (int v : seen) CHECK(v == 1);
  CHECK(t.plan(4).indices == t.plan(4).indices);
}

TEST_CASE("resume from a checkpoint reproduces an uninterrupted run") {
  TrainConfig c = tiny_config();
  c.max_steps = 4;
  c.phase1_steps = 1;
  Trainer full(c, tiny_set(4));
  full.run();

  Trainer first(c, tiny_set(4));
  first.step();
  first.step();
  const auto bytes = save_checkpoint(first.checkpoint());
  Trainer second(c, tiny_set(4), load_checkpoint(bytes));
  CHECK(second.steps_done() == 2);
  second.run();
  CHECK(save_weights(second.graph()) == save_weights(full.graph()));
  LossTrace tail{"", std::vector<TraceRow>(full.trace().rows.begin() + 2, full.trace().rows.end())};
  CHECK(trace_to_csv(second.trace()) == trace_to_csv(tail));
}

TEST_CASE("checkpoint errors") {
  TrainConfig c = tiny_config();
  Trainer t(c, tiny_set(2));
  auto bytes = save_checkpoint(t.checkpoint());
  bytes.resize(bytes.size() - 5);
  CHECK_THROWS(load_checkpoint(bytes));
}

TEST_CASE("trace csv round trip and comparison") {
  LossTrace a{"a", {{0, 2, 1.5, 1, 2, 3, 0, 1.5}, {1, 2, 0.25, 0.1, 0.2, 0.3, 0, 0.25}}};
  LossTrace b{"b", {{0, 2, 2.0, 1, 2, 3, 0, 2.0}, {1, 2, 0.125, 0.1, 0.2, 0.3, 0, 0.125}}};
  const LossTrace r = trace_from_csv(trace_to_csv(a), "a");
  REQUIRE(r.rows.size() == 2);
  CHECK(trace_to_csv(r) == trace_to_csv(a));
  CHECK_THROWS_AS(trace_from_csv("step,loss\n0,1\n"), TrainError);

  const TraceComparison cmp = loss_trace_compare({a, b});
  CHECK(cmp.steps == std::vector<std::int64_t>{0, 1});
  CHECK(cmp.final_loss_order == std::vector<std::string>{"b", "a"});
  CHECK(cmp.summaries[0].auc == doctest::Approx((1.5 + 0.25) / 2));
  CHECK(cmp.table[1][1] == 0.125);
  CHECK_FALSE(format_comparison(cmp).empty());
  LossTrace c = b;
  c.rows.pop_back();
  CHECK_THROWS_AS(loss_trace_compare({a, c}), TrainError);
  CHECK_THROWS_AS(loss_trace_compare({a}), TrainError);
}

TEST_CASE("trainer rejects unusable data") {
  TrainConfig c = tiny_config();
  CHECK_THROWS_AS(Trainer(c, TrainingSet{}), TrainError);
  c.crop_height = 40;
  c.crop_width = 12;
  CHECK_THROWS_AS(Trainer(c, tiny_set(2)), TrainError);
}
