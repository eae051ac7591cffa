#include <doctest.h>

#include "pgt/ops.hpp"
#include "support.hpp"

using namespace pgt;
using pgt::testing::grad_check;
using pgt::testing::random_nonzero;
using pgt::testing::random_tensor;

TEST_CASE("tensor construction validates shape and values") {
  CHECK_THROWS_AS(Tensor::from({1, 1, 2, 2}, {1.0, 2.0, 3.0}), TensorError);
  CHECK_THROWS_AS(Tensor::from({1, 1, 1, 2}, {1.0, NAN}), TensorError);
  CHECK_THROWS_AS(Tensor::from({1, 1, 1, 1}, {INFINITY}), TensorError);
  const Tensor t = Tensor::from({1, 2, 1, 2}, {1, 2, 3, 4});
  CHECK(t.at(0, 1, 0, 1) == 4.0);
  CHECK(t.size() == 4);
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("backward accumulates into leaves and consumes the tape") {
  Tensor a = Tensor::from({1, 1, 1, 3}, {1, 2, 3}, true);
  Tensor b = Tensor::from({1, 1, 1, 3}, {4, 5, 6}, true);
  Tensor loss = sum(mul(a, b));
  loss.backward();
  REQUIRE(a.has_grad());
  CHECK(a.grad()[0] == 4.0);
  CHECK(b.grad()[2] == 3.0);
  CHECK_THROWS_AS(loss.backward(), TensorError);

  // A second graph adds to the existing leaf gradient.
  Tensor l2 = sum(a);
  l2.backward();
  CHECK(a.grad()[0] == 5.0);
}

TEST_CASE("backward on a non-scalar or a constant is refused") {
  Tensor a = Tensor::from({1, 1, 1, 2}, {1, 2}, true);
  CHECK_THROWS_AS(square(a).backward(), TensorError);
  Tensor c = Tensor::from({1, 1, 1, 2}, {1, 2});
  CHECK_THROWS_AS(sum(c).backward(), TensorError);
}

TEST_CASE("shared subexpressions receive the summed gradient") {
  Tensor x = Tensor::from({1, 1, 1, 1}, {3.0}, true);
  Tensor y = square(x);
  Tensor loss = sum(add(y, mul(y, x)));  // x^2 + x^3
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2 * 3.0 + 3 * 9.0));
}

TEST_CASE("ops without gradient inputs record no tape") {
  Tensor a = Tensor::from({1, 1, 1, 2}, {1, 2});
  Tensor r = relu(a);
  CHECK(r.is_leaf());
  CHECK_FALSE(r.requires_grad());
}

TEST_CASE("taped tensors refuse in-place mutation") {
  Tensor a = Tensor::from({1, 1, 1, 2}, {1, 2}, true);
  Tensor r = scale(a, 2.0);
  CHECK_THROWS_AS(r.mutable_data(), TensorError);
  CHECK_THROWS_AS(r.set_requires_grad(false), TensorError);
}

TEST_CASE("conv2d forward matches a direct loop") {
  Rng rng(11);
  for (auto pad : {Padding::same, Padding::valid}) {
    const Tensor x = random_tensor(rng, {2, 3, 6, 5}, -1, 1, false);
    const Tensor w = random_tensor(rng, {4, 3, 3, 3}, -1, 1, false);
    const Tensor b = random_tensor(rng, {1, 4, 1, 1}, -1, 1, false);
    const Tensor y = conv2d(x, w, b, pad);
    const int p = pad == Padding::same ? 1 : 0;
    const int oh = pad == Padding::same ? 6 : 4;
    const int ow = pad == Padding::same ? 5 : 3;
    REQUIRE(y.shape() == Shape{2, 4, oh, ow});
    for (int n = 0; n < 2; ++n) {
      for (int o = 0; o < 4; ++o) {
        for (int i = 0; i < oh; ++i) {
          for (int j = 0; j < ow; ++j) {
            double s = b.at(0, o, 0, 0);
            for (int c = 0; c < 3; ++c) {
              for (int ki = 0; ki < 3; ++ki) {
                for (int kj = 0; kj < 3; ++kj) {
                  const int yy = i + ki - p, xx = j + kj - p;
                  if (yy < 0 || yy >= 6 || xx < 0 || xx >= 5) continue;
                  s += w.at(o, c, ki, kj) * x.at(n, c, yy, xx);
                }
              }
            }
            CHECK(y.at(n, o, i, j) == doctest::Approx(s).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("conv2d rejects bad geometry") {
  const Tensor x = Tensor::zeros({1, 2, 4, 4});
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 3, 3, 3}), Tensor{}), TensorError);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 2, 2, 2}), Tensor{}, Padding::same), TensorError);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 2, 5, 5}), Tensor{}, Padding::valid), TensorError);
}

TEST_CASE("scaled_residual_add examples") {
  const Tensor t = Tensor::from({1, 1, 1, 2}, {1.5, -2.0});
  const Tensor x = Tensor::from({1, 1, 1, 2}, {3.0, 4.0});
  const Tensor same = scaled_residual_add(t, x, 0.0);
  CHECK(same.data()[0] == 1.5);
  CHECK(same.data()[1] == -2.0);
  const Tensor z = scaled_residual_add(Tensor::zeros({1, 1, 1, 2}), x, -0.06);
  CHECK(z.data()[0] == -0.06 * 3.0);
  CHECK(z.data()[1] == -0.06 * 4.0);
}

TEST_CASE("concat and slice are inverse") {
  Rng rng(5);
  const Tensor a = random_tensor(rng, {2, 2, 3, 3}, -1, 1, false);
  const Tensor b = random_tensor(rng, {2, 1, 3, 3}, -1, 1, false);
  const Tensor c = concat_channels({a, b});
  CHECK(c.shape() == Shape{2, 3, 3, 3});
  const Tensor back = slice_channels(c, 2, 1);
  for (std::int64_t i = 0; i < b.size(); ++i) CHECK(back.data()[i] == b.data()[i]);
  CHECK_THROWS_AS(concat_channels({a, Tensor::zeros({2, 1, 3, 4})}), TensorError);
}

// ---------------------------------------------------------------------------
// Finite-difference oracles, 20 random instances per op.

TEST_CASE("gradient: conv2d (same and valid, with bias)") {
  Rng rng(101);
  for (int inst = 0; inst < 20; ++inst) {
    const int cin = 1 + static_cast<int>(rng.below(3));
    const int cout = 1 + static_cast<int>(rng.below(3));
    const auto pad = inst % 2 ? Padding::same : Padding::valid;
    std::vector<Tensor> in = {random_tensor(rng, {2, cin, 5, 6}, -1, 1),
                              random_tensor(rng, {cout, cin, 3, 3}, -1, 1),
                              random_tensor(rng, {1, cout, 1, 1}, -1, 1)};
    const Tensor probe = random_tensor(rng, conv2d(in[0], in[1], in[2], pad).shape(), -1, 1, false);
    const auto r = grad_check(
        [&](const std::vector<Tensor>& v) { return sum(mul(conv2d(v[0], v[1], v[2], pad), probe)); },
        in);
    CHECK(r.rel_error < 1e-4);
  }
}

TEST_CASE("gradient: relu and sigmoid") {
  Rng rng(102);
  for (int inst = 0; inst < 20; ++inst) {
    std::vector<Tensor> in = {random_nonzero(rng, {1, 2, 3, 4}, 0.05)};
    const Tensor probe = random_tensor(rng, {1, 2, 3, 4}, -1, 1, false);
    auto r1 = grad_check([&](const std::vector<Tensor>& v) { return sum(mul(relu(v[0]), probe)); }, in);
    CHECK(r1.rel_error < 1e-4);
    std::vector<Tensor> in2 = {random_tensor(rng, {1, 2, 3, 4}, -6, 6)};
    auto r2 = grad_check([&](const std::vector<Tensor>& v) { return sum(mul(sigmoid(v[0]), probe)); }, in2);
    CHECK(r2.rel_error < 1e-4);
  }
}

TEST_CASE("gradient: concat, slice and scaled residual add") {
  Rng rng(103);
  for (int inst = 0; inst < 20; ++inst) {
    std::vector<Tensor> in = {random_tensor(rng, {2, 2, 3, 3}, -1, 1),
                              random_tensor(rng, {2, 1, 3, 3}, -1, 1)};
    const Tensor probe = random_tensor(rng, {2, 3, 3, 3}, -1, 1, false);
    auto r = grad_check(
        [&](const std::vector<Tensor>& v) { return sum(mul(concat_channels({v[0], v[1]}), probe)); }, in);
    CHECK(r.rel_error < 1e-4);

    const Tensor p2 = random_tensor(rng, {2, 1, 3, 3}, -1, 1, false);
    auto rs = grad_check(
        [&](const std::vector<Tensor>& v) { return sum(mul(slice_channels(v[0], 1, 1), p2)); }, in);
    CHECK(rs.rel_error < 1e-4);

    const double eps = rng.uniform(-0.3, 0.3);
    std::vector<Tensor> in2 = {random_tensor(rng, {1, 2, 3, 3}, -1, 1),
                               random_tensor(rng, {1, 2, 3, 3}, -1, 1)};
    const Tensor p3 = random_tensor(rng, {1, 2, 3, 3}, -1, 1, false);
    auto r2 = grad_check(
        [&](const std::vector<Tensor>& v) { return sum(mul(scaled_residual_add(v[0], v[1], eps), p3)); },
        in2);
    CHECK(r2.rel_error < 1e-4);
  }
}

TEST_CASE("gradient: elementwise arithmetic and reductions") {
  Rng rng(104);
  for (int inst = 0; inst < 20; ++inst) {
    std::vector<Tensor> in = {random_tensor(rng, {1, 1, 3, 4}, -1, 1),
                              random_tensor(rng, {1, 1, 3, 4}, 0.5, 2)};
    auto r = grad_check(
        [&](const std::vector<Tensor>& v) {
          const Tensor a = div(add(square(v[0]), scale(v[1], 0.3)), v[1]);
          return add(mean(mul(a, sub(v[0], v[1]))), sum(add_scalar(v[0], 0.5)));
        },
        in);
    CHECK(r.rel_error < 1e-4);
  }
}

TEST_CASE("clamp passes gradient only strictly inside") {
  Tensor x = Tensor::from({1, 1, 1, 3}, {-0.5, 0.5, 1.5}, true);
  sum(clamp(x, 0.0, 1.0)).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);
}
