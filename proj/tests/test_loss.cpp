#include <doctest.h>

#include "pgt/loss.hpp"
#include "pgt/ops.hpp"
#include "support.hpp"

using namespace pgt;
using pgt::testing::grad_check;
using pgt::testing::random_tensor;

namespace {

Tensor from_image(const GrayImage& img) {
  return Tensor::from({1, 1, img.height, img.width}, img.pixels);
}

GrayImage plane(const Tensor& t, std::int64_t n) {
  const auto s = t.shape();
  std::vector<double> v(t.data().begin() + n * s.plane(), t.data().begin() + (n + 1) * s.plane());
  return GrayImage(static_cast<int>(s.h), static_cast<int>(s.w), std::move(v));
}

}  // namespace

TEST_CASE("loss terms match the image metrics") {
  Rng rng(21);
  const Tensor x = random_tensor(rng, {3, 1, 12, 10}, 0, 1, false);
  const Tensor y = random_tensor(rng, {3, 1, 12, 10}, 0, 1, false);
  double m = 0, s = 0, lap = 0;
  for (int n = 0; n < 3; ++n) {
    const GrayImage a = plane(x, n), b = plane(y, n);
    m += mse(a, b) / 3;
    s += ssim(a, b) / 3;
    GrayImage d = a;
    for (std::size_t i = 0; i < d.size(); ++i) d.pixels[i] -= b.pixels[i];
    for (double v : laplacian_filter(d).pixels) lap += v * v / 3;
  }
  CHECK(mse_loss(x, y).item() == doctest::Approx(m).epsilon(1e-12));
  CHECK(ssim_loss(x, y).item() == doctest::Approx(1.0 - s).epsilon(1e-10));
  CHECK(laplacian_loss(x, y).item() == doctest::Approx(lap).epsilon(1e-12));
}

TEST_CASE("interior laplacian ignores the border ring") {
  Tensor x = Tensor::zeros({1, 1, 6, 6});
  x.mutable_data()[0] = 1.0;  // corner pixel only reaches border responses
  const Tensor y = Tensor::zeros({1, 1, 6, 6});
  CHECK(laplacian_loss(x, y, LaplacianBorder::interior).item() == doctest::Approx(1.0));
  CHECK(laplacian_loss(x, y).item() == doctest::Approx(64.0 + 3.0));
}

TEST_CASE("losses vanish at the fixpoint") {
  Rng rng(22);
  const Tensor gt = random_tensor(rng, {2, 1, 9, 11}, 0, 1, false);
  const Tensor bin = random_tensor(rng, {2, 1, 9, 11}, 0, 1, false);
  TotalTerms t;
  const double v = total_loss(gt, gt, bin, bin, {}, &t).item();
  CHECK(std::abs(v) <= 1e-9);
  CHECK(std::abs(t.main.ssim) <= 1e-9);
  CHECK(std::abs(single_task_loss(gt, gt).item()) <= 1e-9);
}

TEST_CASE("weighted sums use the configured weights") {
  Rng rng(23);
  for (int i = 0; i < 10; ++i) {
    const Tensor bp = random_tensor(rng, {2, 1, 8, 9}, 0, 1, false);
    const Tensor bg = random_tensor(rng, {2, 1, 8, 9}, 0, 1, false);
    const Tensor mp = random_tensor(rng, {2, 1, 8, 9}, 0, 1, false);
    const Tensor mg = random_tensor(rng, {2, 1, 8, 9}, 0, 1, false);
    const double m = mse_loss(mp, mg).item();
    const double l = laplacian_loss(mp, mg).item();
    const double s = ssim_loss(mp, mg).item();
    LossTerms lt;
    const double single = single_task_loss(mp, mg, {}, &lt).item();
    CHECK(std::abs(single - (0.1 * m + 0.2 * l + 0.7 * s)) <= 1e-9);
    CHECK(lt.mse == m);
    CHECK(lt.lap == l);
    CHECK(lt.ssim == s);
    const double b = single_task_loss(bp, bg).item();
    const double total = total_loss(bp, bg, mp, mg).item();
    CHECK(std::abs(total - (0.3 * b + 0.7 * single)) <= 1e-9);
    CHECK(std::abs(total_loss(Tensor{}, Tensor{}, mp, mg).item() - single) <= 1e-9);

    LossWeights w;
    w.w_mse = 1.0;
    w.w_lap = 0.0;
    w.w_ssim = 0.0;
    CHECK(single_task_loss(mp, mg, w).item() == doctest::Approx(m).epsilon(1e-14));
  }
}

TEST_CASE("loss preconditions") {
  const Tensor a = Tensor::zeros({1, 1, 8, 8});
  CHECK_THROWS_AS(mse_loss(a, Tensor::zeros({1, 1, 8, 9})), TensorError);
  CHECK_THROWS_AS(mse_loss(Tensor::zeros({1, 2, 8, 8}), Tensor::zeros({1, 2, 8, 8})), TensorError);
  CHECK_THROWS_AS(ssim_loss(Tensor::zeros({1, 1, 6, 8}), Tensor::zeros({1, 1, 6, 8})), TensorError);
}

// ---------------------------------------------------------------------------
// Finite-difference oracles.

TEST_CASE("gradient: mse and laplacian losses") {
  Rng rng(201);
  for (int inst = 0; inst < 20; ++inst) {
    const auto border = inst % 2 ? LaplacianBorder::interior : LaplacianBorder::zero_pad;
    std::vector<Tensor> in = {random_tensor(rng, {1, 1, 8, 8}, 0, 1),
                              random_tensor(rng, {1, 1, 8, 8}, 0, 1)};
    auto r1 = grad_check([](const std::vector<Tensor>& v) { return mse_loss(v[0], v[1]); }, in);
    CHECK(r1.rel_error < 1e-4);
    auto r2 = grad_check(
        [&](const std::vector<Tensor>& v) { return laplacian_loss(v[0], v[1], border); }, in);
    CHECK(r2.rel_error < 1e-4);
  }
}

TEST_CASE("gradient: ssim loss") {
  Rng rng(202);
  for (int inst = 0; inst < 20; ++inst) {
    const int h = 7 + static_cast<int>(rng.below(4));
    const int w = 7 + static_cast<int>(rng.below(4));
    std::vector<Tensor> in = {random_tensor(rng, {2, 1, h, w}, 0, 1),
                              random_tensor(rng, {2, 1, h, w}, 0, 1)};
    auto r = grad_check([](const std::vector<Tensor>& v) { return ssim_loss(v[0], v[1]); }, in);
    CHECK(r.rel_error < 1e-3);
  }
}

TEST_CASE("gradient: total loss through a four-block mini-graph") {
  Rng rng(203);
  for (int inst = 0; inst < 20; ++inst) {
    auto m = pgt::testing::make_mini_graph(rng);
    const auto r = grad_check(m.loss, m.params, 1e-6, 6, 1000 + inst);
    CHECK(r.rel_error < 1e-3);
  }
}
