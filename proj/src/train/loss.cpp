#include "pgt/loss.hpp"

#include <string>

#include "pgt/ops.hpp"

namespace pgt {

namespace {

void check_pair(const Tensor& x, const Tensor& y, const char* what) {
  if (!x.defined() || !y.defined()) {
    throw TensorError(std::string(what) + ": undefined operand");
  }
  if (x.shape() != y.shape()) {
    throw TensorError(std::string(what) + ": shape mismatch " + x.shape().str() + " vs " +
                      y.shape().str());
  }
  if (x.shape().c != 1) {
    throw TensorError(std::string(what) + ": expects single-channel images, got " +
                      x.shape().str());
  }
}

Tensor laplacian_weight() {
  return Tensor::from({1, 1, 3, 3},
                      std::vector<double>(kLaplacianKernel.begin(), kLaplacianKernel.end()));
}

Tensor window_weight(const SsimConfig& cfg) {
  Kernel2D k = gaussian_kernel(cfg.window, cfg.stddev);
  return Tensor::from({1, 1, cfg.window, cfg.window}, std::move(k.values));
}

}  // namespace

Tensor mse_loss(const Tensor& x, const Tensor& y) {
  check_pair(x, y, "mse_loss");
  return mean(square(sub(x, y)));
}

Tensor laplacian_loss(const Tensor& x, const Tensor& y, LaplacianBorder border) {
  check_pair(x, y, "laplacian_loss");
  // The filter is linear, so filtering the difference once is enough.
  const Padding pad = border == LaplacianBorder::zero_pad ? Padding::same : Padding::valid;
  const Tensor r = conv2d(sub(x, y), laplacian_weight(), Tensor{}, pad);
  return scale(sum(square(r)), 1.0 / static_cast<double>(x.shape().n));
}

Tensor ssim_loss(const Tensor& x, const Tensor& y, const SsimConfig& cfg) {
  check_pair(x, y, "ssim_loss");
  if (x.shape().h < cfg.window || x.shape().w < cfg.window) {
    throw TensorError("ssim_loss: image smaller than the SSIM window");
  }
  const Tensor w = window_weight(cfg);
  auto blur = [&](const Tensor& t) { return conv2d(t, w, Tensor{}, Padding::valid); };
  const Tensor mx = blur(x);
  const Tensor my = blur(y);
  const Tensor exx = blur(square(x));
  const Tensor eyy = blur(square(y));
  const Tensor exy = blur(mul(x, y));
  const Tensor mxmy = mul(mx, my);
  const Tensor mx2 = square(mx);
  const Tensor my2 = square(my);
  const Tensor vx = sub(exx, mx2);
  const Tensor vy = sub(eyy, my2);
  const Tensor cxy = sub(exy, mxmy);
  const Tensor num = mul(add_scalar(scale(mxmy, 2.0), cfg.c1), add_scalar(scale(cxy, 2.0), cfg.c2));
  const Tensor den = mul(add_scalar(add(mx2, my2), cfg.c1), add_scalar(add(vx, vy), cfg.c2));
  return add_scalar(scale(mean(div(num, den)), -1.0), 1.0);
}

Tensor single_task_loss(const Tensor& pred, const Tensor& gt, const LossWeights& w,
                        LossTerms* terms) {
  check_pair(pred, gt, "single_task_loss");
  const Tensor m = mse_loss(pred, gt);
  const Tensor l = laplacian_loss(pred, gt);
  const Tensor s = ssim_loss(pred, gt);
  const Tensor out = add(add(scale(m, w.w_mse), scale(l, w.w_lap)), scale(s, w.w_ssim));
  if (terms) {
    terms->mse = m.item();
    terms->lap = l.item();
    terms->ssim = s.item();
    terms->total = out.item();
  }
  return out;
}

Tensor total_loss(const Tensor& binary_pred, const Tensor& binary_gt,
                  const Tensor& main_pred, const Tensor& main_gt, const LossWeights& w,
                  TotalTerms* terms) {
  TotalTerms local;
  const Tensor main = single_task_loss(main_pred, main_gt, w, &local.main);
  Tensor out;
  if (!binary_pred.defined()) {
    out = main;
  } else {
    if (binary_pred.shape().n != main_pred.shape().n) {
      throw TensorError("total_loss: binary and main batches differ");
    }
    const Tensor bin = single_task_loss(binary_pred, binary_gt, w, &local.binary);
    out = add(scale(bin, w.w_binary_task), scale(main, w.w_main_task));
  }
  local.total = out.item();
  if (terms) *terms = local;
  return out;
}

}  // namespace pgt
