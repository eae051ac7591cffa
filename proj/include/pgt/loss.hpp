#pragma once

// Composite restoration loss. All terms take (B,1,H,W) tensors and return a
// (1,1,1,1) scalar that can be backpropagated.

#include "pgt/image.hpp"
#include "pgt/tensor.hpp"

namespace pgt {

struct LossWeights {
  double w_mse = 0.1;
  double w_lap = 0.2;
  double w_ssim = 0.7;
  double w_binary_task = 0.3;
  double w_main_task = 0.7;
};

enum class LaplacianBorder { zero_pad, interior };

Tensor mse_loss(const Tensor& x, const Tensor& y);
// Sum over pixels of squared Laplacian response differences, divided by the
// batch size only.
Tensor laplacian_loss(const Tensor& x, const Tensor& y,
                      LaplacianBorder border = LaplacianBorder::zero_pad);
// 1 - mean SSIM over valid windows of every image in the batch.
Tensor ssim_loss(const Tensor& x, const Tensor& y, const SsimConfig& cfg = {});

// Plain values of each weighted component, for telemetry.
struct LossTerms {
  double mse = 0.0;
  double lap = 0.0;
  double ssim = 0.0;  // the 1 - SSIM term
  double total = 0.0;
};

Tensor single_task_loss(const Tensor& pred, const Tensor& gt,
                        const LossWeights& w = {}, LossTerms* terms = nullptr);

struct TotalTerms {
  LossTerms binary;
  LossTerms main;
  double total = 0.0;
};

// w_binary_task * single(binary) + w_main_task * single(main). An undefined
// binary_pred means a single-task model: total is single(main).
Tensor total_loss(const Tensor& binary_pred, const Tensor& binary_gt,
                  const Tensor& main_pred, const Tensor& main_gt,
                  const LossWeights& w = {}, TotalTerms* terms = nullptr);

}  // namespace pgt
