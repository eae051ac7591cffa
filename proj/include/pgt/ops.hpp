#pragma once

// Differentiable operators. Every op records a tape node when any input
// requires a gradient and is a pure function of its inputs otherwise.

#include <span>
#include <vector>

#include "pgt/kernels.hpp"
#include "pgt/tensor.hpp"

namespace pgt {

// weight is (outC, inC, kH, kW); bias is (1, outC, 1, 1) or undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              Padding padding = Padding::same);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor concat_channels(std::span<const Tensor> parts);
Tensor concat_channels(std::initializer_list<Tensor> parts);
Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t count);

// trunk + epsilon * branch
Tensor scaled_residual_add(const Tensor& trunk, const Tensor& branch,
                           double epsilon);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor square(const Tensor& x);

// Reductions to a (1,1,1,1) scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Elementwise clamp to [lo, hi]; gradient passes only strictly inside.
Tensor clamp(const Tensor& x, double lo, double hi);

}  // namespace pgt
