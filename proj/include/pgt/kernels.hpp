#pragma once

// Raw NCHW kernels shared by the taped ops (double) and the tape-free
// inference path (float or double). Convolution is im2col + GEMM.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include "pgt/tensor.hpp"

namespace pgt {

enum class Padding { same, valid };

struct ConvGeometry {
  Shape input;
  std::int64_t out_channels = 0;
  std::int64_t kh = 0;
  std::int64_t kw = 0;
  Padding padding = Padding::same;

  std::int64_t pad_h() const { return padding == Padding::same ? kh / 2 : 0; }
  std::int64_t pad_w() const { return padding == Padding::same ? kw / 2 : 0; }
  std::int64_t out_h() const { return input.h + 2 * pad_h() - kh + 1; }
  std::int64_t out_w() const { return input.w + 2 * pad_w() - kw + 1; }
  Shape output() const { return {input.n, out_channels, out_h(), out_w()}; }
  std::int64_t patch() const { return input.c * kh * kw; }
};

// Throws TensorError on channel mismatch, even kernels with same padding, or
// an empty output.
ConvGeometry conv_geometry(const Shape& input, const Shape& weight,
                           Padding padding);

namespace kernels {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// dst (+)= a * b. Eigen switches to matrix-vector kernels when the result
// has a single row or column, and those peel loops according to pointer
// alignment, so the rounding would depend on where the heap put a buffer.
// Those shapes go through a plain loop instead; real GEMMs pack into aligned
// blocks and are stable.
template <class D, class A, class B>
void multiply(D&& dst, const A& a, const B& b, bool accumulate) {
  if (dst.rows() == 1 || dst.cols() == 1) {
    for (Eigen::Index i = 0; i < dst.rows(); ++i) {
      for (Eigen::Index j = 0; j < dst.cols(); ++j) {
        typename std::decay_t<D>::Scalar s = accumulate ? dst(i, j) : 0;
        for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
        dst(i, j) = s;
      }
    }
  } else if (accumulate) {
    dst.noalias() += a * b;
  } else {
    dst.noalias() = a * b;
  }
}

// col is (patch x out_h*out_w), row-major.
template <class T>
void im2col(const T* in, const ConvGeometry& g, T* col) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  const std::int64_t H = g.input.h, W = g.input.w;
  const std::int64_t ph = g.pad_h(), pw = g.pad_w();
  for (std::int64_t c = 0; c < g.input.c; ++c) {
    const T* plane = in + c * H * W;
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        T* row = col + ((c * g.kh + ky) * g.kw + kx) * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t iy = y + ky - ph;
          T* dst = row + y * ow;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = plane + iy * W;
          const std::int64_t x0 = std::max<std::int64_t>(0, pw - kx);
          const std::int64_t x1 = std::min<std::int64_t>(ow, W + pw - kx);
          std::fill(dst, dst + std::max<std::int64_t>(x0, 0), T(0));
          for (std::int64_t x = x0; x < x1; ++x) dst[x] = src[x + kx - pw];
          if (x1 < ow) std::fill(dst + std::max<std::int64_t>(x1, 0), dst + ow, T(0));
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* in_grad) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  const std::int64_t H = g.input.h, W = g.input.w;
  const std::int64_t ph = g.pad_h(), pw = g.pad_w();
  for (std::int64_t c = 0; c < g.input.c; ++c) {
    T* plane = in_grad + c * H * W;
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        const T* row = col + ((c * g.kh + ky) * g.kw + kx) * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t iy = y + ky - ph;
          if (iy < 0 || iy >= H) continue;
          const T* src = row + y * ow;
          T* dst = plane + iy * W;
          const std::int64_t x0 = std::max<std::int64_t>(0, pw - kx);
          const std::int64_t x1 = std::min<std::int64_t>(ow, W + pw - kx);
          for (std::int64_t x = x0; x < x1; ++x) dst[x + kx - pw] += src[x];
        }
      }
    }
  }
}

// out = weight * im2col(in) + bias, one sample at a time. `bias` may be empty.
template <class T>
void conv2d_forward(std::span<const T> in, const ConvGeometry& g,
                    std::span<const T> weight, std::span<const T> bias,
                    std::span<T> out) {
  const std::int64_t opix = g.out_h() * g.out_w();
  const std::int64_t ipix = g.input.c * g.input.h * g.input.w;
  const bool pointwise = g.kh == 1 && g.kw == 1;
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(g.patch() * opix));
  Eigen::Map<const RowMatrix<T>> wm(weight.data(), g.out_channels, g.patch());
  for (std::int64_t n = 0; n < g.input.n; ++n) {
    const T* src = in.data() + n * ipix;
    if (!pointwise) im2col(src, g, col.data());
    Eigen::Map<const RowMatrix<T>> cm(pointwise ? src : col.data(), g.patch(), opix);
    Eigen::Map<RowMatrix<T>> om(out.data() + n * g.out_channels * opix,
                                g.out_channels, opix);
    multiply(om, wm, cm, false);
    if (!bias.empty()) {
      for (std::int64_t o = 0; o < g.out_channels; ++o) {
        om.row(o).array() += bias[static_cast<std::size_t>(o)];
      }
    }
  }
}

// Accumulates gradients. Any of the output spans may be empty to skip it.
void conv2d_backward(std::span<const double> in, const ConvGeometry& g,
                     std::span<const double> weight,
                     std::span<const double> out_grad,
                     std::span<double> in_grad, std::span<double> weight_grad,
                     std::span<double> bias_grad);

template <class T>
inline T sigmoid(T x) {
  // Split by sign so exp never overflows.
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
void relu_inplace(std::span<T> x) {
  for (auto& v : x) v = v > T(0) ? v : T(0);
}

template <class T>
void sigmoid_inplace(std::span<T> x) {
  for (auto& v : x) v = sigmoid(v);
}

// trunk + epsilon * branch
template <class T>
void scaled_add(std::span<const T> trunk, std::span<const T> branch, T epsilon,
                std::span<T> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = trunk[i] + epsilon * branch[i];
}

// Concatenate along channels. `parts` are (data, shape) pairs that agree in
// n, h, w.
template <class T>
void concat_channels(std::span<const std::span<const T>> parts,
                     std::span<const Shape> shapes, std::span<T> out) {
  const std::int64_t n = shapes[0].n;
  const std::int64_t plane = shapes[0].plane();
  std::int64_t total_c = 0;
  for (const auto& s : shapes) total_c += s.c;
  for (std::int64_t b = 0; b < n; ++b) {
    std::int64_t c_off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const std::int64_t pc = shapes[p].c;
      const T* src = parts[p].data() + b * pc * plane;
      std::copy(src, src + pc * plane, out.data() + (b * total_c + c_off) * plane);
      c_off += pc;
    }
  }
}

}  // namespace kernels
}  // namespace pgt
