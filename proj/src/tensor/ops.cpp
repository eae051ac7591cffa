#include "pgt/ops.hpp"

#include <cmath>
#include <string>

#include "pgt/detail/autograd.hpp"

namespace pgt {

using detail::make_result;
using detail::Node;
using detail::TensorImpl;

ConvGeometry conv_geometry(const Shape& input, const Shape& weight,
                           Padding padding) {
  if (input.c != weight.c) {
    throw TensorError("conv2d channel mismatch: input " + input.str() +
                      " weight " + weight.str());
  }
  if (input.h <= 0 || input.w <= 0 || input.n <= 0) {
    throw TensorError("conv2d on empty input " + input.str());
  }
  if (weight.h <= 0 || weight.w <= 0 || weight.n <= 0) {
    throw TensorError("conv2d with empty kernel " + weight.str());
  }
  if (padding == Padding::same && (weight.h % 2 == 0 || weight.w % 2 == 0)) {
    throw TensorError("same padding needs odd kernel sizes, got " + weight.str());
  }
  ConvGeometry g{input, weight.n, weight.h, weight.w, padding};
  if (g.out_h() <= 0 || g.out_w() <= 0) {
    throw TensorError("conv2d kernel " + weight.str() + " larger than input " +
                      input.str());
  }
  return g;
}

namespace kernels {

void conv2d_backward(std::span<const double> in, const ConvGeometry& g,
                     std::span<const double> weight,
                     std::span<const double> out_grad,
                     std::span<double> in_grad, std::span<double> weight_grad,
                     std::span<double> bias_grad) {
  const std::int64_t opix = g.out_h() * g.out_w();
  const std::int64_t ipix = g.input.c * g.input.h * g.input.w;
  const std::int64_t K = g.patch();
  const bool pointwise = g.kh == 1 && g.kw == 1;
  std::vector<double> col(static_cast<std::size_t>(K * opix));
  Eigen::Map<const RowMatrix<double>> wm(weight.data(), g.out_channels, K);
  for (std::int64_t n = 0; n < g.input.n; ++n) {
    Eigen::Map<const RowMatrix<double>> gm(
        out_grad.data() + n * g.out_channels * opix, g.out_channels, opix);
    if (!bias_grad.empty()) {
      for (std::int64_t o = 0; o < g.out_channels; ++o) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < opix; ++j) acc += gm(o, j);
        bias_grad[static_cast<std::size_t>(o)] += acc;
      }
    }
    if (!weight_grad.empty()) {
      const double* src = in.data() + n * ipix;
      if (!pointwise) im2col(src, g, col.data());
      Eigen::Map<const RowMatrix<double>> cm(pointwise ? src : col.data(), K, opix);
      Eigen::Map<RowMatrix<double>> wg(weight_grad.data(), g.out_channels, K);
      multiply(wg, gm, cm.transpose(), true);
    }
    if (!in_grad.empty()) {
      if (pointwise) {
        Eigen::Map<RowMatrix<double>> ig(in_grad.data() + n * ipix, K, opix);
        multiply(ig, wm.transpose(), gm, true);
      } else {
        Eigen::Map<RowMatrix<double>> cg(col.data(), K, opix);
        multiply(cg, wm.transpose(), gm, false);
        col2im_add(col.data(), g, in_grad.data() + n * ipix);
      }
    }
  }
}

}  // namespace kernels

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw TensorError(std::string(op) + " shape mismatch: " + a.shape().str() +
                      " vs " + b.shape().str());
  }
}

struct ConvNode final : Node {
  ConvGeometry geom;
  bool has_bias = false;
  const char* name() const override { return "conv2d"; }
  void backward(std::span<const double>, std::span<const double> out_grad,
                std::vector<std::span<double>>& grads) override {
    std::span<double> bias_grad = has_bias ? grads[2] : std::span<double>{};
    kernels::conv2d_backward(inputs[0]->data, geom, inputs[1]->data, out_grad,
                             grads[0], grads[1], bias_grad);
  }
};

struct ReluNode final : Node {
  const char* name() const override { return "relu"; }
  void backward(std::span<const double> out, std::span<const double> g,
                std::vector<std::span<double>>& grads) override {
    auto& gi = grads[0];
    if (gi.empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (out[i] > 0.0) gi[i] += g[i];
    }
  }
};

struct SigmoidNode final : Node {
  const char* name() const override { return "sigmoid"; }
  void backward(std::span<const double> out, std::span<const double> g,
                std::vector<std::span<double>>& grads) override {
    auto& gi = grads[0];
    if (gi.empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * out[i] * (1.0 - out[i]);
  }
};

struct ConcatNode final : Node {
  std::vector<Shape> shapes;
  const char* name() const override { return "concat_channels"; }
  void backward(std::span<const double>, std::span<const double> g,
                std::vector<std::span<double>>& grads) override {
    const std::int64_t n = shapes[0].n;
    const std::int64_t plane = shapes[0].plane();
    std::int64_t total_c = 0;
    for (const auto& s : shapes) total_c += s.c;
    for (std::int64_t b = 0; b < n; ++b) {
      std::int64_t c_off = 0;
      for (std::size_t p = 0; p < shapes.size(); ++p) {
        const std::int64_t len = shapes[p].c * plane;
        if (!grads[p].empty()) {
          const double* src = g.data() + (b * total_c + c_off) * plane;
          double* dst = grads[p].data() + b * len;
          for (std::int64_t i = 0; i < len; ++i) dst[i] += src[i];
        }
        c_off += shapes[p].c;
      }
    }
  }
};

struct SliceNode final : Node {
  Shape in_shape;
  std::int64_t begin = 0;
  std::int64_t count = 0;
  const char* name() const override { return "slice_channels"; }
  void backward(std::span<const double>, std::span<const double> g,
                std::vector<std::span<double>>& grads) override {
    if (grads[0].empty()) return;
    const std::int64_t plane = in_shape.plane();
    for (std::int64_t b = 0; b < in_shape.n; ++b) {
      const double* src = g.data() + b * count * plane;
      double* dst = grads[0].data() + (b * in_shape.c + begin) * plane;
      for (std::int64_t i = 0; i < count * plane; ++i) dst[i] += src[i];
    }
  }
};

struct ScaledAddNode final : Node {
  double epsilon = 0.0;
  const char* name() const override { return "scaled_residual_add"; }
  void backward(std::span<const double>, std::span<const double> g,
                std::vector<std::span<double>>& grads) override {
    if (!grads[0].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += g[i];
    }
    if (!grads[1].empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) grads[1][i] += epsilon * g[i];
    }
  }
};

enum class Binary { add, sub, mul, div };

struct BinaryNode final : Node {
  Binary kind = Binary::add;
  const char* name() const override { return "binary"; }
  void backward(std::span<const double>, std::span<const double> g,
                std::vector<std::span<double>>& grads) override {
    const auto& a = inputs[0]->data;
    const auto& b = inputs[1]->data;
    auto& ga = grads[0];
    auto& gb = grads[1];
    const std::size_t n = g.size();
    switch (kind) {
      case Binary::add:
        if (!ga.empty()) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        if (!gb.empty()) for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        break;
      case Binary::sub:
        if (!ga.empty()) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        if (!gb.empty()) for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        break;
      case Binary::mul:
        if (!ga.empty()) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * b[i];
        if (!gb.empty()) for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * a[i];
        break;
      case Binary::div:
        if (!ga.empty()) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / b[i];
        if (!gb.empty()) {
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i] * a[i] / (b[i] * b[i]);
        }
        break;
    }
  }
};

struct AffineNode final : Node {
  double factor = 1.0;
  const char* name() const override { return "affine"; }
  void backward(std::span<const double>, std::span<const double> g,
                std::vector<std::span<double>>& grads) override {
    if (grads[0].empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += factor * g[i];
  }
};

struct SquareNode final : Node {
  const char* name() const override { return "square"; }
  void backward(std::span<const double>, std::span<const double> g,
                std::vector<std::span<double>>& grads) override {
    if (grads[0].empty()) return;
    const auto& x = inputs[0]->data;
    for (std::size_t i = 0; i < g.size(); ++i) grads[0][i] += 2.0 * x[i] * g[i];
  }
};

struct SumNode final : Node {
  double factor = 1.0;
  const char* name() const override { return "sum"; }
  void backward(std::span<const double>, std::span<const double> g,
                std::vector<std::span<double>>& grads) override {
    if (grads[0].empty()) return;
    const double v = factor * g[0];
    for (auto& x : grads[0]) x += v;
  }
};

struct ClampNode final : Node {
  double lo = 0.0;
  double hi = 1.0;
  const char* name() const override { return "clamp"; }
  void backward(std::span<const double>, std::span<const double> g,
                std::vector<std::span<double>>& grads) override {
    if (grads[0].empty()) return;
    const auto& x = inputs[0]->data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > lo && x[i] < hi) grads[0][i] += g[i];
    }
  }
};

template <class N>
std::shared_ptr<N> node_for(std::initializer_list<Tensor> ins) {
  auto node = std::make_shared<N>();
  for (const auto& t : ins) node->inputs.push_back(t.impl());
  return node;
}

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* op) {
  require_same_shape(a, b, op);
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (kind) {
      case Binary::add: out[i] = x[i] + y[i]; break;
      case Binary::sub: out[i] = x[i] - y[i]; break;
      case Binary::mul: out[i] = x[i] * y[i]; break;
      case Binary::div: out[i] = x[i] / y[i]; break;
    }
  }
  if (kind == Binary::div) ensure_finite(out, "div");
  auto node = node_for<BinaryNode>({a, b});
  node->kind = kind;
  return make_result(a.shape(), std::move(out), std::move(node));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              Padding padding) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), padding);
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != g.out_channels) {
    throw TensorError("conv2d bias " + bias.shape().str() + " does not match " +
                      std::to_string(g.out_channels) + " output channels");
  }
  std::vector<double> out(static_cast<std::size_t>(g.output().size()));
  kernels::conv2d_forward<double>(input.data(), g, weight.data(),
                                  has_bias ? bias.data() : std::span<const double>{},
                                  out);
  ensure_finite(out, "conv2d");
  auto node = std::make_shared<ConvNode>();
  node->inputs = {input.impl(), weight.impl()};
  if (has_bias) node->inputs.push_back(bias.impl());
  node->geom = g;
  node->has_bias = has_bias;
  return make_result(g.output(), std::move(out), std::move(node));
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  kernels::relu_inplace<double>(out);
  return make_result(x.shape(), std::move(out), node_for<ReluNode>({x}));
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  kernels::sigmoid_inplace<double>(out);
  return make_result(x.shape(), std::move(out), node_for<SigmoidNode>({x}));
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw TensorError("concat_channels of zero tensors");
  const Shape& first = parts[0].shape();
  std::vector<Shape> shapes;
  std::vector<std::span<const double>> views;
  Shape out_shape = first;
  out_shape.c = 0;
  auto node = std::make_shared<ConcatNode>();
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw TensorError("concat_channels mismatch: " + first.str() + " vs " + s.str());
    }
    shapes.push_back(s);
    views.push_back(p.data());
    out_shape.c += s.c;
    node->inputs.push_back(p.impl());
  }
  std::vector<double> out(static_cast<std::size_t>(out_shape.size()));
  kernels::concat_channels<double>(views, shapes, out);
  node->shapes = std::move(shapes);
  return make_result(out_shape, std::move(out), std::move(node));
}

Tensor concat_channels(std::initializer_list<Tensor> parts) {
  return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice_channels(const Tensor& x, std::int64_t begin, std::int64_t count) {
  const Shape& s = x.shape();
  if (begin < 0 || count < 0 || begin + count > s.c) {
    throw TensorError("slice_channels [" + std::to_string(begin) + ", +" +
                      std::to_string(count) + ") out of range for " + s.str());
  }
  const Shape out_shape{s.n, count, s.h, s.w};
  std::vector<double> out(static_cast<std::size_t>(out_shape.size()));
  const std::int64_t plane = s.plane();
  for (std::int64_t b = 0; b < s.n; ++b) {
    const double* src = x.data().data() + (b * s.c + begin) * plane;
    std::copy(src, src + count * plane, out.data() + b * count * plane);
  }
  auto node = node_for<SliceNode>({x});
  node->in_shape = s;
  node->begin = begin;
  node->count = count;
  return make_result(out_shape, std::move(out), std::move(node));
}

Tensor scaled_residual_add(const Tensor& trunk, const Tensor& branch,
                           double epsilon) {
  require_same_shape(trunk, branch, "scaled_residual_add");
  std::vector<double> out(static_cast<std::size_t>(trunk.size()));
  kernels::scaled_add<double>(trunk.data(), branch.data(), epsilon, out);
  auto node = node_for<ScaledAddNode>({trunk, branch});
  node->epsilon = epsilon;
  return make_result(trunk.shape(), std::move(out), std::move(node));
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::div, "div"); }

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  auto node = node_for<AffineNode>({x});
  node->factor = factor;
  return make_result(x.shape(), std::move(out), std::move(node));
}

Tensor add_scalar(const Tensor& x, double value) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v += value;
  return make_result(x.shape(), std::move(out), node_for<AffineNode>({x}));
}

Tensor square(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= v;
  return make_result(x.shape(), std::move(out), node_for<SquareNode>({x}));
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({1, 1, 1, 1}, {acc}, node_for<SumNode>({x}));
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw TensorError("mean of empty tensor");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  auto node = node_for<SumNode>({x});
  node->factor = inv;
  return make_result({1, 1, 1, 1}, {acc * inv}, std::move(node));
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = std::clamp(v, lo, hi);
  auto node = node_for<ClampNode>({x});
  node->lo = lo;
  node->hi = hi;
  return make_result(x.shape(), std::move(out), std::move(node));
}

}  // namespace pgt
