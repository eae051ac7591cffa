#pragma once

// Execution backends for run_dataflow().

#include <functional>
#include <initializer_list>
#include <map>
#include <vector>

#include "pgt/detail/dataflow.hpp"
#include "pgt/kernels.hpp"
#include "pgt/ops.hpp"

namespace pgt::detail {

// Records a tape through the differentiable ops.
struct TapedBackend {
  using Value = Tensor;

  Value conv(const ConvLayer& c, const Value& x) {
    return conv2d(x, c.weight, c.bias, Padding::same);
  }
  Value relu(const Value& x) { return pgt::relu(x); }
  Value sigmoid(const Value& x) { return pgt::sigmoid(x); }
  Value concat(std::initializer_list<Value> parts) { return concat_channels(parts); }
  Value residual(const Value& trunk, const Value& branch, double eps) {
    return scaled_residual_add(trunk, branch, eps);
  }
};

template <class T>
struct Plain {
  Shape shape;
  std::vector<T> data;
};

enum class ActivationSite { input, output };

// Tape-free forward in precision T. Weights are cast once per layer. The
// optional hook sees every conv's input and output activations and may
// rewrite them (used for fake-quantized inference and calibration).
template <class T>
class PlainBackend {
 public:
  using Value = Plain<T>;
  using Hook = std::function<void(const ConvLayer&, ActivationSite, std::vector<T>&)>;

  explicit PlainBackend(Hook hook = {}) : hook_(std::move(hook)) {}

  Value conv(const ConvLayer& c, const Value& x) {
    const auto& w = weights(c);
    const ConvGeometry g = conv_geometry(x.shape, c.weight.shape(), Padding::same);
    Value out{g.output(), std::vector<T>(static_cast<std::size_t>(g.output().size()))};
    if (hook_) {
      Value in = x;
      hook_(c, ActivationSite::input, in.data);
      kernels::conv2d_forward<T>(in.data, g, w.first, w.second, out.data);
      hook_(c, ActivationSite::output, out.data);
    } else {
      kernels::conv2d_forward<T>(x.data, g, w.first, w.second, out.data);
    }
    return out;
  }
  Value relu(Value x) {
    kernels::relu_inplace<T>(x.data);
    return x;
  }
  Value sigmoid(Value x) {
    kernels::sigmoid_inplace<T>(x.data);
    return x;
  }
  Value concat(std::initializer_list<Value> parts) {
    std::vector<std::span<const T>> views;
    std::vector<Shape> shapes;
    Shape s = parts.begin()->shape;
    s.c = 0;
    for (const auto& p : parts) {
      views.emplace_back(p.data);
      shapes.push_back(p.shape);
      s.c += p.shape.c;
    }
    Value out{s, std::vector<T>(static_cast<std::size_t>(s.size()))};
    kernels::concat_channels<T>(views, shapes, out.data);
    return out;
  }
  Value residual(const Value& trunk, const Value& branch, double eps) {
    Value out{trunk.shape, std::vector<T>(trunk.data.size())};
    kernels::scaled_add<T>(trunk.data, branch.data, static_cast<T>(eps), out.data);
    return out;
  }

 private:
  const std::pair<std::vector<T>, std::vector<T>>& weights(const ConvLayer& c) {
    auto it = cache_.find(&c);
    if (it == cache_.end()) {
      std::pair<std::vector<T>, std::vector<T>> w;
      for (double v : c.weight.data()) w.first.push_back(static_cast<T>(v));
      for (double v : c.bias.data()) w.second.push_back(static_cast<T>(v));
      it = cache_.emplace(&c, std::move(w)).first;
    }
    return it->second;
  }

  Hook hook_;
  std::map<const ConvLayer*, std::pair<std::vector<T>, std::vector<T>>> cache_;
};

template <class T>
Plain<T> to_plain(const Tensor& t) {
  Plain<T> p{t.shape(), {}};
  p.data.reserve(static_cast<std::size_t>(t.size()));
  for (double v : t.data()) p.data.push_back(static_cast<T>(v));
  return p;
}

template <class T>
Tensor from_plain(const Plain<T>& p, bool clamp01 = false) {
  std::vector<double> d;
  d.reserve(p.data.size());
  for (T v : p.data) {
    double x = static_cast<double>(v);
    if (clamp01) x = std::clamp(x, 0.0, 1.0);
    d.push_back(x);
  }
  return Tensor::from(p.shape, std::move(d));
}

template <class T>
ForwardOutputs run_plain(const ModelGraph& graph, const Tensor& noisy,
                         typename PlainBackend<T>::Hook hook = {}) {
  PlainBackend<T> be(std::move(hook));
  auto r = run_dataflow(graph, be, to_plain<T>(noisy), false);
  ForwardOutputs out;
  if (r.has_binary) out.binary = from_plain(r.binary);
  if (r.has_main) out.main = from_plain(r.main, true);
  return out;
}

}  // namespace pgt::detail
