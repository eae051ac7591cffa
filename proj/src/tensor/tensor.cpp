#include "pgt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "pgt/detail/autograd.hpp"

namespace pgt {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
         std::to_string(h) + "," + std::to_string(w) + ")";
}

void ensure_finite(std::span<const double> values, const char* where) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw TensorError(std::string("non-finite value in ") + where);
    }
  }
}

namespace {

void check_shape(const Shape& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw TensorError("negative dimension in shape " + s.str());
  }
}

detail::TensorImpl& require(const std::shared_ptr<detail::TensorImpl>& impl) {
  if (!impl) throw TensorError("use of undefined tensor");
  return *impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = shape;
  impl->data.assign(static_cast<std::size_t>(shape.size()), value);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> data,
                    bool requires_grad) {
  check_shape(shape);
  if (static_cast<std::int64_t>(data.size()) != shape.size()) {
    throw TensorError("data length " + std::to_string(data.size()) +
                      " does not match shape " + shape.str());
  }
  ensure_finite(data, "Tensor::from");
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1, 1, 1, 1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return require(impl_).shape; }

std::span<const double> Tensor::data() const { return require(impl_).data; }

std::span<double> Tensor::mutable_data() {
  auto& impl = require(impl_);
  if (impl.grad_fn) {
    throw TensorError("in-place mutation of a taped tensor");
  }
  return impl.data;
}

double Tensor::item() const {
  const auto& impl = require(impl_);
  if (impl.data.size() != 1) {
    throw TensorError("item() on non-scalar tensor " + impl.shape.str());
  }
  return impl.data[0];
}

double Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h,
                  std::int64_t w) const {
  const auto& s = shape();
  return data()[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

bool Tensor::requires_grad() const { return require(impl_).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  auto& impl = require(impl_);
  if (impl.grad_fn) throw TensorError("set_requires_grad on non-leaf tensor");
  impl.requires_grad = flag;
}

bool Tensor::is_leaf() const { return require(impl_).grad_fn == nullptr; }

bool Tensor::has_grad() const { return !require(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const { return require(impl_).grad; }

void Tensor::zero_grad() {
  auto& impl = require(impl_);
  impl.grad.assign(impl.data.size(), 0.0);
}

void Tensor::clear_grad() { require(impl_).grad.clear(); }

Tensor Tensor::detach() const {
  const auto& impl = require(impl_);
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = impl.shape;
  out->data = impl.data;
  return Tensor(std::move(out));
}

void Tensor::backward() {
  auto& root = require(impl_);
  if (root.data.size() != 1) {
    throw TensorError("backward() requires a scalar loss, got " +
                      root.shape.str());
  }
  if (!root.requires_grad) {
    throw TensorError("backward() on a tensor that does not require grad");
  }
  if (root.grad_fn && root.grad_fn->consumed) {
    throw TensorError("backward() called twice on a consumed tape");
  }

  // Iterative post-order DFS gives a topological order of the interior
  // tensors; reversing it visits each node exactly once after all its
  // consumers.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  if (root.grad_fn) {
    stack.emplace_back(&root, 0);
    seen.insert(&root);
  }
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    const auto& inputs = t->grad_fn->inputs;
    if (next < inputs.size()) {
      detail::TensorImpl* in = inputs[next++].get();
      if (in->grad_fn && in->requires_grad && seen.insert(in).second) {
        if (in->grad_fn->consumed) {
          throw TensorError("backward() through a consumed tape");
        }
        stack.emplace_back(in, 0);
      }
    } else {
      order.push_back(t);
      stack.pop_back();
    }
  }

  std::unordered_map<detail::TensorImpl*, std::vector<double>> interior;
  std::vector<double> root_grad(1, 1.0);
  if (!root.grad_fn) {
    if (root.grad.empty()) root.grad.assign(1, 0.0);
    root.grad[0] += 1.0;
    return;
  }
  interior.emplace(&root, std::move(root_grad));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* t = *it;
    auto node = t->grad_fn;
    auto found = interior.find(t);
    std::vector<double> out_grad;
    if (found != interior.end()) {
      out_grad = std::move(found->second);
      interior.erase(found);
    } else {
      out_grad.assign(t->data.size(), 0.0);
    }

    std::vector<std::span<double>> input_grads(node->inputs.size());
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      detail::TensorImpl* in = node->inputs[i].get();
      if (!in->requires_grad) continue;
      if (in->grad_fn) {
        auto [slot, inserted] = interior.try_emplace(in);
        if (inserted) slot->second.assign(in->data.size(), 0.0);
        input_grads[i] = slot->second;
      } else {
        if (in->grad.empty()) in->grad.assign(in->data.size(), 0.0);
        input_grads[i] = in->grad;
      }
    }
    node->backward(t->data, out_grad, input_grads);
    node->release();
    node->consumed = true;
  }
}

namespace detail {

bool any_requires_grad(std::span<const std::shared_ptr<TensorImpl>> inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const auto& in) { return in->requires_grad; });
}

Tensor make_result(Shape shape, std::vector<double> data,
                   std::shared_ptr<Node> node) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(data);
  if (node && any_requires_grad(node->inputs)) {
    impl->requires_grad = true;
    impl->grad_fn = std::move(node);
  }
  return Tensor(std::move(impl));
}

}  // namespace detail
}  // namespace pgt
