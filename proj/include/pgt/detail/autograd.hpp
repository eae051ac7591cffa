#pragma once

#include <memory>
#include <span>
#include <vector>

#include "pgt/tensor.hpp"

namespace pgt::detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty means absent
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

// One recorded operation. Nodes keep their inputs alive and whatever the
// backward rule needs; they never hold their own output.
struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  bool consumed = false;

  virtual ~Node() = default;
  virtual const char* name() const = 0;
  // Accumulate d(loss)/d(input_i) into input_grads[i] (pre-sized, or empty
  // for inputs that do not need a gradient).
  virtual void backward(std::span<const double> out_value,
                        std::span<const double> out_grad,
                        std::vector<std::span<double>>& input_grads) = 0;
  // Drop saved intermediates once backward has run.
  virtual void release() {}
};

bool any_requires_grad(std::span<const std::shared_ptr<TensorImpl>> inputs);

// Builds the output tensor; attaches `node` when any input needs gradients.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::shared_ptr<Node> node);

}  // namespace pgt::detail
