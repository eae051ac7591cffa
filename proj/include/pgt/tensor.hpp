#pragma once

// Rank-4 tensor with a reverse-mode gradient tape.
//
// A Tensor is a cheap shared handle. Operations on tensors that require
// gradients record a node on the tape; Tensor::backward() walks the tape in
// reverse topological order and accumulates into every leaf that asked for a
// gradient. All arithmetic is double precision and single-threaded.

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgt {

struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t size() const { return n * c * h * w; }
  std::int64_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
struct TensorImpl;
struct Node;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  // Throws TensorError when the data length disagrees with the shape or any
  // value is non-finite.
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t size() const { return shape().size(); }

  std::span<const double> data() const;
  // Mutable access is refused for tensors produced by a recorded op.
  std::span<double> mutable_data();
  double item() const;
  double at(std::int64_t n, std::int64_t c, std::int64_t h,
            std::int64_t w) const;

  bool requires_grad() const;
  // Only leaves may toggle gradient tracking.
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad();

  // Gradient of this scalar w.r.t. every requires_grad leaf on its tape.
  void backward();

  // Copy of values with no tape attached.
  Tensor detach() const;

  // Internal wiring used by ops.
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

void ensure_finite(std::span<const double> values, const char* where);

}  // namespace pgt
