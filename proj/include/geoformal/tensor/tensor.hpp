#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "geoformal/error.hpp"
#include "geoformal/tensor/rng.hpp"

namespace geoformal::tensor {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t numel_of(const Shape& s);

class ShapeMismatch : public Error {
 public:
  ShapeMismatch(const std::string& op, const Shape& a, const Shape& b);
  explicit ShapeMismatch(const std::string& message) : Error(message) {}
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient.
///
/// A Tensor is a cheap shared handle. Tensors produced by operations are
/// immutable and remember how they were computed; calling backward() on a
/// scalar walks that record in reverse and accumulates gradients into every
/// leaf created with requires_grad.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false);
  static Tensor vector(std::vector<double> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  /// First and second extent of a 2-D tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient values; zeros when nothing has flowed in.
  std::vector<double> grad() const;
  void zero_grad();

  /// Backpropagates from this scalar. Intermediate gradients are reset first,
  /// leaf gradients accumulate.
  void backward() const;

  /// Same values, no history.
  Tensor detach() const;

  /// In-place access for leaves (parameters). Throws for computed tensors.
  std::span<double> mutable_data();

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace detail {

/// Creates an op result. History is recorded only when grad mode is on and
/// some input requires grad.
Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> backward);

}  // namespace detail

}  // namespace geoformal::tensor
