#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace remaster::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// One vertex of the computation graph. `backward` reads this node's grad and
// accumulates into the grads of `parents`.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

// Shared handle to a node: copying a Tensor aliases the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();
  /// Same values, no history.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph construction for its lifetime (inference, frozen models).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op output; history is attached only when grad mode is on and
/// some input requires grad.
Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                   std::function<void(Node&)> backward);

/// Reverse pass from a single-element tensor seeded with d(root)/d(root) = 1.
void backward(const Tensor& root);

}  // namespace remaster::nn
