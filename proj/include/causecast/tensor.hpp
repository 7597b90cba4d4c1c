#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "causecast/random.hpp"

namespace causecast {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until an adjoint reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(TensorNode&)> backward;

  std::vector<double>& ensure_grad();
};

// Dense row-major float64 array with reverse-mode gradient support.
// Copies share the underlying node (handle semantics, like a shared buffer).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  // Result of a differentiable op. Parents and the adjoint rule are dropped when
  // no parent requires a gradient.
  static Tensor from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                        std::function<void(TensorNode&)> backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> values() const { return node_->data; }
  // Direct write access, meant for leaves (optimizer updates, checkpoint loads).
  std::span<double> values_mut() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> grad_mut() { return node_->ensure_grad(); }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  void zero_grad();
  // Seeds d(this)/d(this) = 1 and propagates adjoints; this must hold one element.
  void backward() const;
  Tensor detach() const;

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Reverse topological record of the operations reachable from a root.
// Replaying it twice over the same graph yields bit-identical gradients.
class ComputationTape {
 public:
  explicit ComputationTape(const Tensor& root);

  void backward();
  std::size_t size() const { return order_.size(); }

 private:
  Tensor root_;
  std::vector<TensorNode*> order_;  // parents before children
};

}  // namespace causecast
