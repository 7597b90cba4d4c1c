#include "causecast/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "causecast/error.hpp"

namespace causecast {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::vector<double>& TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    fail(ErrorCategory::dimension,
         "tensor shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) + " values");
  }
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::from_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                       std::function<void(TensorNode&)> backward) {
  Tensor out(std::move(shape), std::move(data));
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward = std::move(backward);
  }
  return out;
}

double Tensor::item() const {
  if (numel() != 1) fail(ErrorCategory::dimension, "item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) fail(ErrorCategory::dimension, "index rank mismatch");
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= node_->shape[axis]) fail(ErrorCategory::dimension, "index out of range");
    offset = offset * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[offset];
}

void Tensor::zero_grad() { node_->grad.clear(); }

void Tensor::backward() const {
  ComputationTape tape(*this);
  tape.backward();
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

ComputationTape::ComputationTape(const Tensor& root) : root_(root) {
  if (!root.defined() || root.numel() != 1) {
    fail(ErrorCategory::dimension, "backward requires a single-element root");
  }
  // Iterative post-order DFS; visiting parents in declaration order keeps the
  // ordering (and therefore accumulation order) deterministic.
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  if (root.requires_grad()) {
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
  }
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void ComputationTape::backward() {
  if (order_.empty()) return;
  TensorNode* root = root_.node();
  root->ensure_grad()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace causecast
