#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "herln/tensor.hpp"

namespace herln {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape. Leaves (parameters, constants) have
/// no parents; interior nodes own a closure that pushes `grad` into parents.
struct Node {
  Tensor value;
  Tensor grad;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;
  std::string op;
  bool requires_grad = false;
  bool consumed = false;  // set on a root once backward() ran from it

  void ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor(value.shape());
  }
};

/// Value handle into the computation graph.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  static Var constant(Tensor value, std::string op = "constant");
  static Var leaf(Tensor value, std::string op = "parameter");

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }

  Node& node() const { return *node_; }
  const NodePtr& ptr() const { return node_; }

 private:
  NodePtr node_;
};

/// Builds an interior node. `backward` receives the finished node so it can
/// read `grad` and the parents' values; it is skipped when no parent needs
/// gradients.
Var make_node(std::string op, Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward);

/// Accumulates d(root)/d(leaf) into every reachable leaf that requires
/// gradients. `root` must be a single-element tensor. Throws if called twice
/// on the same root.
void backward(const Var& root);

}  // namespace herln
