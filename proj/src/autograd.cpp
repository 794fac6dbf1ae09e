#include "herln/autograd.hpp"

#include <unordered_set>

namespace herln {

Var Var::constant(Tensor value, std::string op) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = std::move(op);
  return Var(std::move(node));
}

Var Var::leaf(Tensor value, std::string op) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = std::move(op);
  node->requires_grad = true;
  node->ensure_grad();
  return Var(std::move(node));
}

Var make_node(std::string op, Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward) {
  value.check_finite(op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = std::move(op);
  for (auto& p : parents) {
    node->requires_grad = node->requires_grad || p.requires_grad();
    node->parents.push_back(p.ptr());
  }
  if (node->requires_grad) {
    node->backward_fn = std::move(backward);
  } else {
    node->parents.clear();
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  Node& top = root.node();
  if (top.value.size() != 1) {
    throw NumericError("backward: root must be a scalar, got " +
                       shape_string(top.value.shape()));
  }
  if (top.consumed) {
    throw NumericError("backward: already ran from this root (op " + top.op +
                       ")");
  }
  top.consumed = true;
  if (!top.requires_grad) return;

  // Iterative post-order DFS gives a topological order without recursion
  // depth limits on long tapes.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&top, 0}};
  seen.insert(&top);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward_fn) n->grad = Tensor(n->value.shape());
  }
  top.grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward_fn) continue;
    for (auto& p : n->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    n->backward_fn(*n);
    for (auto& p : n->parents) {
      if (p->requires_grad) p->grad.check_finite("backward of " + n->op);
    }
  }
}

}  // namespace herln
