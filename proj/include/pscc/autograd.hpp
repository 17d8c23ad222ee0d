#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "pscc/error.hpp"
#include "pscc/tensor.hpp"

namespace pscc {

// Reverse-mode tape. Ops build a DAG of Nodes; backward() runs the recorded
// closures in reverse topological order. When grads are globally disabled
// (NoGradGuard) ops return detached nodes and the graph is never retained.
template <typename T>
class Node {
 public:
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backfn;

  void ensure_grad() {
    if (!grad.defined() || grad.numel() != value.numel()) grad = Tensor<T>(value.dims());
  }
  void zero_grad() {
    if (grad.defined() && grad.numel() == value.numel()) grad.fill(T(0));
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool grad_enabled() { return grad_mode_flag(); }

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
};

template <typename T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

// Builds an op node. `backfn` must accumulate (+=) into parent grads.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backfn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& p : parents)
      if (p && p->requires_grad) any = true;
    if (any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backfn = std::move(backfn);
    }
  }
  return n;
}

template <typename T>
void backward(const Var<T>& root) {
  if (!root) throw Error("backward: null root");
  if (root->value.numel() != 1) throw ShapeError("backward: root must be a scalar");
  if (!root->requires_grad) return;

  // Post-order DFS, then run in reverse.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx].get();
      ++idx;
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) {
    n->ensure_grad();
    n->zero_grad();
  }
  root->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backfn) n->backfn(*n);
  }
}

template <typename T>
inline void assert_finite(const Tensor<T>& t, const std::string& stage) {
  if (!t.all_finite()) throw NumericError("non-finite values at stage: " + stage);
}

}  // namespace pscc
