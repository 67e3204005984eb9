// Minimal reverse-mode tape over dense tensors. Ops only record parents and a
// backward closure along paths that can reach a trainable leaf, so constants
// (teacher outputs, curated clips, frozen weights) cost nothing at backward
// time and are gradient-blocked by construction.
#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "vsr/tensor.hpp"

namespace vsr {

template <class T>
struct NodeT;

template <class T>
using VarT = std::shared_ptr<NodeT<T>>;

template <class T>
struct NodeT {
  TensorT<T> value;
  TensorT<T> grad;  // stays empty until backward reaches this node
  bool requires_grad = false;  // trainable leaf
  bool needs_grad = false;     // some leaf with requires_grad is reachable
  std::vector<VarT<T>> parents;
  std::function<void(NodeT<T>&)> backward_fn;

  TensorT<T>& ensure_grad() {
    if (grad.data.empty()) grad = TensorT<T>(value.shape);
    return grad;
  }
};

template <class T>
VarT<T> constant(TensorT<T> v) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(v);
  return n;
}

template <class T>
VarT<T> leaf(TensorT<T> v, bool requires_grad) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  n->needs_grad = requires_grad;
  return n;
}

// Detached copy of a var's value.
template <class T>
VarT<T> detach(const VarT<T>& v) {
  return constant(TensorT<T>(v->value));
}

template <class T>
VarT<T> make_op(TensorT<T> v, std::vector<VarT<T>> parents, std::function<void(NodeT<T>&)> bw) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(v);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p->needs_grad;
  if (needs) {
    n->needs_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  return n;
}

// Reverse sweep from a scalar root. Grads accumulate (+=) into every node on
// the needs_grad subgraph; call zero-grad on leaves between steps.
template <class T>
void backward(const VarT<T>& root) {
  if (root->value.numel() != 1) throw UsageError("backward root must be a scalar");
  if (!root->needs_grad) return;

  // iterative post-order topological sort over the needs_grad subgraph
  std::vector<NodeT<T>*> order;
  std::unordered_set<NodeT<T>*> seen;
  std::vector<std::pair<NodeT<T>*, size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      NodeT<T>* p = node->parents[idx++].get();
      if (p->needs_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad().data[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<T>* n = *it;
    if (n->backward_fn && !n->grad.data.empty()) n->backward_fn(*n);
  }
}

}  // namespace vsr
