// Copyright 2026 The decoar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiable dense arrays.
//
// A Tensor is a shared handle to a graph node holding values, an optional
// gradient buffer and a closure that pushes the node's gradient into its
// inputs. Operations (see ops.hpp, nn_ops.hpp) record nodes only when at
// least one input requires a gradient, so inference runs build no graph.
// The graph is acyclic by construction: a node can only reference nodes
// that existed before it.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "decoar/core/error.hpp"

namespace decoar {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first touched
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    for (auto e : shape) {
      if (e == 0) throw UsageError("tensor extents must be positive: " + shape_str(shape));
    }
    if (values.size() != shape_numel(shape)) {
      throw UsageError("tensor value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> values() const { return node_->value; }
  std::span<T> mutable_values() { return node_->value; }
  const std::vector<T>& vec() const { return node_->value; }
  T item() const {
    if (numel() != 1) throw UsageError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }
  T operator[](std::size_t i) const { return node_->value[i]; }

  /// Gradient buffer; all zeros if nothing has been accumulated.
  std::span<const T> grad() const { return node_->ensure_grad(); }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  Node<T>& node() const { return *node_; }
  const NodePtr& node_ptr() const { return node_; }

  /// Builds a recorded node. The result requires a gradient iff any input does;
  /// otherwise the closure and input references are dropped.
  static Tensor make_result(Shape shape, std::vector<T> values,
                            std::vector<Tensor> inputs,
                            std::function<void(Node<T>&)> backward_fn) {
    Tensor out(std::move(shape), std::move(values));
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      out.node_->requires_grad = true;
      out.node_->inputs.reserve(inputs.size());
      for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
      out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
  }

  /// Copy of the values with no graph history.
  Tensor detach() const { return Tensor(shape(), node_->value); }

 private:
  NodePtr node_;
};

/// Accumulates d(root)/d(node) into the gradient buffer of every node reachable
/// from `root` that requires a gradient. Gradients add across paths, and leaf
/// gradients add across calls; clear parameter gradients before each step.
template <class T>
void backward(const Tensor<T>& root) {
  if (!root.defined() || root.numel() != 1) {
    throw UsageError("backward() requires a scalar root");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::unordered_set<Node<T>*> on_stack;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(&root.node(), 0);
  visited.insert(&root.node());
  on_stack.insert(&root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (!child->requires_grad) continue;
      if (on_stack.count(child)) throw UsageError("cycle in recorded graph");
      if (visited.insert(child).second) {
        on_stack.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      on_stack.erase(node);
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior buffers hold per-call adjoints; only leaves accumulate across calls.
  for (Node<T>* node : order) {
    if (node->backward_fn) node->grad.clear();
  }
  root.node().ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

}  // namespace decoar
