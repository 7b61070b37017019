// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "octaseg/core/tensor.hpp"

namespace octaseg {

// Reverse-mode tape. Every differentiable operation produces a fresh node
// holding its value, the handles of its inputs, and a closure that routes the
// node's cotangent back to them. backward() walks the graph from one scalar
// root in reverse topological order.

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;

  explicit Node(Tensor<T> v) : value(std::move(v)) {}

  Tensor<T>& ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Scoped switch: with grads disabled, ops produce constant nodes and record
/// nothing. Used for evaluation and TTA.
class GradMode {
 public:
  static bool enabled() { return state(); }
  class NoGradGuard {
   public:
    NoGradGuard() : prev_(state()) { state() = false; }
    ~NoGradGuard() { state() = prev_; }

   private:
    bool prev_;
  };

 private:
  static bool& state() {
    thread_local bool enabled = true;
    return enabled;
  }
};

template <typename T>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<T>>;

  Var() = default;
  explicit Var(Tensor<T> value) : node_(std::make_shared<Node<T>>(std::move(value))) {}

  static Var leaf(Tensor<T> value) { return Var(std::move(value)); }
  static Var param(Tensor<T> value) {
    Var v(std::move(value));
    v.node_->requires_grad = true;
    return v;
  }

  bool defined() const { return node_ != nullptr; }
  NodePtr node() const { return node_; }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  long dim(int i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad() { return node_->ensure_grad(); }

  /// Constant copy of this value, cut off from the graph.
  Var detach() const { return Var(node_->value); }

 private:
  NodePtr node_;
};

/// Builds the result node for an op. `backward_fn` may be empty for
/// non-differentiable ops; it is dropped anyway when grads are off.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
               std::function<void(Node<T>&)> backward_fn) {
  Var<T> out(std::move(value));
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& p : parents)
      if (p && p->requires_grad) {
        needs = true;
        break;
      }
  }
  if (needs) {
    out.node()->requires_grad = true;
    out.node()->parents = std::move(parents);
    out.node()->backward_fn = std::move(backward_fn);
  }
  return out;
}

/// Accumulates `delta` into `dst`'s grad if it wants one.
template <typename T>
void accumulate(const std::shared_ptr<Node<T>>& dst, const Tensor<T>& delta) {
  if (!dst || !dst->requires_grad) return;
  dst->ensure_grad().flat() += delta.flat();
}

/// Reverse pass from a scalar root. Seeds d(root)/d(root) = 1 and runs every
/// recorded closure exactly once, in reverse topological order.
template <typename T>
void backward(const Var<T>& root) {
  require(root.value().numel() == 1, ErrorCode::Internal, "backward root must be scalar");
  using NodeT = Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  // Iterative post-order DFS; graphs run to a few thousand nodes.
  std::vector<std::pair<NodeT*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      NodeT* p = n->parents[idx++].get();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->backward_fn && n->grad.numel() == n->value.numel()) n->backward_fn(*n);
  }
}

/// Named trainable leaves, in registration order. Registration order is part
/// of the determinism contract (optimizer state and hashing iterate it).
template <typename T>
class ParamRegistry {
 public:
  Var<T> add(const std::string& name, Tensor<T> init) {
    require(!index_.count(name), ErrorCode::Internal, "duplicate param " + name);
    Var<T> v = Var<T>::param(std::move(init));
    index_[name] = params_.size();
    params_.push_back({name, v});
    return v;
  }

  struct Entry {
    std::string name;
    Var<T> var;
  };

  const std::vector<Entry>& entries() const { return params_; }
  size_t size() const { return params_.size(); }

  Var<T> find(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorCode::Internal, "param not found: " + name);
    return params_[it->second].var;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  long count_scalars() const {
    long n = 0;
    for (const auto& e : params_) n += e.var.value().numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : params_)
      if (e.var.node()->grad.numel()) e.var.node()->grad.set_zero();
  }

  std::uint64_t value_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& e : params_) {
      h = fnv1a(e.name.data(), e.name.size(), h);
      h = hash_tensor(e.var.value(), h);
    }
    return h;
  }

 private:
  std::vector<Entry> params_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace octaseg
