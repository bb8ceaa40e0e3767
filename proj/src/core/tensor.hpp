// Copyright (c) 2026 InfiNet contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "core/common.hpp"

namespace infinet {

// Toggle for NaN/Inf screening after forward and backward passes. On by
// default; the cost is a linear scan, negligible next to the convolutions.
inline bool& finite_checks() {
  static bool enabled = true;
  return enabled;
}

namespace detail {

template <typename T>
struct TensorNode {
  Shape4 shape;
  std::vector<T> data;
  std::vector<T> grad;  // sized lazily during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::function<void(TensorNode<T>&)> backward_op;  // empty for leaves

  bool is_leaf() const { return !backward_op; }

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

template <typename T>
inline void check_finite(const std::vector<T>& v, const char* what) {
  if (!finite_checks()) return;
  for (const T& x : v) {
    if (!std::isfinite(static_cast<double>(x)))
      fail(ErrorKind::Numeric, std::string("non-finite value detected in ") + what);
  }
}

}  // namespace detail

// Value-semantic handle to a node of the autodiff tape. Data is immutable
// once an op has produced it; only leaf tensors (parameters) may be updated
// in place between passes.
template <typename T>
class Tensor {
 public:
  using Node = detail::TensorNode<T>;

  Tensor() = default;

  static Tensor zeros(const Shape4& s, bool requires_grad = false) {
    return from_data(s, std::vector<T>(static_cast<size_t>(s.size()), T(0)), requires_grad);
  }

  static Tensor full(const Shape4& s, T value, bool requires_grad = false) {
    return from_data(s, std::vector<T>(static_cast<size_t>(s.size()), value), requires_grad);
  }

  static Tensor from_data(const Shape4& s, std::vector<T> data, bool requires_grad = false) {
    require(static_cast<int64_t>(data.size()) == s.size(), ErrorKind::Shape,
            "tensor data length " + std::to_string(data.size()) + " does not match shape " + s.str());
    auto n = std::make_shared<Node>();
    n->shape = s;
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  // Builds an op-output node. requires_grad is inherited from the parents.
  static Tensor from_op(const Shape4& s, std::vector<T> data, std::vector<Tensor> parents,
                        std::function<void(Node&)> backward_op, const char* op_name) {
    detail::check_finite(data, op_name);
    auto n = std::make_shared<Node>();
    n->shape = s;
    n->data = std::move(data);
    require(static_cast<int64_t>(n->data.size()) == s.size(), ErrorKind::Shape,
            std::string(op_name) + ": output buffer does not match shape " + s.str());
    for (auto& p : parents) {
      if (p.requires_grad()) n->requires_grad = true;
      n->parents.push_back(p.node_);
    }
    if (n->requires_grad) n->backward_op = std::move(backward_op);
    return Tensor(std::move(n));
  }

  bool valid() const { return static_cast<bool>(node_); }
  const Shape4& shape() const { return node_->shape; }
  int64_t numel() const { return node_->shape.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf(); }

  const std::vector<T>& data() const { return node_->data; }

  // In-place access for parameter initialization and optimizer updates.
  std::vector<T>& mutable_data() {
    require(node_->is_leaf(), ErrorKind::Config, "mutable_data on non-leaf tensor");
    return node_->data;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<T>& grad() const {
    require(has_grad(), ErrorKind::Config, "gradient not populated");
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  T value() const {
    require(numel() == 1, ErrorKind::Shape, "value() on non-scalar tensor " + shape().str());
    return node_->data[0];
  }

  T at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return node_->data[static_cast<size_t>(flat_index(shape(), n, c, h, w))];
  }

  // Reverse-mode pass from a scalar output. Accumulates into leaf .grad
  // buffers; intermediate grads live only as long as the tape.
  void backward() const {
    require(numel() == 1, ErrorKind::Shape, "backward() requires a scalar output");
    require(node_->requires_grad, ErrorKind::Config, "backward() on a graph with no trainable inputs");

    std::vector<Node*> order;
    topo_sort(order);

    node_->ensure_grad();
    node_->grad[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_op && !n->grad.empty()) n->backward_op(*n);
    }
    if (finite_checks()) {
      for (Node* n : order)
        if (!n->grad.empty()) detail::check_finite(n->grad, "backward gradient");
    }
    // Free intermediate gradient buffers; leaves keep theirs.
    for (Node* n : order)
      if (!n->is_leaf()) n->grad.clear();
  }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  void topo_sort(std::vector<Node*>& order) const {
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

namespace detail {

// Accumulate a locally computed gradient into a parent node.
template <typename T>
inline void add_grad(const std::shared_ptr<TensorNode<T>>& node, const std::vector<T>& contribution) {
  if (!node->requires_grad) return;
  node->ensure_grad();
  for (size_t i = 0; i < contribution.size(); ++i) node->grad[i] += contribution[i];
}

}  // namespace detail

}  // namespace infinet
