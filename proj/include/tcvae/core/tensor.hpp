// Copyright 2026 The tcvae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage. Operations
// record themselves on the thread's active Tape (see TapeScope) whenever one
// of their inputs requires a gradient. Without an active tape, operations are
// evaluated eagerly and nothing is recorded, which is the inference path.

#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "tcvae/core/error.hpp"
#include "tcvae/core/shape.hpp"

namespace tcvae {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool recorded = false;
  // Reads this node's grad and accumulates into the inputs it captured.
  std::function<void(Node&)> propagate;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape.numel() != values.size()) {
      throw DimensionError("tensor of shape " + shape.str() + " needs " +
                           std::to_string(shape.numel()) + " values, got " +
                           std::to_string(values.size()));
    }
    node_->shape = shape;
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad.assign(node_->value.size(), 0.0);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(shape, 0.0, requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    return Tensor(shape, std::vector<double>(shape.numel(), value),
                  requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor(Shape{1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.rank(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  // Direct write access, for parameter initialization and optimizer updates.
  std::span<double> mutable_data() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  double item() const {
    if (numel() != 1) {
      throw ContractViolation("item() on tensor of shape " + shape().str());
    }
    return node_->value[0];
  }

  double at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) {
      throw DimensionError("index rank does not match tensor rank");
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) flat = flat * shape()[axis++] + i;
    return node_->value.at(flat);
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }

  // Accumulated gradient, same length as data(); empty if none was produced.
  std::span<const double> grad() const { return node_->grad; }

  void zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
  }

  // Copy of the values as a new leaf outside any graph.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Append-only record of operations in evaluation order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape() { clear(); }

  void record(std::shared_ptr<detail::Node> node) {
    node->recorded = true;
    nodes_.push_back(std::move(node));
  }

  std::size_t size() const { return nodes_.size(); }

  void clear() {
    for (auto& node : nodes_) {
      node->recorded = false;
      node->propagate = nullptr;
    }
    nodes_.clear();
  }

  // Populates gradients of every requires_grad leaf reachable from `loss`,
  // visiting nodes in strict reverse recording order, then clears the tape.
  void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw ContractViolation("backward() needs a scalar loss");
    }
    if (!loss.requires_grad()) {
      clear();
      return;
    }
    detail::Node* root = loss.node();
    if (root->propagate && !root->recorded) {
      throw ContractViolation("loss was not recorded on this tape");
    }
    root->grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      detail::Node& node = **it;
      if (!node.grad.empty() && node.propagate) node.propagate(node);
    }
    clear();
  }

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

namespace detail {

inline Tape*& active_tape() {
  thread_local Tape* tape = nullptr;
  return tape;
}

}  // namespace detail

// Makes `tape` the recording target for this thread while in scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(detail::active_tape()) {
    detail::active_tape() = &tape;
  }
  ~TapeScope() { detail::active_tape() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Disables recording for this thread while in scope.
class NoGradScope {
 public:
  NoGradScope() : previous_(detail::active_tape()) {
    detail::active_tape() = nullptr;
  }
  ~NoGradScope() { detail::active_tape() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Backward pass on the thread's active tape.
inline void backward(const Tensor& loss) {
  Tape* tape = detail::active_tape();
  if (tape == nullptr) {
    throw ContractViolation("backward() called without an active tape");
  }
  tape->backward(loss);
}

namespace detail {

inline bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

inline bool tracking(std::span<const Tensor> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

// Wraps a freshly computed value; when `track` is set the result joins the
// active tape with `propagate` as its backward rule.
inline Tensor make_result(Shape shape, std::vector<double> value, bool track,
                          std::function<void(Node&)> propagate) {
  Tensor out(shape, std::move(value), false);
  if (track) {
    out.node()->requires_grad = true;
    out.node()->propagate = std::move(propagate);
    active_tape()->record(out.node_ptr());
  }
  return out;
}

inline std::vector<double>& grad_of(const Tensor& t) {
  return t.node()->grad_buffer();
}

}  // namespace detail

}  // namespace tcvae
