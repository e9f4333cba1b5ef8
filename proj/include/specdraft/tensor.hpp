/* Copyright 2026 The specdraft Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Dense tensors with define-by-run reverse-mode differentiation.
//
// A Tensor<S> is a cheap handle to a node holding a row-major value matrix.
// Every operation whose inputs require gradients appends one record to the
// calling thread's Tape<S>; backward() replays the tape in reverse append
// order and then clears it, so each forward pass builds a fresh graph.
//
// Storage is always two-dimensional (rows = product of leading dims,
// cols = last dim). Rank-0 tensors are 1x1, rank-1 tensors are 1xN.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace specdraft {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct GraphError : std::logic_error {
  using std::logic_error::logic_error;
};

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

namespace detail {

template <typename S>
struct Node {
  Shape shape;
  RowMatrix<S> value;
  RowMatrix<S> grad;  // 0x0 while absent
  bool requires_grad = false;
  bool leaf = true;
  std::uint64_t generation = 0;
};

template <typename S>
using NodePtr = std::shared_ptr<Node<S>>;

inline std::pair<Index, Index> storage_dims(const Shape& shape) {
  if (shape.empty()) return {1, 1};
  if (shape.size() == 1) return {1, shape[0]};
  Index rows = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
  return {rows, shape.back()};
}

}  // namespace detail

template <typename S>
class Tape;

template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using Matrix = RowMatrix<S>;

  Tensor() = default;

  static Tensor from(Matrix value, bool requires_grad = false) {
    Shape shape{value.rows(), value.cols()};
    return from(std::move(value), std::move(shape), requires_grad);
  }

  static Tensor from(Matrix value, Shape shape, bool requires_grad) {
    auto [rows, cols] = detail::storage_dims(shape);
    if (rows != value.rows() || cols != value.cols()) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match storage " +
                       std::to_string(value.rows()) + "x" + std::to_string(value.cols()));
    }
    auto node = std::make_shared<detail::Node<S>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false) {
    return from(Matrix::Zero(rows, cols), requires_grad);
  }

  static Tensor scalar(S v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return from(std::move(m), Shape{}, false);
  }

  static Tensor row(std::span<const S> values) {
    Matrix m(1, static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) m(0, static_cast<Index>(i)) = values[i];
    return from(std::move(m), Shape{static_cast<Index>(values.size())}, false);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Index numel() const { return node_->value.size(); }

  const Matrix& value() const { return node_->value; }
  // Direct mutation is for optimizers and loaders; it bypasses the tape.
  Matrix& mutable_value() { return node_->value; }

  S item() const {
    if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    if (!node_->leaf) throw GraphError("set_requires_grad: only leaf tensors can change gradient mode");
    node_->requires_grad = on;
  }
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return node_->grad.size() != 0; }
  const Matrix& grad() const {
    if (!has_grad()) throw GraphError("grad: tensor has no gradient");
    return node_->grad;
  }
  void clear_grad() { node_->grad.resize(0, 0); }
  void zero_grad() { node_->grad.setZero(rows(), cols()); }

  // Constant copy sharing no graph linkage.
  Tensor detach() const { return from(node_->value, node_->shape, false); }

  const detail::NodePtr<S>& node() const { return node_; }
  explicit Tensor(detail::NodePtr<S> node) : node_(std::move(node)) {}

 private:
  detail::NodePtr<S> node_;
};

// Per-thread operation log. One tape per scalar type per thread.
template <typename S>
class Tape {
 public:
  using NodePtr = detail::NodePtr<S>;

  struct Op {
    const char* kind;
    std::vector<NodePtr> inputs;
    NodePtr output;
    std::function<void(const RowMatrix<S>&)> backward;
  };

  static Tape& current() {
    thread_local Tape tape;
    return tape;
  }

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }
  std::uint64_t generation() const { return generation_; }
  std::size_t size() const { return ops_.size(); }
  const std::vector<Op>& ops() const { return ops_; }

  // Drop the current graph without differentiating it.
  void reset() {
    ops_.clear();
    ++generation_;
  }

  template <typename Backward>
  Tensor<S> record(const char* kind, Shape shape, RowMatrix<S> value, const std::vector<Tensor<S>>& inputs,
                   Backward&& backward) {
    bool needs_grad = false;
    for (const auto& in : inputs) {
      if (!in.requires_grad()) continue;
      if (!in.is_leaf() && in.node()->generation != generation_) {
        throw GraphError(std::string(kind) + ": input belongs to a graph that was already consumed by backward");
      }
      needs_grad = true;
    }
    auto out = Tensor<S>::from(std::move(value), std::move(shape), false);
    if (!needs_grad || !recording_) return out;

    auto node = out.node();
    node->requires_grad = true;
    node->leaf = false;
    node->generation = generation_;
    Op op{kind, {}, node, std::forward<Backward>(backward)};
    op.inputs.reserve(inputs.size());
    for (const auto& in : inputs) op.inputs.push_back(in.node());
    ops_.push_back(std::move(op));
    return out;
  }

  void backward(const Tensor<S>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw GraphError("backward: loss must be a scalar, got shape " +
                       (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) throw GraphError("backward: loss does not depend on any tensor requiring grad");
    if (loss.is_leaf()) {
      auto& g = loss.node()->grad;
      if (g.size() == 0) g.setZero(1, 1);
      g(0, 0) += S(1);
      return;
    }
    if (loss.node()->generation != generation_) {
      throw GraphError("backward: graph already consumed; run the forward pass again");
    }

    // Leaves touched by the graph get a zero gradient even when the loss does
    // not depend on them.
    for (auto& op : ops_) {
      for (auto& in : op.inputs) {
        if (in->leaf && in->requires_grad && in->grad.size() == 0) in->grad.setZero(in->value.rows(), in->value.cols());
      }
      op.output->grad.resize(0, 0);
    }
    loss.node()->grad.setOnes(1, 1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (it->output->grad.size() == 0) continue;
      it->backward(it->output->grad);
    }
    for (auto& op : ops_) op.output->grad.resize(0, 0);
    reset();
  }

 private:
  std::vector<Op> ops_;
  std::uint64_t generation_ = 1;
  bool recording_ = true;
};

// Disables graph recording for the current thread while alive.
template <typename S>
class NoGradGuard {
 public:
  NoGradGuard() : previous_(Tape<S>::current().recording()) { Tape<S>::current().set_recording(false); }
  ~NoGradGuard() { Tape<S>::current().set_recording(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename S>
void backward(const Tensor<S>& loss) {
  Tape<S>::current().backward(loss);
}

namespace detail {

template <typename S, typename Expr>
void accumulate(const NodePtr<S>& node, const Expr& contribution) {
  if (!node->requires_grad) return;
  if (node->grad.size() == 0) {
    node->grad = contribution;
  } else {
    node->grad += contribution;
  }
}

template <typename S>
Tensor<S> record(const char* kind, Shape shape, RowMatrix<S> value, const std::vector<Tensor<S>>& inputs,
                 std::function<void(const RowMatrix<S>&)> backward) {
  return Tape<S>::current().record(kind, std::move(shape), std::move(value), inputs, std::move(backward));
}

inline Shape matrix_shape(Index rows, Index cols) { return Shape{rows, cols}; }

}  // namespace detail

}  // namespace specdraft
