#pragma once

#include "cmg/errors.hpp"
#include "cmg/numerics/tensor.hpp"

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

namespace cmg::numerics {

template <typename Scalar>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// lives and has not been reset.
template <typename Scalar>
class Var {
 public:
  Var() = default;

  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  const Matrix<Scalar>& grad() const { return tape_->grad(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape<Scalar>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<Scalar>;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Ordered record of primitive operations. Entries are appended in evaluation
// order, so every entry depends only on earlier ones and a single reverse
// sweep computes all adjoints.
template <typename Scalar>
class Tape {
 public:
  using MatrixType = Matrix<Scalar>;
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(MatrixType value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, nullptr});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  // Binds a tensor as a leaf. Its gradient is added into tensor.grad when
  // backward() runs.
  Var<Scalar> leaf(Tensor<Scalar>& tensor) {
    nodes_.push_back(Node{tensor.value, {}, tensor.requires_grad, nullptr,
                          tensor.requires_grad ? &tensor : nullptr});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  Var<Scalar> record(MatrixType value, std::initializer_list<Var<Scalar>> inputs,
                     BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      check_owner(in);
      needs = needs || nodes_[in.id()].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : nullptr,
                          nullptr});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  Var<Scalar> record(MatrixType value, const std::vector<Var<Scalar>>& inputs,
                     BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      check_owner(in);
      needs = needs || nodes_[in.id()].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : nullptr,
                          nullptr});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  void backward(const Var<Scalar>& loss) {
    check_owner(loss);
    if (backward_done_) {
      throw StateError("backward already ran on this tape; reset() before reuse");
    }
    const auto& lv = nodes_[loss.id()].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw DimensionError("backward requires a scalar loss, got " + std::to_string(lv.rows()) +
                           "x" + std::to_string(lv.cols()));
    }
    backward_done_ = true;
    nodes_[loss.id()].grad = MatrixType::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (node.grad.size() == 0) continue;
      if (node.backward) node.backward(*this, i);
      if (node.sink != nullptr) node.sink->grad += node.grad;
    }
  }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

  std::size_t size() const { return nodes_.size(); }
  const MatrixType& value(std::size_t id) const { return nodes_[id].value; }
  const MatrixType& grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Adds `g` into the adjoint of node `id`; a no-op for constants.
  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    Node& node = nodes_[id];
    if (!node.needs_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  // Zero-initialized adjoint for sparse updates (row scatter and the like).
  MatrixType* grad_buffer(std::size_t id) {
    Node& node = nodes_[id];
    if (!node.needs_grad) return nullptr;
    if (node.grad.size() == 0) node.grad = MatrixType::Zero(node.value.rows(), node.value.cols());
    return &node.grad;
  }

  void check_owner(const Var<Scalar>& v) const {
    if (v.tape() != this) throw StateError("variable belongs to a different tape");
  }

 private:
  struct Node {
    MatrixType value;
    MatrixType grad;
    bool needs_grad;
    BackwardFn backward;
    Tensor<Scalar>* sink;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace cmg::numerics
