#pragma once

// Internal helpers shared by the op implementations.

#include <cmath>
#include <initializer_list>
#include <memory>
#include <utility>

#include "triplane/tensor.hpp"

namespace triplane::detail {

template <typename Real>
using NodePtr = std::shared_ptr<Node<Real>>;

template <typename Real>
void check_finite(const Tensor<Real>& t, const char* op) {
  for (Real v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite input value");
    }
  }
}

template <typename Real>
void check_inputs(std::initializer_list<const Tensor<Real>*> inputs, const char* op) {
  for (const Tensor<Real>* t : inputs) {
    if (t == nullptr || !t->defined()) continue;
    if (check_mode()) check_finite(*t, op);
  }
}

template <typename Real>
void require_defined(const Tensor<Real>& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

template <typename Real>
bool should_record(std::initializer_list<const Tensor<Real>*> inputs) {
  if (Tape<Real>::active() == nullptr) return false;
  for (const Tensor<Real>* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

/// Result node with an uninitialised value buffer.
template <typename Real>
NodePtr<Real> new_node(Shape shape, const char* op) {
  auto node = std::make_shared<Node<Real>>();
  const std::size_t n = shape_numel(shape);
  node->shape = std::move(shape);
  node->value = Storage<Real>(n);
  node->op = op;
  return node;
}

template <typename Real>
NodePtr<Real> new_zero_node(Shape shape, const char* op) {
  auto node = std::make_shared<Node<Real>>();
  const std::size_t n = shape_numel(shape);
  node->shape = std::move(shape);
  node->value = Storage<Real>(n, Real(0));
  node->op = op;
  return node;
}

/// Wraps a computed node; attaches `backward` and records it when `record`.
template <typename Real, typename Backward>
Tensor<Real> finish(NodePtr<Real> node, bool record, Backward&& backward) {
  if (record) {
    node->requires_grad = true;
    node->backward = std::forward<Backward>(backward);
    Tape<Real>::active()->record(node);
  }
  return Tensor<Real>(std::move(node));
}

/// Grad buffer of a parent if it wants one, else nullptr.
template <typename Real>
Real* grad_of(const NodePtr<Real>& parent) {
  return parent && parent->requires_grad ? parent->grad_buffer() : nullptr;
}

}  // namespace triplane::detail
