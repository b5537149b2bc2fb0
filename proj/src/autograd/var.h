// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation over dense row-major
// tensors. A Var is a shared handle to a graph node; ops create new nodes
// that remember their parents and a backward closure. Calling Backward() on
// a scalar walks the graph in reverse creation order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace stepsep::ag {

using Shape = std::vector<int64_t>;

inline constexpr std::size_t kBufferAlignment = 64;

// Cache-line aligned storage. Vectorized reductions peel by address, so a
// fixed alignment keeps their summation order, and results, reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kBufferAlignment)));
  }
  void deallocate(T* p, std::size_t) {
    ::operator delete(p, std::align_val_t(kBufferAlignment));
  }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

int64_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;
  bool requires_grad = false;
  uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  Buffer<T>& EnsureGrad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

// Disables graph recording for ops created while alive (inference paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();
uint64_t NextSequence();

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var Constant(Shape shape, Buffer<T> value);
  static Var Constant(Shape shape, std::span<const T> value);
  static Var Zeros(Shape shape);
  // Leaf that accumulates gradients regardless of NoGradGuard.
  static Var Parameter(Shape shape, Buffer<T> value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int axis) const;
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> value() const { return node_->value; }
  std::span<T> mutable_value() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->EnsureGrad(); }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void ZeroGrad() { node_->grad.clear(); }
  T item() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Builds an op result. Parents and the closure are only kept when recording
// is enabled and at least one parent needs a gradient.
template <typename T>
Var<T> MakeResult(Shape shape, Buffer<T> value,
                  const std::vector<Var<T>>& parents,
                  std::function<void(Node<T>&)> backward);

// Seeds d(root)/d(root) = 1 and propagates. Root must hold one element.
// Intermediate closures are released afterwards; parameter grads remain.
template <typename T>
void Backward(const Var<T>& root);

}  // namespace stepsep::ag
