// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "autograd/var.h"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "common/error.h"

namespace stepsep::ag {

namespace {
thread_local bool g_grad_enabled = true;
thread_local uint64_t g_sequence = 0;
}  // namespace

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool GradEnabled() { return g_grad_enabled; }
uint64_t NextSequence() { return ++g_sequence; }

template <typename T>
Var<T> Var<T>::Constant(Shape shape, Buffer<T> value) {
  if (NumElements(shape) != static_cast<int64_t>(value.size())) {
    throw ShapeError("constant of shape " + ShapeString(shape) + " given " +
                     std::to_string(value.size()) + " values");
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->seq = NextSequence();
  return Var(std::move(node));
}

template <typename T>
Var<T> Var<T>::Constant(Shape shape, std::span<const T> value) {
  return Constant(std::move(shape), Buffer<T>(value.begin(), value.end()));
}

template <typename T>
Var<T> Var<T>::Zeros(Shape shape) {
  const auto n = static_cast<size_t>(NumElements(shape));
  return Constant(std::move(shape), Buffer<T>(n, T(0)));
}

template <typename T>
Var<T> Var<T>::Parameter(Shape shape, Buffer<T> value) {
  Var v = Constant(std::move(shape), std::move(value));
  v.node_->requires_grad = true;
  return v;
}

template <typename T>
int64_t Var<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("axis out of range");
  return node_->shape[axis];
}

template <typename T>
T Var<T>::item() const {
  if (node_->value.size() != 1) throw ShapeError("item() on non-scalar");
  return node_->value[0];
}

template <typename T>
Var<T> MakeResult(Shape shape, Buffer<T> value,
                  const std::vector<Var<T>>& parents,
                  std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->seq = NextSequence();
  if (GradEnabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node_ptr());
      node->backward = std::move(backward);
    }
  }
  return Var<T>(std::move(node));
}

template <typename T>
void Backward(const Var<T>& root) {
  if (root.numel() != 1) throw ShapeError("Backward() needs a scalar root");
  if (!root.requires_grad()) return;

  std::vector<std::shared_ptr<Node<T>>> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::shared_ptr<Node<T>>> stack{root.node_ptr()};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    for (const auto& p : n->parents) {
      if (p && p->requires_grad && !seen.count(p.get())) stack.push_back(p);
    }
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });

  root.node()->EnsureGrad()[0] += T(1);
  for (auto& n : order) {
    if (!n->backward) continue;
    if (!n->grad.empty()) n->backward(*n);
    n->backward = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

#define STEPSEP_INSTANTIATE(T)                                              \
  template class Var<T>;                                                    \
  template Var<T> MakeResult<T>(Shape, Buffer<T>,                           \
                                const std::vector<Var<T>>&,                 \
                                std::function<void(Node<T>&)>);             \
  template void Backward<T>(const Var<T>&);

STEPSEP_INSTANTIATE(float)
STEPSEP_INSTANTIATE(double)
#undef STEPSEP_INSTANTIATE

}  // namespace stepsep::ag
