// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Tape-free reverse-mode differentiation. Every op returns a Var whose node
// keeps its inputs and a closure that pushes the node's gradient into them.
// Calling backward() on a scalar walks the graph in reverse topological
// order and releases each node's saved state as soon as it has run.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dbt/tensor.hpp"

namespace dbt {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  // Allocates a zero gradient of the value's shape on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad() { return node_->grad; }
  bool requires_grad() const noexcept {
    return node_ && node_->requires_grad;
  }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }
  const std::shared_ptr<Node>& node() const noexcept { return node_; }

  void zero_grad();

 private:
  std::shared_ptr<Node> node_;
};

// True while graph recording is enabled on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// Builds an op result. The closure is kept only when recording is on and at
// least one input requires a gradient; otherwise the result is a constant.
Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> backward_fn);

// Seeds d(root)/d(root) = 1 and propagates. root must hold one element.
void backward(const Var& root);

// Gradient accumulation helper used by op closures: returns the input's
// gradient buffer or nullptr when that input does not need one.
Tensor* grad_of(Node& out, std::size_t input);

// MAC tally for analytic-vs-traced complexity checks. Ops add to the
// counter while a MacCounter scope is active on this thread.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  double total() const;

 private:
  double* saved_;
  double count_ = 0.0;
};

void count_macs(double macs);

}  // namespace dbt
