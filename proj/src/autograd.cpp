// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/autograd.hpp"

#include <unordered_set>

#include "dbt/error.hpp"

namespace dbt {
namespace {

thread_local bool g_grad_enabled = true;
thread_local double* g_mac_counter = nullptr;

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> backward_fn) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const Var& v : inputs) needs = needs || v.requires_grad();
  }
  Var out(std::move(value), needs);
  if (needs) {
    Node& n = *out.node();
    n.inputs.reserve(inputs.size());
    for (Var& v : inputs) n.inputs.push_back(v.node());
    n.backward_fn = std::move(backward_fn);
  }
  return out;
}

Tensor* grad_of(Node& out, std::size_t input) {
  Node* in = out.inputs[input].get();
  if (!in || !in->requires_grad) return nullptr;
  return &in->grad_buffer();
}

void backward(const Var& root) {
  require(root.defined() && root.numel() == 1, ErrorCode::kShapeMismatch,
          "backward() needs a single-element root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a topological order. The order list owns
  // its nodes because running a closure releases that node's inputs.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  std::vector<std::shared_ptr<Node>> keep;  // parallel to stack
  stack.emplace_back(root.node().get(), 0);
  keep.push_back(root.node());
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        keep.push_back(node->inputs[next - 1]);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(keep[stack.size() - 1]);
      stack.pop_back();
      keep.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = it->get();
    if (node->backward_fn) {
      if (!node->grad.empty()) node->backward_fn(*node);
      // Interior nodes are single-use: drop saved state and gradient.
      node->backward_fn = nullptr;
      node->inputs.clear();
      if (node != root.node().get()) node->grad = Tensor();
    }
  }
}

MacCounter::MacCounter() : saved_(g_mac_counter) { g_mac_counter = &count_; }
MacCounter::~MacCounter() { g_mac_counter = saved_; }
double MacCounter::total() const { return count_; }

void count_macs(double macs) {
  if (g_mac_counter) *g_mac_counter += macs;
}

}  // namespace dbt
