// Copyright (c) 2026 The ska-tdnn Authors. All Rights Reserved.
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

#include "ska/autograd.h"

#include <unordered_set>
#include <utility>

#include "ska/error.h"

namespace ska {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

Array& Node::GradBuffer() {
  if (grad.empty()) grad = Array(value.shape(), 0.0);
  return grad;
}

Tensor::Tensor(Array value, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Tensor::Backward() {
  if (node_->value.size() != 1) {
    throw ContractError("Backward() needs a scalar output, got shape " +
                        ShapeString(node_->value.shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the tape.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent && parent->requires_grad &&
          visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->GradBuffer().Fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward) continue;
    node->backward(*node);
    // Interior gradients and closures are dead once propagated.
    node->backward = nullptr;
    if (node != node_.get()) node->grad = Array();
  }
}

void Tensor::ZeroGrad() { node_->grad = Array(); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool GradEnabled() { return g_grad_enabled; }

Tensor MakeResult(Array value, std::vector<Tensor> inputs,
                  std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const Tensor& t : inputs) {
      if (t.defined() && t.requires_grad()) any = true;
    }
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (Tensor& t : inputs) node->parents.push_back(t.node());
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

}  // namespace ska
