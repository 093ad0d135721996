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

#ifndef SKA_AUTOGRAD_H_
#define SKA_AUTOGRAD_H_

#include <functional>
#include <memory>
#include <vector>

#include "ska/array.h"

namespace ska {

// One vertex of the reverse-mode tape. `backward` reads `grad` and
// accumulates into the parents' grads.
struct Node {
  Array value;
  Array grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  // Returns grad, allocating zeros of value's shape on first use.
  Array& GradBuffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Array value, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor Parameter(Array value) { return Tensor(std::move(value), true); }
  static Tensor Constant(Array value) { return Tensor(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Array& value() const { return node_->value; }
  // Parameters and running statistics are updated in place by the single
  // training thread; never call this on a tensor shared with readers.
  Array& mutable_value() { return node_->value; }
  const Array& grad() const { return node_->grad; }
  Array& mutable_grad() { return node_->GradBuffer(); }
  bool requires_grad() const { return node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t dim(int axis) const { return node_->value.dim(axis); }
  int rank() const { return node_->value.rank(); }
  const std::shared_ptr<Node>& node() const { return node_; }

  // Seeds d(this)/d(this) = 1 and runs the tape. Requires a single element.
  void Backward();
  void ZeroGrad();

 private:
  std::shared_ptr<Node> node_;
};

// Disables tape recording on the current thread while alive.
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

// Wraps `value` as an op result. The backward closure is only kept when
// recording is enabled and some input requires a gradient.
Tensor MakeResult(Array value, std::vector<Tensor> inputs,
                  std::function<void(Node&)> backward);

}  // namespace ska

#endif  // SKA_AUTOGRAD_H_
