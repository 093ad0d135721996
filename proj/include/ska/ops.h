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

#ifndef SKA_OPS_H_
#define SKA_OPS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "ska/autograd.h"
#include "ska/kernels.h"

// Differentiable operations on Tensor. Every op records its own backward
// pass on the tape; shapes are checked and mismatches raise ContractError
// (ConfigError for convolution weight/kernel disagreements).
namespace ska::op {

// Elementwise, equal shapes.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor AddN(std::span<const Tensor> terms);

Tensor Scale(const Tensor& x, double factor);
Tensor AddScalar(const Tensor& x, double offset);
// `s` holds a single element; it multiplies (or is added to) every entry.
Tensor MulByScalar(const Tensor& x, const Tensor& s);
Tensor AddByScalar(const Tensor& x, const Tensor& s);

Tensor Relu(const Tensor& x);
Tensor Sigmoid(const Tensor& x);
Tensor Tanh(const Tensor& x);
Tensor Exp(const Tensor& x);
Tensor Log(const Tensor& x);
Tensor Sqrt(const Tensor& x);
Tensor Square(const Tensor& x);
// max(x, floor); the gradient is zero where the floor is active.
Tensor ClampMin(const Tensor& x, double floor);

struct Conv2dOptions {
  int64_t stride_h = 1, stride_w = 1;
  int64_t dilation_h = 1, dilation_w = 1;
  Padding padding = Padding::kSame;
};

// x: (B, Ci, H, W); weight: (Co, Ci, KH, KW); bias: (Co) or undefined.
Tensor Conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const Conv2dOptions& options = {});
// x: (B, Ci, T); weight: (Co, Ci, K); same padding, stride 1.
Tensor Conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int64_t dilation = 1);

struct BatchNormOptions {
  bool training = true;
  bool update_running_stats = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Normalizes axis 1 of x (B, C, ...) with statistics over every other axis.
// Training mode uses batch statistics and, when enabled, folds them into
// the running buffers as new = momentum * batch + (1 - momentum) * running
// (unbiased batch variance). Evaluation mode uses the running buffers.
Tensor BatchNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Array* running_mean, Array* running_var,
                 const BatchNormOptions& options);

// x: (R, In); weight: (Out, In); bias: (Out) or undefined.
Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

// Max-subtracted softmax along `axis`.
Tensor Softmax(const Tensor& x, int axis);

// Reductions drop the reduced axis; a rank-1 input reduces to shape {1}.
Tensor Sum(const Tensor& x, int axis);
Tensor Mean(const Tensor& x, int axis);
Tensor Mean(const Tensor& x, std::vector<int> axes);
Tensor SumAll(const Tensor& x);
Tensor MeanAll(const Tensor& x);

Tensor Reshape(const Tensor& x, Shape shape);
Tensor Concat(std::span<const Tensor> parts, int axis);
Tensor Slice(const Tensor& x, int axis, int64_t start, int64_t length);
// Stacks equal-shaped tensors along a new axis.
Tensor Stack(std::span<const Tensor> parts, int axis);
// Inserts a new axis of extent n at `axis`, repeating x along it.
Tensor Expand(const Tensor& x, int axis, int64_t n);

// x: (B, ..., n, ...) with n at `axis`; weights: (B, n). Multiplies every
// x entry by the weight of its batch item and index along `axis`.
Tensor ScaleAlong(const Tensor& x, const Tensor& weights, int axis);

// Row-wise x / max(||x||, eps) for x: (R, D).
Tensor L2NormalizeRows(const Tensor& x, double eps = 1e-12);

// Mean cross-entropy of integer labels under softmax(logits), logits (R, K).
Tensor CrossEntropy(const Tensor& logits, std::span<const int> labels);

// Additive-angular-margin logits from cosines (R, K): the target column
// becomes scale * cos(theta + margin), other columns scale * cos(theta).
// Past theta = pi - margin the target logit falls back to
// scale * (cos(theta) - margin * sin(margin)) so it stays monotone.
Tensor AamLogits(const Tensor& cosines, std::span<const int> labels,
                 double margin, double scale);

}  // namespace ska::op

#endif  // SKA_OPS_H_
