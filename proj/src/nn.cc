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

#include "ska/nn.h"

#include <cmath>

#include "ska/error.h"

namespace ska {

void ParameterStore::CheckUnique(const std::string& name) const {
  for (const auto& p : parameters_) {
    if (p.name == name) throw ConfigError("duplicate parameter name " + name);
  }
  for (const auto& b : buffers_) {
    if (b.name == name) throw ConfigError("duplicate buffer name " + name);
  }
}

Tensor ParameterStore::AddKaiming(const std::string& name, Shape shape,
                                  int64_t fan_in) {
  CheckUnique(name);
  Array value(std::move(shape));
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
  for (double& v : value.values()) v = normal(rng_);
  Tensor t = Tensor::Parameter(std::move(value));
  parameters_.push_back({name, t});
  return t;
}

Tensor ParameterStore::AddConstant(const std::string& name, Shape shape,
                                   double value) {
  CheckUnique(name);
  Tensor t = Tensor::Parameter(Array(std::move(shape), value));
  parameters_.push_back({name, t});
  return t;
}

Tensor ParameterStore::AddBuffer(const std::string& name, Shape shape,
                                 double value) {
  CheckUnique(name);
  Tensor t = Tensor::Constant(Array(std::move(shape), value));
  buffers_.push_back({name, t});
  return t;
}

std::vector<Tensor> ParameterStore::ParameterTensors() const {
  std::vector<Tensor> out;
  out.reserve(parameters_.size());
  for (const auto& p : parameters_) out.push_back(p.tensor);
  return out;
}

int64_t ParameterStore::NumParameters() const {
  int64_t n = 0;
  for (const auto& p : parameters_) n += p.tensor.value().size();
  return n;
}

Tensor ParameterStore::Find(const std::string& name) const {
  for (const auto& p : parameters_) {
    if (p.name == name) return p.tensor;
  }
  for (const auto& b : buffers_) {
    if (b.name == name) return b.tensor;
  }
  throw ConfigError("unknown parameter " + name);
}

void ParameterStore::ZeroGrad() {
  for (auto& p : parameters_) p.tensor.ZeroGrad();
}

BatchNormLayer::BatchNormLayer(ParameterStore& store, const std::string& name,
                               int64_t channels)
    : gamma(store.AddConstant(name + ".gamma", {channels}, 1.0)),
      beta(store.AddConstant(name + ".beta", {channels}, 0.0)),
      running_mean(store.AddBuffer(name + ".running_mean", {channels}, 0.0)),
      running_var(store.AddBuffer(name + ".running_var", {channels}, 1.0)) {}

Tensor BatchNormLayer::Forward(const Tensor& x, const ForwardContext& ctx) {
  return op::BatchNorm(x, gamma, beta, &running_mean.mutable_value(),
                       &running_var.mutable_value(), ctx.bn());
}

ConvBnRelu::ConvBnRelu(ParameterStore& store, const std::string& name,
                       int64_t in, int64_t out, int64_t kernel_h,
                       int64_t kernel_w, bool two_dim)
    : two_dimensional(two_dim) {
  if (two_dim) {
    weight = store.AddKaiming(name + ".weight", {out, in, kernel_h, kernel_w},
                              in * kernel_h * kernel_w);
  } else {
    weight = store.AddKaiming(name + ".weight", {out, in, kernel_w},
                              in * kernel_w);
  }
  bn = BatchNormLayer(store, name + ".bn", out);
}

Tensor ConvBnRelu::ForwardLinear(const Tensor& x, const ForwardContext& ctx,
                                 int64_t stride_h, int64_t dilation_w) {
  Tensor y;
  if (two_dimensional) {
    op::Conv2dOptions o;
    o.stride_h = stride_h;
    o.dilation_w = dilation_w;
    y = op::Conv2d(x, weight, Tensor(), o);
  } else {
    y = op::Conv1d(x, weight, Tensor(), dilation_w);
  }
  return bn.Forward(y, ctx);
}

Tensor ConvBnRelu::Forward(const Tensor& x, const ForwardContext& ctx,
                           int64_t stride_h, int64_t dilation_w) {
  return op::Relu(ForwardLinear(x, ctx, stride_h, dilation_w));
}

LinearLayer::LinearLayer(ParameterStore& store, const std::string& name,
                         int64_t in, int64_t out, bool with_bias)
    : weight(store.AddKaiming(name + ".weight", {out, in}, in)) {
  if (with_bias) bias = store.AddConstant(name + ".bias", {out}, 0.0);
}

}  // namespace ska
