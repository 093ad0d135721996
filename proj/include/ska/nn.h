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

#ifndef SKA_NN_H_
#define SKA_NN_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ska/autograd.h"
#include "ska/ops.h"

namespace ska {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Owns every trainable parameter and running-statistic buffer of a model
// under a unique dotted name. Initialization draws from one seeded engine
// in registration order, so a (config, seed) pair fixes all values.
class ParameterStore {
 public:
  explicit ParameterStore(uint64_t seed = 0) : rng_(seed) {}

  // Normal(0, 2 / fan_in).
  Tensor AddKaiming(const std::string& name, Shape shape, int64_t fan_in);
  Tensor AddConstant(const std::string& name, Shape shape, double value);
  // Non-trainable state (batch-norm running statistics).
  Tensor AddBuffer(const std::string& name, Shape shape, double value);

  std::vector<NamedTensor>& parameters() { return parameters_; }
  const std::vector<NamedTensor>& parameters() const { return parameters_; }
  std::vector<NamedTensor>& buffers() { return buffers_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }
  std::vector<Tensor> ParameterTensors() const;

  int64_t NumParameters() const;
  // Looks up a parameter or buffer; throws ConfigError when absent.
  Tensor Find(const std::string& name) const;
  void ZeroGrad();

 private:
  void CheckUnique(const std::string& name) const;

  std::mt19937_64 rng_;
  std::vector<NamedTensor> parameters_;
  std::vector<NamedTensor> buffers_;
};

struct SkaAttentionTrace;

// Per-call switches threaded through every forward pass.
struct ForwardContext {
  bool training = false;
  bool update_running_stats = true;
  // When set, the layer tagged as the analysis point writes its trace here.
  SkaAttentionTrace* attention_trace = nullptr;

  op::BatchNormOptions bn() const {
    op::BatchNormOptions o;
    o.training = training;
    o.update_running_stats = update_running_stats;
    return o;
  }
};

class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  BatchNormLayer(ParameterStore& store, const std::string& name,
                 int64_t channels);
  Tensor Forward(const Tensor& x, const ForwardContext& ctx);

  Tensor gamma, beta, running_mean, running_var;
};

// Convolution without bias (a batch norm always follows) and its BN, then
// ReLU. 2-D when kernel_h > 1 or the input is rank 4.
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(ParameterStore& store, const std::string& name, int64_t in,
             int64_t out, int64_t kernel_h, int64_t kernel_w,
             bool two_dimensional);
  Tensor Forward(const Tensor& x, const ForwardContext& ctx,
                 int64_t stride_h = 1, int64_t dilation_w = 1);
  // Convolution and BN only.
  Tensor ForwardLinear(const Tensor& x, const ForwardContext& ctx,
                       int64_t stride_h = 1, int64_t dilation_w = 1);

  Tensor weight;
  BatchNormLayer bn;
  bool two_dimensional = true;
};

class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(ParameterStore& store, const std::string& name, int64_t in,
              int64_t out, bool with_bias);
  Tensor Forward(const Tensor& x) const { return op::Linear(x, weight, bias); }

  Tensor weight, bias;
};

}  // namespace ska

#endif  // SKA_NN_H_
