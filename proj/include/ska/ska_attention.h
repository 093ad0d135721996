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

#ifndef SKA_SKA_ATTENTION_H_
#define SKA_SKA_ATTENTION_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ska/nn.h"

namespace ska {

enum class AttentionAxis { kChannel, kFrequency };

// Bottleneck width d for an attended extent n: max(n / ratio, floor).
int64_t ReducedDim(int64_t attended_extent, int64_t ratio = 8,
                   int64_t floor = 4);

struct SkaConfig {
  int64_t in_channels = 1;
  int64_t channels = 1;
  // Frequency extent of the branch outputs; only read for 2-D layers.
  int64_t freq_bins = 1;
  std::vector<int64_t> kernel_sizes = {3, 5};
  int64_t reduced_dim = 4;
  AttentionAxis axis = AttentionAxis::kChannel;
  // 2-D layers take (B, C', F, T) with k x k kernels; 1-D layers take
  // (B, C', T) and only support channel attention.
  bool two_dimensional = true;

  int64_t attended_extent() const {
    return axis == AttentionAxis::kChannel ? channels : freq_bins;
  }
  // Throws ConfigError.
  void Validate() const;
};

// Intermediate values of one forward pass: fused map U, pooled vector s,
// compact feature z, and one (B, n) weight array per branch.
struct SkaAttentionTrace {
  Array fused;
  Array pooled;
  Array compact;
  std::vector<Array> weights;
};

// Selective kernel attention: N parallel convolutions (conv, BN, ReLU) with
// distinct kernel sizes, mixed per channel or per frequency bin by softmax
// weights computed from the globally pooled sum of the branches.
class SkaLayer {
 public:
  SkaLayer() = default;
  SkaLayer(ParameterStore& store, const std::string& name,
           const SkaConfig& config);

  Tensor Forward(const Tensor& x, const ForwardContext& ctx,
                 SkaAttentionTrace* trace = nullptr);

  const SkaConfig& config() const { return config_; }

  std::vector<ConvBnRelu> branches;
  Tensor squeeze_weight;  // (d, n)
  BatchNormLayer squeeze_bn;
  std::vector<Tensor> attention;  // N matrices of shape (n, d)
  // Per-branch constants that replace the learned weights. Used to pin the
  // layer to one kernel.
  std::optional<std::vector<double>> forced_weights;

 private:
  SkaConfig config_;
};

std::vector<Tensor> SkaBranches(const Tensor& x, SkaLayer& layer,
                                const ForwardContext& ctx);
Tensor Fuse(std::span<const Tensor> branches);
// Mean over every axis after the channel axis: (B, C, F, T) or (B, C, T)
// to (B, C).
Tensor SqueezeChannel(const Tensor& fused);
// Mean over channels and time: (B, C, F, T) to (B, F).
Tensor SqueezeFrequency(const Tensor& fused);
// ReLU(BN(W s)).
Tensor Compact(const Tensor& pooled, const Tensor& squeeze_weight,
               BatchNormLayer& bn, const ForwardContext& ctx);
// Softmax across branches of the logits A_i z, independently per index.
std::vector<Tensor> Select(const Tensor& compact,
                           std::span<const Tensor> attention);
// V = sum_i a_i * U_i with a_i broadcast over the non-attended axes.
Tensor Recalibrate(std::span<const Tensor> branches,
                   std::span<const Tensor> weights, AttentionAxis axis);

}  // namespace ska

#endif  // SKA_SKA_ATTENTION_H_
