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

#include "ska/ska_attention.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "ska/error.h"

namespace ska {

int64_t ReducedDim(int64_t attended_extent, int64_t ratio, int64_t floor) {
  return std::max(attended_extent / ratio, floor);
}

void SkaConfig::Validate() const {
  if (kernel_sizes.empty()) {
    throw ConfigError("SKA needs at least one branch");
  }
  std::set<int64_t> distinct(kernel_sizes.begin(), kernel_sizes.end());
  if (distinct.size() != kernel_sizes.size()) {
    throw ConfigError("SKA kernel sizes must be distinct");
  }
  for (int64_t k : kernel_sizes) {
    if (k < 1 || k % 2 == 0) {
      throw ConfigError("SKA kernel sizes must be odd and positive");
    }
  }
  if (in_channels < 1 || channels < 1 || freq_bins < 1 || reduced_dim < 1) {
    throw ConfigError("SKA extents and reduced dimension must be >= 1");
  }
  if (!two_dimensional && axis == AttentionAxis::kFrequency) {
    throw ConfigError("frequency-wise SKA needs a 2-D layer");
  }
}

SkaLayer::SkaLayer(ParameterStore& store, const std::string& name,
                   const SkaConfig& config)
    : config_(config) {
  config_.Validate();
  const int64_t n = config_.attended_extent();
  const int64_t d = config_.reduced_dim;
  for (size_t i = 0; i < config_.kernel_sizes.size(); ++i) {
    const int64_t k = config_.kernel_sizes[i];
    branches.emplace_back(store, name + ".branch" + std::to_string(k),
                          config_.in_channels, config_.channels,
                          config_.two_dimensional ? k : 1, k,
                          config_.two_dimensional);
  }
  squeeze_weight = store.AddKaiming(name + ".squeeze", {d, n}, n);
  squeeze_bn = BatchNormLayer(store, name + ".squeeze_bn", d);
  for (int64_t k : config_.kernel_sizes) {
    attention.push_back(
        store.AddKaiming(name + ".attention" + std::to_string(k), {n, d}, d));
  }
}

std::vector<Tensor> SkaBranches(const Tensor& x, SkaLayer& layer,
                                const ForwardContext& ctx) {
  const SkaConfig& c = layer.config();
  const int expected_rank = c.two_dimensional ? 4 : 3;
  if (x.rank() != expected_rank || x.dim(1) != c.in_channels) {
    throw ConfigError("SKA input " + ShapeString(x.shape()) +
                      " does not match configured input channels " +
                      std::to_string(c.in_channels));
  }
  std::vector<Tensor> out;
  out.reserve(layer.branches.size());
  for (ConvBnRelu& branch : layer.branches) {
    out.push_back(branch.Forward(x, ctx));
    if (out.back().shape() != out.front().shape()) {
      throw ConfigError("SKA branch outputs diverge in shape");
    }
  }
  if (c.axis == AttentionAxis::kFrequency && out.front().dim(2) != c.freq_bins) {
    throw ConfigError("frequency-wise SKA configured for " +
                      std::to_string(c.freq_bins) + " bins, input has " +
                      std::to_string(out.front().dim(2)));
  }
  return out;
}

Tensor Fuse(std::span<const Tensor> branches) { return op::AddN(branches); }

Tensor SqueezeChannel(const Tensor& fused) {
  if (fused.rank() == 3) return op::Mean(fused, 2);
  if (fused.rank() == 4) return op::Mean(fused, std::vector<int>{2, 3});
  throw ContractError("SqueezeChannel expects rank 3 or 4");
}

Tensor SqueezeFrequency(const Tensor& fused) {
  if (fused.rank() != 4) throw ContractError("SqueezeFrequency expects rank 4");
  return op::Mean(fused, std::vector<int>{1, 3});
}

Tensor Compact(const Tensor& pooled, const Tensor& squeeze_weight,
               BatchNormLayer& bn, const ForwardContext& ctx) {
  return op::Relu(bn.Forward(op::Linear(pooled, squeeze_weight), ctx));
}

std::vector<Tensor> Select(const Tensor& compact,
                           std::span<const Tensor> attention) {
  std::vector<Tensor> logits;
  logits.reserve(attention.size());
  for (const Tensor& a : attention) logits.push_back(op::Linear(compact, a));
  const int64_t batch = compact.dim(0);
  const int64_t n = logits.front().dim(1);
  Tensor weights = op::Softmax(op::Stack(logits, 1), 1);
  std::vector<Tensor> out;
  for (size_t i = 0; i < attention.size(); ++i) {
    out.push_back(op::Reshape(
        op::Slice(weights, 1, static_cast<int64_t>(i), 1), {batch, n}));
  }
  return out;
}

Tensor Recalibrate(std::span<const Tensor> branches,
                   std::span<const Tensor> weights, AttentionAxis axis) {
  if (branches.size() != weights.size() || branches.empty()) {
    throw ContractError("Recalibrate needs one weight array per branch");
  }
  const int index_axis = axis == AttentionAxis::kChannel ? 1 : 2;
  std::vector<Tensor> terms;
  terms.reserve(branches.size());
  for (size_t i = 0; i < branches.size(); ++i) {
    terms.push_back(op::ScaleAlong(branches[i], weights[i], index_axis));
  }
  return op::AddN(terms);
}

Tensor SkaLayer::Forward(const Tensor& x, const ForwardContext& ctx,
                         SkaAttentionTrace* trace) {
  std::vector<Tensor> u = SkaBranches(x, *this, ctx);
  Tensor fused = Fuse(u);
  Tensor pooled = config_.axis == AttentionAxis::kChannel
                      ? SqueezeChannel(fused)
                      : SqueezeFrequency(fused);
  Tensor compact = Compact(pooled, squeeze_weight, squeeze_bn, ctx);
  std::vector<Tensor> weights;
  if (forced_weights) {
    if (forced_weights->size() != u.size()) {
      throw ConfigError("forced SKA weights need one value per branch");
    }
    for (double w : *forced_weights) {
      weights.push_back(Tensor::Constant(Array(pooled.shape(), w)));
    }
  } else {
    weights = Select(compact, attention);
  }
  Tensor v = Recalibrate(u, weights, config_.axis);
  if (trace) {
    trace->fused = fused.value();
    trace->pooled = pooled.value();
    trace->compact = compact.value();
    trace->weights.clear();
    for (const Tensor& w : weights) trace->weights.push_back(w.value());
  }
  return v;
}

}  // namespace ska
