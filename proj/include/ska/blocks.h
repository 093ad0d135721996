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

#ifndef SKA_BLOCKS_H_
#define SKA_BLOCKS_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ska/nn.h"
#include "ska/ska_attention.h"

namespace ska {

// Squeeze-excitation: GAP -> affine -> ReLU -> affine -> sigmoid -> scale.
class SeLayer {
 public:
  SeLayer() = default;
  SeLayer(ParameterStore& store, const std::string& name, int64_t channels,
          int64_t ratio = 8);
  // Accepts (B, C, T) or (B, C, F, T).
  Tensor Forward(const Tensor& x) const;
  Tensor Gate(const Tensor& x) const;

  LinearLayer down, up;
};

struct FrontBlockConfig {
  int64_t in_channels = 1;
  int64_t channels = 1;
  int64_t freq_in = 1;
  int64_t freq_stride = 1;
  // fcwSKA blocks add channel attention after the frequency attention.
  bool channel_attention = true;

  int64_t freq_out() const { return (freq_in - 1) / freq_stride + 1; }
};

// 3x3 conv (frequency stride) -> fwSKA -> [cwSKA] -> SE, plus a residual
// path (1x1 conv + BN when the shape changes), then ReLU.
class FrontBlock {
 public:
  FrontBlock() = default;
  FrontBlock(ParameterStore& store, const std::string& name,
             const FrontBlockConfig& config);

  // `trace` receives the channel attention of this block when present.
  Tensor Forward(const Tensor& x, const ForwardContext& ctx,
                 SkaAttentionTrace* trace = nullptr);

  const FrontBlockConfig& config() const { return config_; }
  bool has_projection() const { return has_projection_; }

  ConvBnRelu conv;
  SkaLayer frequency_ska;
  SkaLayer channel_ska;
  SeLayer se;
  ConvBnRelu projection;

 private:
  FrontBlockConfig config_;
  bool has_projection_ = false;
};

// Res2net split / chain / concat skeleton over (B, C, T). Subset 0 passes
// through when scale > 1; subset j >= 1 is op(j, x_j + y_{j-1}) with the sum
// only from j = 2 on and only when chaining is enabled. With scale == 1 the
// whole map goes through op(0, x).
using SubsetOp = std::function<Tensor(int64_t, const Tensor&)>;
Tensor MultiScaleSplit(const Tensor& x, int64_t scale, bool chaining,
                       const SubsetOp& op);

struct MsSkaConfig {
  int64_t channels = 8;
  int64_t scale = 4;
  std::vector<int64_t> kernel_sizes = {3, 5};

  int64_t width() const { return channels / scale; }
  int64_t num_processed() const { return scale == 1 ? 1 : scale - 1; }
  void Validate() const;
};

class MsSka {
 public:
  MsSka() = default;
  MsSka(ParameterStore& store, const std::string& name,
        const MsSkaConfig& config);
  Tensor Forward(const Tensor& x, const ForwardContext& ctx);
  // Pins every subset layer to the given per-branch weights.
  void ForceWeights(const std::vector<double>& weights);

  const MsSkaConfig& config() const { return config_; }

  std::vector<SkaLayer> layers;

 private:
  MsSkaConfig config_;
};

// 1x1 conv -> msSKA -> 1x1 conv -> SE, residual add, ReLU.
class MsSkaBlock {
 public:
  MsSkaBlock() = default;
  MsSkaBlock(ParameterStore& store, const std::string& name,
             const MsSkaConfig& config);
  Tensor Forward(const Tensor& x, const ForwardContext& ctx);
  Tensor Core(const Tensor& x, const ForwardContext& ctx);

  ConvBnRelu expand;
  MsSka core;
  ConvBnRelu reduce;
  SeLayer se;
};

// ECAPA SE-Res2Net block: as MsSkaBlock with a dilated k=3 conv per subset.
class Res2NetBlock {
 public:
  Res2NetBlock() = default;
  Res2NetBlock(ParameterStore& store, const std::string& name,
               int64_t channels, int64_t scale, int64_t dilation);
  Tensor Forward(const Tensor& x, const ForwardContext& ctx);

  ConvBnRelu expand;
  std::vector<ConvBnRelu> convs;
  ConvBnRelu reduce;
  SeLayer se;
  int64_t scale = 1;
  int64_t dilation = 1;
};

}  // namespace ska

#endif  // SKA_BLOCKS_H_
