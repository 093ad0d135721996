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

#include "ska/blocks.h"

#include <algorithm>

#include "ska/error.h"

namespace ska {

SeLayer::SeLayer(ParameterStore& store, const std::string& name,
                 int64_t channels, int64_t ratio)
    : down(store, name + ".down", channels, ReducedDim(channels, ratio), true),
      up(store, name + ".up", ReducedDim(channels, ratio), channels, true) {}

Tensor SeLayer::Gate(const Tensor& x) const {
  return op::Sigmoid(up.Forward(op::Relu(down.Forward(SqueezeChannel(x)))));
}

Tensor SeLayer::Forward(const Tensor& x) const {
  return op::ScaleAlong(x, Gate(x), 1);
}

FrontBlock::FrontBlock(ParameterStore& store, const std::string& name,
                       const FrontBlockConfig& config)
    : config_(config) {
  if (config.in_channels < 1 || config.channels < 1 || config.freq_in < 1 ||
      config.freq_stride < 1) {
    throw ConfigError("front block extents and stride must be >= 1");
  }
  const int64_t c = config.channels;
  const int64_t f = config.freq_out();
  conv = ConvBnRelu(store, name + ".conv", config.in_channels, c, 3, 3, true);
  SkaConfig fw;
  fw.in_channels = c;
  fw.channels = c;
  fw.freq_bins = f;
  fw.axis = AttentionAxis::kFrequency;
  fw.reduced_dim = ReducedDim(f);
  frequency_ska = SkaLayer(store, name + ".fwska", fw);
  if (config.channel_attention) {
    SkaConfig cw = fw;
    cw.axis = AttentionAxis::kChannel;
    cw.reduced_dim = ReducedDim(c);
    channel_ska = SkaLayer(store, name + ".cwska", cw);
  }
  se = SeLayer(store, name + ".se", c);
  has_projection_ = config.in_channels != c || config.freq_stride > 1;
  if (has_projection_) {
    projection =
        ConvBnRelu(store, name + ".proj", config.in_channels, c, 1, 1, true);
  }
}

Tensor FrontBlock::Forward(const Tensor& x, const ForwardContext& ctx,
                           SkaAttentionTrace* trace) {
  if (x.rank() != 4 || x.dim(1) != config_.in_channels ||
      x.dim(2) != config_.freq_in) {
    throw ConfigError("front block expects (B, " +
                      std::to_string(config_.in_channels) + ", " +
                      std::to_string(config_.freq_in) + ", T), got " +
                      ShapeString(x.shape()));
  }
  Tensor y = conv.Forward(x, ctx, config_.freq_stride);
  y = frequency_ska.Forward(y, ctx);
  if (config_.channel_attention) y = channel_ska.Forward(y, ctx, trace);
  y = se.Forward(y);
  Tensor residual =
      has_projection_ ? projection.ForwardLinear(x, ctx, config_.freq_stride) : x;
  return op::Relu(op::Add(y, residual));
}

Tensor MultiScaleSplit(const Tensor& x, int64_t scale, bool chaining,
                       const SubsetOp& op) {
  if (x.rank() != 3) throw ContractError("multi-scale split expects (B, C, T)");
  if (scale < 1 || x.dim(1) % scale != 0) {
    throw ConfigError("scale " + std::to_string(scale) +
                      " does not divide channel extent " +
                      std::to_string(x.dim(1)));
  }
  if (scale == 1) return op(0, x);
  const int64_t width = x.dim(1) / scale;
  std::vector<Tensor> parts;
  parts.reserve(scale);
  parts.push_back(op::Slice(x, 1, 0, width));
  Tensor previous;
  for (int64_t j = 1; j < scale; ++j) {
    Tensor in = op::Slice(x, 1, j * width, width);
    if (chaining && previous.defined()) in = op::Add(in, previous);
    previous = op(j, in);
    parts.push_back(previous);
  }
  return op::Concat(parts, 1);
}

void MsSkaConfig::Validate() const {
  if (scale < 1 || channels < 1 || channels % scale != 0) {
    throw ConfigError("msSKA scale " + std::to_string(scale) +
                      " must divide channels " + std::to_string(channels));
  }
}

MsSka::MsSka(ParameterStore& store, const std::string& name,
             const MsSkaConfig& config)
    : config_(config) {
  config_.Validate();
  SkaConfig sub;
  sub.in_channels = config_.width();
  sub.channels = config_.width();
  sub.kernel_sizes = config_.kernel_sizes;
  sub.two_dimensional = false;
  sub.axis = AttentionAxis::kChannel;
  sub.reduced_dim = ReducedDim(config_.width());
  for (int64_t j = 0; j < config_.num_processed(); ++j) {
    layers.emplace_back(store, name + ".scale" + std::to_string(j), sub);
  }
}

void MsSka::ForceWeights(const std::vector<double>& weights) {
  for (SkaLayer& l : layers) l.forced_weights = weights;
}

Tensor MsSka::Forward(const Tensor& x, const ForwardContext& ctx) {
  if (x.rank() != 3 || x.dim(1) != config_.channels) {
    throw ConfigError("msSKA expects (B, " + std::to_string(config_.channels) +
                      ", T), got " + ShapeString(x.shape()));
  }
  const bool single = config_.scale == 1;
  return MultiScaleSplit(x, config_.scale, true,
                         [&](int64_t j, const Tensor& in) {
                           return layers[single ? 0 : j - 1].Forward(in, ctx);
                         });
}

MsSkaBlock::MsSkaBlock(ParameterStore& store, const std::string& name,
                       const MsSkaConfig& config)
    : expand(store, name + ".expand", config.channels, config.channels, 1, 1,
             false),
      core(store, name + ".msska", config),
      reduce(store, name + ".reduce", config.channels, config.channels, 1, 1,
             false),
      se(store, name + ".se", config.channels) {}

Tensor MsSkaBlock::Core(const Tensor& x, const ForwardContext& ctx) {
  return se.Forward(reduce.Forward(core.Forward(expand.Forward(x, ctx), ctx), ctx));
}

Tensor MsSkaBlock::Forward(const Tensor& x, const ForwardContext& ctx) {
  return op::Relu(op::Add(Core(x, ctx), x));
}

Res2NetBlock::Res2NetBlock(ParameterStore& store, const std::string& name,
                           int64_t channels, int64_t scale_count,
                           int64_t dilation_rate)
    : expand(store, name + ".expand", channels, channels, 1, 1, false),
      reduce(store, name + ".reduce", channels, channels, 1, 1, false),
      se(store, name + ".se", channels),
      scale(scale_count),
      dilation(dilation_rate) {
  if (scale < 1 || channels % scale != 0) {
    throw ConfigError("Res2Net scale must divide channels");
  }
  const int64_t width = channels / scale;
  const int64_t processed = scale == 1 ? 1 : scale - 1;
  for (int64_t j = 0; j < processed; ++j) {
    convs.emplace_back(store, name + ".conv" + std::to_string(j), width, width,
                       1, 3, false);
  }
}

Tensor Res2NetBlock::Forward(const Tensor& x, const ForwardContext& ctx) {
  Tensor y = expand.Forward(x, ctx);
  y = MultiScaleSplit(y, scale, true, [&](int64_t j, const Tensor& in) {
    return convs[scale == 1 ? 0 : j - 1].Forward(in, ctx, 1, dilation);
  });
  y = se.Forward(reduce.Forward(y, ctx));
  return op::Relu(op::Add(y, x));
}

}  // namespace ska
