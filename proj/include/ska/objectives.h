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

#ifndef SKA_OBJECTIVES_H_
#define SKA_OBJECTIVES_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ska/autograd.h"
#include "ska/nn.h"

namespace ska {

// Additive angular margin softmax over L2-normalized embeddings and class
// weights. Returns the mean cross-entropy.
Tensor AamLoss(const Tensor& embeddings, const Tensor& class_weights,
               std::span<const int> labels, double margin, double scale);

// Angular prototypical loss. Rows 2i and 2i+1 of `embeddings` are the query
// and prototype of speaker i. Logits are w * cos(query_i, prototype_j) + b
// with w clamped at kApMinScale; targets lie on the diagonal. Throws
// ContractError unless the batch holds an even number (>= 4) of rows.
Tensor ApLoss(const Tensor& embeddings, const Tensor& w, const Tensor& b);

inline constexpr double kApMinScale = 1e-6;

struct AamConfig {
  double margin = 0.2;
  double scale = 30.0;
};

struct ApConfig {
  double init_w = 10.0;
  double init_b = -5.0;
};

// Equal-weighted AAM + AP objective with its learnable parameters.
class SpeakerObjective {
 public:
  SpeakerObjective(ParameterStore& store, int64_t num_speakers,
                   int64_t embedding_dim, const AamConfig& aam = {},
                   const ApConfig& ap = {});

  // embeddings: (2S, D) laid out as speaker pairs; labels: one per row.
  Tensor Loss(const Tensor& embeddings, std::span<const int> labels) const;
  Tensor Aam(const Tensor& embeddings, std::span<const int> labels) const;
  Tensor Ap(const Tensor& embeddings) const;

  Tensor class_weights, ap_w, ap_b;
  AamConfig aam_config;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled: every step subtracts lr * weight_decay * param.
  double weight_decay = 2e-5;
};

class Adam {
 public:
  Adam(std::vector<NamedTensor> params, const AdamConfig& config = {});

  // Applies one update from the gradients currently stored on the
  // parameters; a parameter without a gradient buffer counts as zero.
  void Step(double lr);

  int64_t steps() const { return steps_; }
  // Moment buffers and the step counter as named blobs ("adam.m.<name>",
  // "adam.v.<name>", "adam.steps") for checkpointing.
  std::vector<NamedTensor> StateBlobs() const;
  // Throws ConfigError when a blob is missing or mis-shaped.
  void LoadState(const std::vector<NamedTensor>& blobs);

 private:
  std::vector<NamedTensor> params_;
  std::vector<Array> m_, v_;
  AdamConfig config_;
  int64_t steps_ = 0;
};

// Cosine annealing with warm restarts. Each cycle starts with a linear
// warm-up from `floor` to the cycle peak, then decays to `floor` along a
// half cosine. The peak is multiplied by `decay` at every restart.
struct LrSchedule {
  int64_t cycle_epochs = 25;
  double max_lr = 1e-3;
  double decay = 0.8;
  double floor = 1e-8;
  double warmup_epochs = 1.0;

  // Learning rate at fractional position `step / steps_per_epoch` of `epoch`.
  double At(int64_t epoch, int64_t step = 0, int64_t steps_per_epoch = 1) const;
  // Throws ConfigError on non-positive extents or rates.
  void Validate() const;
};

}  // namespace ska

#endif  // SKA_OBJECTIVES_H_
