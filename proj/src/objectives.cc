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

#include "ska/objectives.h"

#include <cmath>
#include <numbers>

#include "ska/error.h"
#include "ska/ops.h"

namespace ska {

Tensor AamLoss(const Tensor& embeddings, const Tensor& class_weights,
               std::span<const int> labels, double margin, double scale) {
  if (embeddings.rank() != 2 || class_weights.rank() != 2 ||
      embeddings.dim(1) != class_weights.dim(1)) {
    throw ContractError("AAM loss expects (R, D) embeddings and (K, D) "
                        "weights, got " +
                        ShapeString(embeddings.shape()) + " and " +
                        ShapeString(class_weights.shape()));
  }
  if (static_cast<int64_t>(labels.size()) != embeddings.dim(0)) {
    throw ContractError("AAM loss needs one label per embedding");
  }
  for (int label : labels) {
    if (label < 0 || label >= class_weights.dim(0)) {
      throw ContractError("AAM label " + std::to_string(label) +
                          " is outside [0, " +
                          std::to_string(class_weights.dim(0)) + ")");
    }
  }
  const Tensor cosines = op::Linear(op::L2NormalizeRows(embeddings),
                                    op::L2NormalizeRows(class_weights));
  return op::CrossEntropy(op::AamLogits(cosines, labels, margin, scale),
                          labels);
}

Tensor ApLoss(const Tensor& embeddings, const Tensor& w, const Tensor& b) {
  if (embeddings.rank() != 2 || embeddings.dim(0) < 4 ||
      embeddings.dim(0) % 2 != 0) {
    throw ContractError(
        "AP loss expects (2S, D) embeddings with S >= 2 speaker pairs, got " +
        ShapeString(embeddings.shape()));
  }
  const int64_t speakers = embeddings.dim(0) / 2;
  const int64_t dim = embeddings.dim(1);
  const Tensor pairs = op::Reshape(embeddings, {speakers, 2 * dim});
  const Tensor queries = op::L2NormalizeRows(op::Slice(pairs, 1, 0, dim));
  const Tensor prototypes = op::L2NormalizeRows(op::Slice(pairs, 1, dim, dim));
  const Tensor cosines = op::Linear(queries, prototypes);
  const Tensor logits = op::AddByScalar(
      op::MulByScalar(cosines, op::ClampMin(w, kApMinScale)), b);
  std::vector<int> targets(static_cast<size_t>(speakers));
  for (int64_t i = 0; i < speakers; ++i) targets[i] = static_cast<int>(i);
  return op::CrossEntropy(logits, targets);
}

SpeakerObjective::SpeakerObjective(ParameterStore& store, int64_t num_speakers,
                                   int64_t embedding_dim, const AamConfig& aam,
                                   const ApConfig& ap)
    : aam_config(aam) {
  if (num_speakers < 2 || embedding_dim < 1) {
    throw ConfigError("objective needs >= 2 speakers and a positive "
                      "embedding dimension");
  }
  class_weights = store.AddKaiming("loss.aam.weight",
                                   {num_speakers, embedding_dim}, embedding_dim);
  ap_w = store.AddConstant("loss.ap.w", {1}, ap.init_w);
  ap_b = store.AddConstant("loss.ap.b", {1}, ap.init_b);
}

Tensor SpeakerObjective::Aam(const Tensor& embeddings,
                             std::span<const int> labels) const {
  return AamLoss(embeddings, class_weights, labels, aam_config.margin,
                 aam_config.scale);
}

Tensor SpeakerObjective::Ap(const Tensor& embeddings) const {
  return ApLoss(embeddings, ap_w, ap_b);
}

Tensor SpeakerObjective::Loss(const Tensor& embeddings,
                              std::span<const int> labels) const {
  return op::Add(Aam(embeddings, labels), Ap(embeddings));
}

Adam::Adam(std::vector<NamedTensor> params, const AdamConfig& config)
    : params_(std::move(params)), config_(config) {
  for (const NamedTensor& p : params_) {
    m_.emplace_back(p.tensor.shape());
    v_.emplace_back(p.tensor.shape());
  }
}

void Adam::Step(double lr) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k].tensor;
    Array& value = p.mutable_value();
    const Array& grad = p.grad();
    const bool has_grad = grad.size() == value.size();
    Array& m = m_[k];
    Array& v = v_[k];
    for (int64_t i = 0; i < value.size(); ++i) {
      const double g = has_grad ? grad[i] : 0.0;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double update =
          (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
      value[i] -= lr * config_.weight_decay * value[i] + lr * update;
    }
  }
}

std::vector<NamedTensor> Adam::StateBlobs() const {
  std::vector<NamedTensor> blobs;
  for (size_t k = 0; k < params_.size(); ++k) {
    blobs.push_back({"adam.m." + params_[k].name, Tensor::Constant(m_[k])});
    blobs.push_back({"adam.v." + params_[k].name, Tensor::Constant(v_[k])});
  }
  blobs.push_back({"adam.steps",
                   Tensor::Constant(Array({1}, static_cast<double>(steps_)))});
  return blobs;
}

void Adam::LoadState(const std::vector<NamedTensor>& blobs) {
  auto find = [&](const std::string& name, const Shape& shape) -> const Array& {
    for (const NamedTensor& b : blobs) {
      if (b.name != name) continue;
      if (b.tensor.shape() != shape) {
        throw ConfigError("optimizer state " + name + " has shape " +
                          ShapeString(b.tensor.shape()) + ", expected " +
                          ShapeString(shape));
      }
      return b.tensor.value();
    }
    throw ConfigError("optimizer state " + name + " is missing");
  };
  for (size_t k = 0; k < params_.size(); ++k) {
    m_[k] = find("adam.m." + params_[k].name, params_[k].tensor.shape());
    v_[k] = find("adam.v." + params_[k].name, params_[k].tensor.shape());
  }
  steps_ = static_cast<int64_t>(find("adam.steps", {1})[0]);
}

void LrSchedule::Validate() const {
  if (cycle_epochs < 1 || max_lr <= 0.0 || decay <= 0.0 || floor <= 0.0 ||
      floor > max_lr || warmup_epochs < 0.0 ||
      warmup_epochs >= static_cast<double>(cycle_epochs)) {
    throw ConfigError("invalid learning-rate schedule");
  }
}

double LrSchedule::At(int64_t epoch, int64_t step,
                      int64_t steps_per_epoch) const {
  if (epoch < 0 || step < 0 || steps_per_epoch < 1) {
    throw ContractError("learning-rate position must be non-negative");
  }
  const int64_t cycle = epoch / cycle_epochs;
  const double peak = max_lr * std::pow(decay, static_cast<double>(cycle));
  const double t = static_cast<double>(epoch % cycle_epochs) +
                   static_cast<double>(step) /
                       static_cast<double>(steps_per_epoch);
  if (t < warmup_epochs) return floor + (peak - floor) * t / warmup_epochs;
  const double progress =
      (t - warmup_epochs) / (static_cast<double>(cycle_epochs) - warmup_epochs);
  return floor +
         (peak - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace ska
