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

#ifndef SKA_NETWORK_H_
#define SKA_NETWORK_H_

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "ska/blocks.h"
#include "ska/features.h"
#include "ska/nn.h"

namespace ska {

enum class Variant { kEcapaMsSka, kEcapaCnnFwSka, kEcapaCnnFcwSka, kSkaTdnn };

std::string VariantName(Variant v);
// Throws ConfigError for unknown names.
Variant ParseVariant(const std::string& name);

struct NetworkConfig {
  Variant variant = Variant::kSkaTdnn;
  int64_t tdnn_channels = 1024;
  int64_t scale_count = 8;
  // Stem width followed by one width per front block.
  std::vector<int64_t> front_channels = {128, 128, 128, 128};
  std::vector<int64_t> front_freq_strides = {1, 2, 2};
  int64_t embedding_dim = 192;
  int64_t attention_dim = 128;
  int64_t toy_scale_factor = 1;
  int64_t mel_bins = kNumMelBins;

  static NetworkConfig Full(Variant variant);
  // Widths divided by 16, scale 4, 64-dim embeddings.
  static NetworkConfig Toy(Variant variant);

  bool has_front() const { return variant != Variant::kEcapaMsSka; }
  bool msska_tdnn() const {
    return variant == Variant::kEcapaMsSka || variant == Variant::kSkaTdnn;
  }
  bool front_channel_attention() const {
    return variant != Variant::kEcapaCnnFwSka;
  }

  int64_t tdnn() const { return tdnn_channels / toy_scale_factor; }
  int64_t front(size_t i) const { return front_channels[i] / toy_scale_factor; }
  int64_t attention() const {
    return std::max<int64_t>(1, attention_dim / toy_scale_factor);
  }
  int64_t aggregate_channels() const { return 3 * tdnn(); }
  int64_t pooled_channels() const { return 3 * tdnn() / 2; }
  int64_t front_freq_out() const;
  int64_t tdnn_input() const;

  // Throws ConfigError on any divisibility or extent violation.
  void Validate() const;
  // Canonical key=value text; the checkpoint digest is computed over it.
  std::string ToText() const;
  uint64_t Digest() const;
};

uint64_t Fnv1a64(const std::string& text);

// Channel- and context-dependent attentive statistics pooling over (B, D, T).
class AttentiveStatsPool {
 public:
  AttentiveStatsPool() = default;
  AttentiveStatsPool(ParameterStore& store, const std::string& name,
                     int64_t channels, int64_t attention_dim);

  // Returns (B, 2D): weighted mean then weighted std. `weights` receives the
  // (B, D, T) attention. `uniform` replaces the attention with 1/T.
  Tensor Forward(const Tensor& h, const ForwardContext& ctx,
                 Array* weights = nullptr, bool uniform = false);

  Tensor w1, b1, w2, b2;
  BatchNormLayer bn;
};

// sqrt(max(v, 1e-8)) guard for the pooled standard deviations.
inline constexpr double kStdFloor = 1e-8;

class Network {
 public:
  Network(const NetworkConfig& config, uint64_t seed);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  // mel: (B, mel_bins, T). Returns the concatenated (B, 3C, T) features of
  // the three TDNN stages.
  Tensor FrameFeatures(const Tensor& mel, const ForwardContext& ctx);
  // mel -> (B, embedding_dim).
  Tensor Embed(const Tensor& mel, const ForwardContext& ctx);

  const NetworkConfig& config() const { return config_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  int64_t NumParameters() const { return store_.NumParameters(); }

  // Layers are public so tests and the analysis command can reach them.
  ConvBnRelu stem;
  std::vector<FrontBlock> front;
  ConvBnRelu layer1;
  std::vector<MsSkaBlock> msska_blocks;
  std::vector<Res2NetBlock> res2net_blocks;
  ConvBnRelu aggregate;
  AttentiveStatsPool pool;
  BatchNormLayer pool_bn;
  LinearLayer fc;
  BatchNormLayer embedding_bn;

 private:
  Tensor FrontForward(const Tensor& mel, const ForwardContext& ctx);

  NetworkConfig config_;
  ParameterStore store_;
};

struct EmbeddingRecord {
  std::string utterance_id;
  double duration_seconds = 0.0;
  std::vector<double> embedding;
};

// Eval-mode embedding of a whole waveform (>= 0.5 s): log-mel, instance
// normalization, network.
EmbeddingRecord EmbedWaveform(Network& net, const Waveform& wave,
                              const std::string& id);

std::string FormatEmbedding(const EmbeddingRecord& record);
EmbeddingRecord ParseEmbedding(const std::string& line);
void WriteEmbeddings(const std::string& path,
                     const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> ReadEmbeddings(const std::string& path);

// Versioned binary container: magic, version, config digest, config text,
// then named blobs (name, rank, extents, little-endian float64 values).
struct Checkpoint {
  std::string config_text;
  uint64_t digest = 0;
  std::vector<NamedTensor> blobs;
};

void WriteCheckpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint ReadCheckpoint(const std::string& path);

// Parameters and buffers of `net`, plus any extra blobs.
Checkpoint MakeCheckpoint(const Network& net,
                          std::vector<NamedTensor> extra = {});
// Copies every parameter and buffer from `checkpoint` into `net`. Throws
// ConfigError on a digest or shape mismatch.
void RestoreNetwork(Network& net, const Checkpoint& checkpoint);
// Rebuilds the config recorded in a checkpoint.
NetworkConfig ConfigFromText(const std::string& text);

}  // namespace ska

#endif  // SKA_NETWORK_H_
