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

#ifndef SKA_PIPELINE_H_
#define SKA_PIPELINE_H_

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ska/network.h"
#include "ska/objectives.h"
#include "ska/run_config.h"
#include "ska/scoring.h"
#include "ska/synth.h"

namespace ska {

struct LabeledUtterance {
  int label = 0;
  std::string path;
  Waveform wave;
};

// Training-split utterances of the dataset at `root`, labelled by speaker
// in order of first appearance. `num_speakers` receives the class count.
std::vector<LabeledUtterance> LoadTrainingSet(const std::string& root,
                                              int64_t* num_speakers);

// Pairs (two utterances of one speaker) grouped into batches of up to
// `batch_speakers` distinct speakers. Each speaker's utterances are shuffled
// and paired once per epoch; batches with fewer than two pairs are dropped.
std::vector<std::vector<std::pair<int, int>>> MakeEpochBatches(
    const std::vector<int>& labels, int64_t batch_speakers, uint64_t seed);

struct EpochStats {
  int64_t epoch = 0;
  int64_t steps = 0;
  double mean_loss = 0.0;
  double last_lr = 0.0;
};

// Toy training loop: AAM + AP loss, Adam, cosine warm-restart schedule,
// random crops and additive noise. All randomness derives from
// (seed, epoch, step), so a run resumed from an epoch checkpoint repeats
// the uninterrupted run exactly.
class Trainer {
 public:
  Trainer(const RunConfig& config, std::vector<LabeledUtterance> data,
          int64_t num_speakers);

  // Trains one epoch. Throws NumericError when the loss stops being finite.
  EpochStats RunEpoch();

  int64_t epoch() const { return epoch_; }
  Network& network() { return *net_; }
  const SpeakerObjective& objective() const { return *objective_; }

  // Network, loss parameters, optimizer state and the epoch counter.
  Checkpoint MakeTrainingCheckpoint() const;
  void Restore(const Checkpoint& checkpoint);

 private:
  // (B, mel, T) features of one batch; row r uses its own derived stream.
  Array BatchFeatures(const std::vector<std::pair<int, int>>& batch,
                      int64_t step) const;

  RunConfig config_;
  std::vector<LabeledUtterance> data_;
  std::unique_ptr<Network> net_;
  ParameterStore loss_store_;
  std::unique_ptr<SpeakerObjective> objective_;
  std::unique_ptr<Adam> adam_;
  int64_t epoch_ = 0;
};

// Eval-mode embeddings keyed by path, reading WAVs below `root`.
class EmbeddingCache {
 public:
  EmbeddingCache(Network& net, std::string root) : net_(net), root_(std::move(root)) {}
  const std::vector<double>& Get(const std::string& path,
                                 Duration duration = Duration::kFull);
  Waveform Load(const std::string& path);

 private:
  Network& net_;
  std::string root_;
  std::map<std::pair<std::string, int>, std::vector<double>> cache_;
};

struct EvalReport {
  Backend backend = Backend::kCos;
  Duration duration = Duration::kFull;
  MetricPoint eer;
  MetricPoint min_dcf;
  std::vector<double> scores;
  std::vector<int> labels;
};

// Scores `trials` with the chosen backend; the duration protocol applies
// to the test side only. The s-norm cohort is the training split.
EvalReport Evaluate(Network& net, const std::string& root,
                    const std::vector<Trial>& trials, Backend backend,
                    Duration duration, int64_t top_k);

std::string FormatReport(const EvalReport& report);

struct AttentionTable {
  double factor = 1.0;
  // Per channel (a_3x3, a_5x5) of the traced channel-wise SKA layer.
  std::vector<std::array<double, 2>> rows;
};

// Runs the network on the upsampled waveform for every factor and captures
// the branch weights of the last front block's channel-wise SKA. Throws
// ConfigError for variants without that layer or other kernel sizes.
std::vector<AttentionTable> AnalyzeAttention(Network& net, const Waveform& wave,
                                             const std::vector<double>& factors);
// "channel,a3,a5" header plus one row per channel.
std::string FormatAttentionCsv(const AttentionTable& table);

}  // namespace ska

#endif  // SKA_PIPELINE_H_
