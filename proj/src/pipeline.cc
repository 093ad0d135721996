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

#include "ska/pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "ska/error.h"

namespace ska {

namespace fs = std::filesystem;

std::vector<LabeledUtterance> LoadTrainingSet(const std::string& root,
                                              int64_t* num_speakers) {
  const auto manifest = ReadManifest((fs::path(root) / "manifest.txt").string());
  std::map<std::string, int> labels;
  std::vector<LabeledUtterance> data;
  for (const ManifestEntry& e : manifest) {
    if (e.split != "train") continue;
    const auto [it, inserted] =
        labels.emplace(e.speaker_id, static_cast<int>(labels.size()));
    data.push_back({it->second, e.path,
                    ReadWav((fs::path(root) / e.path).string())});
  }
  if (labels.size() < 2) {
    throw ConfigError("training split of " + root + " has fewer than 2 speakers");
  }
  *num_speakers = static_cast<int64_t>(labels.size());
  return data;
}

std::vector<std::vector<std::pair<int, int>>> MakeEpochBatches(
    const std::vector<int>& labels, int64_t batch_speakers, uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto draw = [&](size_t n) { return static_cast<size_t>(rng() % n); };
  int max_label = -1;
  for (int l : labels) max_label = std::max(max_label, l);
  std::vector<std::vector<int>> by_speaker(static_cast<size_t>(max_label + 1));
  for (size_t i = 0; i < labels.size(); ++i) {
    by_speaker[labels[i]].push_back(static_cast<int>(i));
  }
  std::vector<std::pair<int, int>> pairs;
  for (std::vector<int>& utts : by_speaker) {
    for (size_t i = utts.size(); i > 1; --i) std::swap(utts[i - 1], utts[draw(i)]);
    for (size_t i = 0; i + 1 < utts.size(); i += 2) {
      pairs.emplace_back(utts[i], utts[i + 1]);
    }
  }
  for (size_t i = pairs.size(); i > 1; --i) std::swap(pairs[i - 1], pairs[draw(i)]);

  std::vector<std::vector<std::pair<int, int>>> batches;
  for (const auto& p : pairs) {
    bool placed = false;
    for (auto& batch : batches) {
      if (static_cast<int64_t>(batch.size()) >= batch_speakers) continue;
      const bool clash = std::any_of(batch.begin(), batch.end(), [&](const auto& q) {
        return labels[q.first] == labels[p.first];
      });
      if (clash) continue;
      batch.push_back(p);
      placed = true;
      break;
    }
    if (!placed) batches.push_back({p});
  }
  std::erase_if(batches, [](const auto& b) { return b.size() < 2; });
  return batches;
}

Trainer::Trainer(const RunConfig& config, std::vector<LabeledUtterance> data,
                 int64_t num_speakers)
    : config_(config),
      data_(std::move(data)),
      loss_store_(DeriveSeed(config.seed, 0x1055, 0)) {
  config_.Validate();
  const NetworkConfig net_config = config_.network();
  net_ = std::make_unique<Network>(net_config, DeriveSeed(config_.seed, 0x4e7, 0));
  objective_ = std::make_unique<SpeakerObjective>(
      loss_store_, num_speakers, net_config.embedding_dim, config_.aam,
      config_.ap);
  std::vector<NamedTensor> params = net_->store().parameters();
  for (const NamedTensor& p : loss_store_.parameters()) params.push_back(p);
  adam_ = std::make_unique<Adam>(std::move(params), config_.adam);
}

Array Trainer::BatchFeatures(const std::vector<std::pair<int, int>>& batch,
                             int64_t step) const {
  const int64_t rows = 2 * static_cast<int64_t>(batch.size());
  const int64_t frames = NumFrames(SecondsToSamples(config_.crop_seconds));
  const int64_t bins = config_.network().mel_bins;
  Array features({rows, bins, frames});
  const uint64_t stream = DeriveSeed(config_.seed, static_cast<uint64_t>(epoch_),
                                     static_cast<uint64_t>(step));
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const auto& pair = batch[r / 2];
    const LabeledUtterance& u = data_[r % 2 == 0 ? pair.first : pair.second];
    std::mt19937_64 rng(DeriveSeed(stream, 0xf0, static_cast<uint64_t>(r)));
    Waveform w = RandomCrop(u.wave, config_.crop_seconds, rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < config_.augment_prob) {
      const double snr = config_.snr_min_db +
                         (config_.snr_max_db - config_.snr_min_db) * unit(rng);
      AddNoise(w, snr, rng);
    }
    const Array mel = InstanceNormalize(LogMel(w));
    std::copy(mel.values().begin(), mel.values().end(),
              features.values().begin() + r * bins * frames);
  }
  return features;
}

EpochStats Trainer::RunEpoch() {
  std::vector<int> labels;
  for (const LabeledUtterance& u : data_) labels.push_back(u.label);
  const auto batches = MakeEpochBatches(
      labels, config_.batch_speakers,
      DeriveSeed(config_.seed, static_cast<uint64_t>(epoch_), 0xba7c4));
  if (batches.empty()) {
    throw ConfigError("training set yields no batch of two speaker pairs");
  }
  EpochStats stats;
  stats.epoch = epoch_;
  const int64_t steps = static_cast<int64_t>(batches.size());
  double loss_sum = 0.0;
  for (int64_t step = 0; step < steps; ++step) {
    const auto& batch = batches[step];
    std::vector<int> row_labels;
    for (const auto& [a, b] : batch) {
      row_labels.push_back(data_[a].label);
      row_labels.push_back(data_[b].label);
    }
    const Array features = BatchFeatures(batch, step);
    net_->store().ZeroGrad();
    loss_store_.ZeroGrad();
    ForwardContext ctx;
    ctx.training = true;
    Tensor loss = objective_->Loss(net_->Embed(Tensor::Constant(features), ctx),
                                   row_labels);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
      throw NumericError("training loss diverged at epoch " +
                         std::to_string(epoch_) + " step " +
                         std::to_string(step) + " (value " +
                         std::to_string(value) + ")");
    }
    loss.Backward();
    const double lr = config_.schedule.At(epoch_, step, steps);
    adam_->Step(lr);
    loss_sum += value;
    stats.last_lr = lr;
  }
  stats.steps = steps;
  stats.mean_loss = loss_sum / static_cast<double>(steps);
  ++epoch_;
  return stats;
}

Checkpoint Trainer::MakeTrainingCheckpoint() const {
  std::vector<NamedTensor> extra;
  for (const NamedTensor& p : loss_store_.parameters()) {
    extra.push_back({p.name, Tensor::Constant(p.tensor.value())});
  }
  for (NamedTensor& b : adam_->StateBlobs()) extra.push_back(std::move(b));
  extra.push_back({"train.epoch",
                   Tensor::Constant(Array({1}, static_cast<double>(epoch_)))});
  return MakeCheckpoint(*net_, std::move(extra));
}

void Trainer::Restore(const Checkpoint& checkpoint) {
  RestoreNetwork(*net_, checkpoint);
  auto find = [&](const std::string& name) -> const NamedTensor& {
    for (const NamedTensor& b : checkpoint.blobs) {
      if (b.name == name) return b;
    }
    throw ConfigError("checkpoint lacks " + name + "; not a training checkpoint");
  };
  for (NamedTensor& p : loss_store_.parameters()) {
    const NamedTensor& b = find(p.name);
    if (b.tensor.shape() != p.tensor.shape()) {
      throw ConfigError("checkpoint shape mismatch for " + p.name +
                        " (different speaker count?)");
    }
    p.tensor.mutable_value() = b.tensor.value();
  }
  adam_->LoadState(checkpoint.blobs);
  epoch_ = static_cast<int64_t>(find("train.epoch").tensor.value()[0]);
}

Waveform EmbeddingCache::Load(const std::string& path) {
  return ReadWav((fs::path(root_) / path).string());
}

const std::vector<double>& EmbeddingCache::Get(const std::string& path,
                                               Duration duration) {
  const auto key = std::make_pair(path, static_cast<int>(duration));
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  const Waveform wave = ApplyDuration(Load(path), duration);
  return cache_.emplace(key, EmbedWaveform(net_, wave, path).embedding)
      .first->second;
}

EvalReport Evaluate(Network& net, const std::string& root,
                    const std::vector<Trial>& trials, Backend backend,
                    Duration duration, int64_t top_k) {
  if (trials.empty()) throw ContractError("no trials to evaluate");
  EvalReport report;
  report.backend = backend;
  report.duration = duration;
  EmbeddingCache cache(net, root);
  auto embed = [&](const Waveform& w) {
    return EmbedWaveform(net, w, "segment").embedding;
  };
  for (const Trial& t : trials) {
    report.labels.push_back(t.label);
    switch (backend) {
      case Backend::kCos:
      case Backend::kSn:
        report.scores.push_back(
            CosineScore(cache.Get(t.enroll), cache.Get(t.test, duration)));
        break;
      case Backend::kTta:
        report.scores.push_back(
            TtaScore(cache.Load(t.enroll),
                     ApplyDuration(cache.Load(t.test), duration), embed));
        break;
    }
  }
  if (backend == Backend::kSn) {
    std::vector<std::vector<double>> cohort;
    for (const ManifestEntry& e :
         ReadManifest((fs::path(root) / "manifest.txt").string())) {
      if (e.split == "train") cohort.push_back(cache.Get(e.path));
    }
    const int64_t k = std::min<int64_t>(top_k, static_cast<int64_t>(cohort.size()));
    auto stats = [&](const std::vector<double>& e) {
      std::vector<double> s;
      for (const auto& c : cohort) s.push_back(CosineScore(e, c));
      return TopKStats(s, k);
    };
    for (size_t i = 0; i < trials.size(); ++i) {
      report.scores[i] = SNorm(report.scores[i], stats(cache.Get(trials[i].enroll)),
                               stats(cache.Get(trials[i].test, duration)));
    }
  }
  report.eer = Eer(report.scores, report.labels);
  report.min_dcf = MinDcf(report.scores, report.labels);
  return report;
}

std::string FormatReport(const EvalReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "backend %s\nduration %s\ntrials %zu\nEER(%%) %.2f\n"
                "EER threshold %.6f\nMinDCF %.3f\nMinDCF threshold %.6f\n",
                BackendName(report.backend).c_str(),
                DurationName(report.duration).c_str(), report.scores.size(),
                100.0 * report.eer.value, report.eer.threshold,
                report.min_dcf.value, report.min_dcf.threshold);
  return buf;
}

std::vector<AttentionTable> AnalyzeAttention(Network& net, const Waveform& wave,
                                             const std::vector<double>& factors) {
  const NetworkConfig& config = net.config();
  if (!config.has_front() || !config.front_channel_attention()) {
    throw ConfigError("variant " + VariantName(config.variant) +
                      " has no channel-wise SKA in its front network");
  }
  const SkaConfig& traced = net.front.back().channel_ska.config();
  if (traced.kernel_sizes != std::vector<int64_t>{3, 5}) {
    throw ConfigError("attention analysis expects 3x3 and 5x5 kernels");
  }
  std::vector<AttentionTable> tables;
  for (double factor : factors) {
    if (!(factor >= 1.0)) throw ConfigError("upsample factors must be >= 1");
    const Waveform up = Upsample(wave, factor);
    const Array mel = InstanceNormalize(LogMel(up));
    SkaAttentionTrace trace;
    ForwardContext ctx;
    ctx.attention_trace = &trace;
    {
      NoGradGuard guard;
      net.Embed(Tensor::Constant(mel.Reshaped({1, mel.dim(0), mel.dim(1)})), ctx);
    }
    if (trace.weights.size() != 2) {
      throw ContractError("attention trace was not captured");
    }
    AttentionTable table;
    table.factor = factor;
    const int64_t channels = trace.weights[0].size();
    for (int64_t c = 0; c < channels; ++c) {
      table.rows.push_back({trace.weights[0][c], trace.weights[1][c]});
    }
    tables.push_back(std::move(table));
  }
  return tables;
}

std::string FormatAttentionCsv(const AttentionTable& table) {
  std::string out = "channel,a3,a5\n";
  char buf[96];
  for (size_t c = 0; c < table.rows.size(); ++c) {
    std::snprintf(buf, sizeof(buf), "%zu,%.12f,%.12f\n", c, table.rows[c][0],
                  table.rows[c][1]);
    out += buf;
  }
  return out;
}

}  // namespace ska
