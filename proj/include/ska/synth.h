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

#ifndef SKA_SYNTH_H_
#define SKA_SYNTH_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ska/features.h"
#include "ska/scoring.h"

namespace ska {

// Generative parameters of one synthetic speaker: a jittered glottal pulse
// train at `f0_hz` shaped by three formant resonators.
struct SynthSpeakerSpec {
  std::string speaker_id;
  double f0_hz = 120.0;
  std::array<double, 3> formants_hz = {500.0, 1500.0, 2500.0};
  std::array<double, 3> bandwidths_hz = {80.0, 110.0, 160.0};
  double jitter = 0.01;   // relative period perturbation
  double shimmer = 0.05;  // relative pulse amplitude perturbation
  double tilt = 0.9;      // one-pole spectral tilt of the source
};

// Independent stream seed for the (a, b) sub-task of a run seeded with
// `seed`.
uint64_t DeriveSeed(uint64_t seed, uint64_t a, uint64_t b);

struct SynthConfig {
  int64_t num_speakers = 20;
  int64_t utts_per_speaker = 10;
  double seconds = 3.0;
  // The last `eval_speakers` speakers are held out of training.
  int64_t eval_speakers = 6;
  int64_t num_trials = 200;
  uint64_t seed = 1;
  // Minimum normalized distance between any two speakers' parameters.
  double min_speaker_distance = 0.25;

  // Throws ConfigError on impossible sizes.
  void Validate() const;
};

// Speakers drawn from `seed` with rejection until every pair is at least
// `min_speaker_distance` apart (log F0 and log formants, scaled by their
// sampling ranges).
std::vector<SynthSpeakerSpec> MakeSpeakers(const SynthConfig& config);
double SpeakerDistance(const SynthSpeakerSpec& a, const SynthSpeakerSpec& b);

// One utterance; depends only on (spec, seed, utterance index, seconds).
Waveform SynthesizeUtterance(const SynthSpeakerSpec& spec, uint64_t seed,
                             int64_t utterance, double seconds);

struct ManifestEntry {
  std::string speaker_id;
  std::string split;  // "train" or "eval"
  std::string path;   // relative to the dataset root
};

// "speaker split path" lines.
std::vector<ManifestEntry> ReadManifest(const std::string& path);
void WriteManifest(const std::string& path,
                   const std::vector<ManifestEntry>& entries);

// Half target and half nontarget pairs among the eval utterances, drawn
// without replacement from `seed`.
std::vector<Trial> MakeTrials(const std::vector<ManifestEntry>& entries,
                              int64_t num_trials, uint64_t seed);

// Writes <root>/wav/<speaker>/<utt>.wav, <root>/manifest.txt,
// <root>/speakers.txt and <root>/trials.txt. Returns the manifest.
std::vector<ManifestEntry> SynthesizeDataset(const SynthConfig& config,
                                             const std::string& root);

}  // namespace ska

#endif  // SKA_SYNTH_H_
