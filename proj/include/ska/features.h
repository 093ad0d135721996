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

#ifndef SKA_FEATURES_H_
#define SKA_FEATURES_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ska/array.h"

namespace ska {

inline constexpr int kSampleRate = 16000;
inline constexpr int64_t kWindowLength = 400;
inline constexpr int64_t kHopLength = 160;
inline constexpr int64_t kFftSize = 512;
inline constexpr int64_t kNumMelBins = 80;
inline constexpr double kMelLowHz = 20.0;
inline constexpr double kMelHighHz = 7600.0;
inline constexpr double kLogFloor = 1e-6;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
  double seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

double HzToMel(double hz);
double MelToHz(double mel);

// (kNumMelBins, kFftSize / 2 + 1) triangular filters, triangles in mel.
const Array& MelFilterBank();

int64_t NumFrames(int64_t num_samples);

// (kNumMelBins, T) log mel energies. Throws ContractError when the input is
// shorter than one window.
Array LogMel(const Waveform& wave);

// Per-bin zero mean and unit variance over time. Rows with std below 1e-8
// become zero.
Array InstanceNormalize(const Array& mel);

// Repeats the waveform end to end until it holds at least `min_length`
// samples.
Waveform Tile(const Waveform& wave, int64_t min_length);

int64_t SecondsToSamples(double seconds);

// Center window of round(seconds * 16000) samples. Short inputs are tiled
// first.
Waveform CropMiddle(const Waveform& wave, double seconds);
Waveform CropAt(const Waveform& wave, double seconds, int64_t start);
Waveform RandomCrop(const Waveform& wave, double seconds, std::mt19937_64& rng);

// Linear interpolation to round(factor * len) samples; sample i reads the
// input at position i / factor, clamped to the last sample.
Waveform Upsample(const Waveform& wave, double factor);

// Adds white noise at the given signal-to-noise ratio.
void AddNoise(Waveform& wave, double snr_db, std::mt19937_64& rng);

// 16-bit PCM mono 16 kHz only; anything else raises IoError.
Waveform ReadWav(const std::string& path);
void WriteWav(const std::string& path, const Waveform& wave);

}  // namespace ska

#endif  // SKA_FEATURES_H_
