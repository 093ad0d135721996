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

#ifndef SKA_RUN_CONFIG_H_
#define SKA_RUN_CONFIG_H_

#include <cstdint>
#include <string>

#include "ska/network.h"
#include "ska/objectives.h"
#include "ska/scoring.h"
#include "ska/synth.h"

namespace ska {

// Everything a command needs, read from a sectioned key=value file:
// [model] [data] [train] [eval] [run]. Missing keys keep their defaults;
// unknown sections or keys are rejected.
struct RunConfig {
  // [model]
  Variant variant = Variant::kSkaTdnn;
  std::string size = "toy";  // toy | full

  // [data]
  std::string data_dir = "data";
  // Corpus shape; the seed comes from [run].
  SynthConfig synth;

  // [train]
  int64_t epochs = 12;
  int64_t batch_speakers = 7;
  double crop_seconds = 2.0;
  double augment_prob = 0.5;
  double snr_min_db = 5.0;
  double snr_max_db = 20.0;
  LrSchedule schedule;
  AdamConfig adam;
  AamConfig aam;
  ApConfig ap;

  // [eval]
  Backend backend = Backend::kCos;
  Duration duration = Duration::kFull;
  int64_t top_k = 50000;

  // [run]
  uint64_t seed = 1;
  // OpenMP threads; 0 keeps the runtime default.
  int threads = 0;

  NetworkConfig network() const;
  // Corpus settings with the run seed applied.
  SynthConfig synth_config() const {
    SynthConfig s = synth;
    s.seed = seed;
    return s;
  }
  // Rejects every NetworkConfig and hyper-parameter violation with
  // ConfigError.
  void Validate() const;
  // Canonical text of every field; parsing it gives back the same config.
  std::string ToIni() const;
};

RunConfig ParseRunConfig(const std::string& text);
RunConfig ReadRunConfig(const std::string& path);

}  // namespace ska

#endif  // SKA_RUN_CONFIG_H_
