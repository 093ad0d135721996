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

#ifndef SKA_SCORING_H_
#define SKA_SCORING_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ska/features.h"

namespace ska {

enum class Backend { kCos, kTta, kSn };
std::string BackendName(Backend backend);
// "cos", "tta" or "sn"; throws ConfigError otherwise.
Backend ParseBackend(const std::string& name);

// dot / (|a| |b|). Throws NumericError when either vector has zero norm.
double CosineScore(std::span<const double> a, std::span<const double> b);

inline constexpr int kTtaSegments = 10;
inline constexpr double kTtaSegmentSeconds = 4.0;

// Ten 4 s segments starting at round(i * (len - L) / 9). A shorter wave is
// tiled and middle-cropped to 4 s, so all segments coincide.
std::vector<Waveform> TtaSegments(const Waveform& wave);

using EmbedFn = std::function<std::vector<double>(const Waveform&)>;
// Mean of the 100 cosines between enrollment and test segment embeddings.
double TtaScore(const std::vector<std::vector<double>>& enroll_segments,
                const std::vector<std::vector<double>>& test_segments);
double TtaScore(const Waveform& enroll, const Waveform& test,
                const EmbedFn& embed);

struct CohortStats {
  double mean = 0.0;
  double std = 0.0;
};

// Mean and population standard deviation of the top_k largest scores.
// Throws ContractError when top_k is outside [1, size] and NumericError
// when the selected scores have zero spread (below 1e-12 relative to the
// mean).
CohortStats TopKStats(std::span<const double> cohort_scores, int64_t top_k);

// Symmetric adaptive normalization of one raw score.
double SNorm(double raw, const CohortStats& enroll, const CohortStats& test);

// One entry per trial: raw score plus that trial's enrollment-side and
// test-side cohort scores.
std::vector<double> SNormFromCohortScores(
    std::span<const double> raw,
    const std::vector<std::vector<double>>& enroll_cohort,
    const std::vector<std::vector<double>>& test_cohort, int64_t top_k);

// Cosine scores of enrollment/test embeddings normalized against a cohort
// of embeddings. `pairs` index into `enroll` and `test` per trial.
std::vector<double> AdaptiveSNorm(
    const std::vector<std::vector<double>>& enroll,
    const std::vector<std::vector<double>>& test,
    const std::vector<std::pair<size_t, size_t>>& pairs,
    const std::vector<std::vector<double>>& cohort, int64_t top_k);

struct MetricPoint {
  double value = 0.0;
  double threshold = 0.0;
};

// Thresholds are the midpoints of the sorted unique scores plus -inf and
// +inf. A trial is accepted when its score exceeds the threshold. The EER is
// read off the linear interpolation of (FAR, FRR) between the two adjacent
// thresholds where FRR - FAR changes sign; the threshold is interpolated the
// same way, with the sentinels replaced by the lowest and highest score.
// Throws ContractError unless both classes are present or sizes disagree.
MetricPoint Eer(std::span<const double> scores, std::span<const int> labels);

struct DcfParams {
  double p_target = 0.05;
  double c_miss = 1.0;
  double c_fa = 1.0;
};

// Minimum over the same thresholds of the detection cost, normalized by
// min(c_miss * p_target, c_fa * (1 - p_target)).
MetricPoint MinDcf(std::span<const double> scores, std::span<const int> labels,
                   const DcfParams& params = {});

enum class Duration { kFull, k3s, k1_5s };
std::string DurationName(Duration duration);
// "full", "3.0" or "1.5"; throws ConfigError otherwise.
Duration ParseDuration(const std::string& name);
// Identity for kFull, otherwise a middle crop with the duplication rule.
Waveform ApplyDuration(const Waveform& test, Duration duration);

struct Trial {
  int label = 0;  // 1 target, 0 nontarget
  std::string enroll;
  std::string test;
};

// "label enroll test" per line; throws IoError on malformed lines.
std::vector<Trial> ParseTrials(const std::string& text);
std::vector<Trial> ReadTrials(const std::string& path);
void WriteTrials(const std::string& path, const std::vector<Trial>& trials);

// "score label enroll test" with six fractional digits.
std::string FormatScores(const std::vector<Trial>& trials,
                         std::span<const double> scores);
void WriteScores(const std::string& path, const std::vector<Trial>& trials,
                 std::span<const double> scores);

}  // namespace ska

#endif  // SKA_SCORING_H_
