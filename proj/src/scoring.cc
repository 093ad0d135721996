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

#include "ska/scoring.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "ska/error.h"

namespace ska {

std::string BackendName(Backend backend) {
  switch (backend) {
    case Backend::kCos:
      return "cos";
    case Backend::kTta:
      return "tta";
    case Backend::kSn:
      return "sn";
  }
  return "?";
}

Backend ParseBackend(const std::string& name) {
  if (name == "cos") return Backend::kCos;
  if (name == "tta") return Backend::kTta;
  if (name == "sn") return Backend::kSn;
  throw ConfigError("unknown backend '" + name + "' (cos, tta, sn)");
}

double CosineScore(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ContractError("cosine score needs equal-length non-empty vectors");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw NumericError("cosine score of a zero-norm embedding");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<Waveform> TtaSegments(const Waveform& wave) {
  const int64_t length = SecondsToSamples(kTtaSegmentSeconds);
  std::vector<Waveform> segments;
  if (wave.size() <= length) {
    const Waveform only = CropMiddle(wave, kTtaSegmentSeconds);
    segments.assign(kTtaSegments, only);
    return segments;
  }
  const int64_t span = wave.size() - length;
  for (int i = 0; i < kTtaSegments; ++i) {
    const int64_t start = std::llround(static_cast<double>(i) *
                                       static_cast<double>(span) /
                                       (kTtaSegments - 1));
    segments.push_back(CropAt(wave, kTtaSegmentSeconds, start));
  }
  return segments;
}

double TtaScore(const std::vector<std::vector<double>>& enroll_segments,
                const std::vector<std::vector<double>>& test_segments) {
  if (enroll_segments.empty() || test_segments.empty()) {
    throw ContractError("TTA score needs segment embeddings on both sides");
  }
  double sum = 0.0;
  for (const auto& e : enroll_segments) {
    for (const auto& t : test_segments) sum += CosineScore(e, t);
  }
  return sum / static_cast<double>(enroll_segments.size() *
                                   test_segments.size());
}

double TtaScore(const Waveform& enroll, const Waveform& test,
                const EmbedFn& embed) {
  std::vector<std::vector<double>> e, t;
  for (const Waveform& w : TtaSegments(enroll)) e.push_back(embed(w));
  for (const Waveform& w : TtaSegments(test)) t.push_back(embed(w));
  return TtaScore(e, t);
}

CohortStats TopKStats(std::span<const double> cohort_scores, int64_t top_k) {
  if (top_k < 1 || top_k > static_cast<int64_t>(cohort_scores.size())) {
    throw ContractError("top_k " + std::to_string(top_k) +
                        " is outside [1, cohort size " +
                        std::to_string(cohort_scores.size()) + "]");
  }
  std::vector<double> sorted(cohort_scores.begin(), cohort_scores.end());
  std::partial_sort(sorted.begin(), sorted.begin() + top_k, sorted.end(),
                    std::greater<>());
  CohortStats stats;
  for (int64_t i = 0; i < top_k; ++i) stats.mean += sorted[i];
  stats.mean /= static_cast<double>(top_k);
  double var = 0.0;
  for (int64_t i = 0; i < top_k; ++i) {
    var += (sorted[i] - stats.mean) * (sorted[i] - stats.mean);
  }
  stats.std = std::sqrt(var / static_cast<double>(top_k));
  // Spread at rounding level of the mean counts as zero.
  if (!(stats.std > 1e-12 * std::max(1.0, std::abs(stats.mean)))) {
    throw NumericError("degenerate cohort: top-k scores have zero spread");
  }
  return stats;
}

double SNorm(double raw, const CohortStats& enroll, const CohortStats& test) {
  return 0.5 * ((raw - enroll.mean) / enroll.std +
                (raw - test.mean) / test.std);
}

std::vector<double> SNormFromCohortScores(
    std::span<const double> raw,
    const std::vector<std::vector<double>>& enroll_cohort,
    const std::vector<std::vector<double>>& test_cohort, int64_t top_k) {
  if (enroll_cohort.size() != raw.size() || test_cohort.size() != raw.size()) {
    throw ContractError("s-norm needs cohort scores for every trial");
  }
  std::vector<double> out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    out[i] = SNorm(raw[i], TopKStats(enroll_cohort[i], top_k),
                   TopKStats(test_cohort[i], top_k));
  }
  return out;
}

std::vector<double> AdaptiveSNorm(
    const std::vector<std::vector<double>>& enroll,
    const std::vector<std::vector<double>>& test,
    const std::vector<std::pair<size_t, size_t>>& pairs,
    const std::vector<std::vector<double>>& cohort, int64_t top_k) {
  auto stats_of = [&](const std::vector<std::vector<double>>& side) {
    std::vector<CohortStats> stats(side.size());
    std::vector<double> scores(cohort.size());
    for (size_t i = 0; i < side.size(); ++i) {
      for (size_t c = 0; c < cohort.size(); ++c) {
        scores[c] = CosineScore(side[i], cohort[c]);
      }
      stats[i] = TopKStats(scores, top_k);
    }
    return stats;
  };
  const std::vector<CohortStats> es = stats_of(enroll);
  const std::vector<CohortStats> ts = stats_of(test);
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [e, t] : pairs) {
    if (e >= enroll.size() || t >= test.size()) {
      throw ContractError("s-norm trial index out of range");
    }
    out.push_back(SNorm(CosineScore(enroll[e], test[t]), es[e], ts[t]));
  }
  return out;
}

namespace {

// Operating points at every threshold of the sweep, in ascending order.
struct Sweep {
  std::vector<double> thresholds;
  std::vector<double> far;
  std::vector<double> frr;
  double lowest = 0.0;
  double highest = 0.0;
};

Sweep MakeSweep(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ContractError("scores and labels differ in length");
  }
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  int64_t targets = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw NumericError("non-finite score");
    if (labels[i] != 0 && labels[i] != 1) {
      throw ContractError("labels must be 0 or 1");
    }
    targets += labels[i];
  }
  const int64_t nontargets = static_cast<int64_t>(scores.size()) - targets;
  if (targets == 0 || nontargets == 0) {
    throw ContractError("metrics need at least one target and one nontarget");
  }
  Sweep s;
  s.lowest = scores[order.front()];
  s.highest = scores[order.back()];
  const double inf = std::numeric_limits<double>::infinity();
  s.thresholds.push_back(-inf);
  s.far.push_back(1.0);
  s.frr.push_back(0.0);
  int64_t targets_below = 0, nontargets_below = 0;
  size_t i = 0;
  while (i < order.size()) {
    const double v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      (labels[order[i]] ? targets_below : nontargets_below) += 1;
      ++i;
    }
    s.thresholds.push_back(i < order.size() ? 0.5 * (v + scores[order[i]])
                                            : inf);
    s.far.push_back(static_cast<double>(nontargets - nontargets_below) /
                    static_cast<double>(nontargets));
    s.frr.push_back(static_cast<double>(targets_below) /
                    static_cast<double>(targets));
  }
  return s;
}

}  // namespace

MetricPoint Eer(std::span<const double> scores, std::span<const int> labels) {
  const Sweep s = MakeSweep(scores, labels);
  size_t i = 0;
  while (s.frr[i] - s.far[i] < 0.0) ++i;
  const double d1 = s.frr[i] - s.far[i];
  if (d1 == 0.0) {
    const double t = std::isfinite(s.thresholds[i])
                         ? s.thresholds[i]
                         : (s.thresholds[i] < 0 ? s.lowest : s.highest);
    return {s.far[i], t};
  }
  const double d0 = s.frr[i - 1] - s.far[i - 1];
  const double alpha = -d0 / (d1 - d0);
  auto finite = [&](double t) {
    if (std::isfinite(t)) return t;
    return t < 0 ? s.lowest : s.highest;
  };
  const double t0 = finite(s.thresholds[i - 1]);
  const double t1 = finite(s.thresholds[i]);
  return {s.far[i - 1] + alpha * (s.far[i] - s.far[i - 1]),
          t0 + alpha * (t1 - t0)};
}

MetricPoint MinDcf(std::span<const double> scores, std::span<const int> labels,
                   const DcfParams& params) {
  if (!(params.p_target > 0.0 && params.p_target < 1.0) ||
      !(params.c_miss > 0.0) || !(params.c_fa > 0.0)) {
    throw ConfigError("DCF needs 0 < p_target < 1 and positive costs");
  }
  const Sweep s = MakeSweep(scores, labels);
  const double miss_weight = params.c_miss * params.p_target;
  const double fa_weight = params.c_fa * (1.0 - params.p_target);
  const double norm = std::min(miss_weight, fa_weight);
  MetricPoint best{std::numeric_limits<double>::infinity(), 0.0};
  for (size_t i = 0; i < s.thresholds.size(); ++i) {
    const double dcf = (miss_weight * s.frr[i] + fa_weight * s.far[i]) / norm;
    if (dcf < best.value) best = {dcf, s.thresholds[i]};
  }
  return best;
}

std::string DurationName(Duration duration) {
  switch (duration) {
    case Duration::kFull:
      return "full";
    case Duration::k3s:
      return "3.0";
    case Duration::k1_5s:
      return "1.5";
  }
  return "?";
}

Duration ParseDuration(const std::string& name) {
  if (name == "full") return Duration::kFull;
  if (name == "3.0" || name == "3") return Duration::k3s;
  if (name == "1.5") return Duration::k1_5s;
  throw ConfigError("unknown duration '" + name + "' (full, 3.0, 1.5)");
}

Waveform ApplyDuration(const Waveform& test, Duration duration) {
  switch (duration) {
    case Duration::kFull:
      return test;
    case Duration::k3s:
      return CropMiddle(test, 3.0);
    case Duration::k1_5s:
      return CropMiddle(test, 1.5);
  }
  return test;
}

std::vector<Trial> ParseTrials(const std::string& text) {
  std::vector<Trial> trials;
  std::istringstream in(text);
  std::string line;
  int64_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    Trial t;
    std::string label, extra;
    if (!(fields >> label >> t.enroll >> t.test) || (fields >> extra) ||
        (label != "0" && label != "1")) {
      throw IoError("malformed trial on line " + std::to_string(number) +
                    ": '" + line + "'");
    }
    t.label = label == "1" ? 1 : 0;
    trials.push_back(std::move(t));
  }
  return trials;
}

std::vector<Trial> ReadTrials(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trial list " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseTrials(buffer.str());
}

void WriteTrials(const std::string& path, const std::vector<Trial>& trials) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trial list " + path);
  for (const Trial& t : trials) {
    out << t.label << ' ' << t.enroll << ' ' << t.test << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

std::string FormatScores(const std::vector<Trial>& trials,
                         std::span<const double> scores) {
  if (trials.size() != scores.size()) {
    throw ContractError("one score per trial required");
  }
  std::string out;
  char buf[64];
  for (size_t i = 0; i < trials.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f %d ", scores[i], trials[i].label);
    out += buf;
    out += trials[i].enroll + ' ' + trials[i].test + '\n';
  }
  return out;
}

void WriteScores(const std::string& path, const std::vector<Trial>& trials,
                 std::span<const double> scores) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write scores " + path);
  out << FormatScores(trials, scores);
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace ska
