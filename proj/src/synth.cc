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

#include "ska/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "ska/error.h"
#include "ska/network.h"

namespace ska {

namespace {

// Sampling ranges of the speaker parameters.
constexpr double kF0Lo = 85.0, kF0Hi = 260.0;
constexpr std::array<double, 3> kFormantLo = {300.0, 900.0, 2200.0};
constexpr std::array<double, 3> kFormantHi = {850.0, 2300.0, 3400.0};

// Shared "vowel" formant multipliers; utterances move through them so that
// content varies independently of the speaker.
constexpr std::array<std::array<double, 3>, 6> kVowels = {{
    {1.00, 1.00, 1.00},
    {1.25, 0.80, 0.97},
    {0.75, 1.20, 1.03},
    {1.10, 1.10, 0.95},
    {0.85, 0.90, 1.05},
    {1.15, 0.70, 1.00},
}};

double LogRange(double lo, double hi) { return std::log(hi) - std::log(lo); }

// Two-pole resonator coefficients for a formant.
struct Resonator {
  double a1 = 0.0, a2 = 0.0, gain = 1.0;
  double y1 = 0.0, y2 = 0.0;

  void Set(double freq, double bandwidth) {
    const double r = std::exp(-std::numbers::pi * bandwidth / kSampleRate);
    a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / kSampleRate);
    a2 = -r * r;
    gain = 1.0 - r;
  }
  double Step(double x) {
    const double y = gain * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

uint64_t DeriveSeed(uint64_t seed, uint64_t a, uint64_t b) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(a), static_cast<uint32_t>(a >> 32),
                    static_cast<uint32_t>(b)};
  std::array<uint32_t, 2> words;
  seq.generate(words.begin(), words.end());
  return (static_cast<uint64_t>(words[0]) << 32) | words[1];
}

void SynthConfig::Validate() const {
  if (num_speakers < 3 || utts_per_speaker < 2) {
    throw ConfigError("synthetic corpus needs >= 3 speakers and >= 2 "
                      "utterances per speaker");
  }
  if (eval_speakers < 2 || eval_speakers > num_speakers - 2) {
    throw ConfigError("eval_speakers must leave >= 2 training speakers and "
                      "be >= 2");
  }
  if (!(seconds >= 0.5)) throw ConfigError("utterances must be >= 0.5 s");
  if (num_trials < 2 || num_trials % 2 != 0) {
    throw ConfigError("num_trials must be even and >= 2");
  }
  const int64_t targets =
      eval_speakers * utts_per_speaker * (utts_per_speaker - 1) / 2;
  const int64_t nontargets = eval_speakers * (eval_speakers - 1) / 2 *
                             utts_per_speaker * utts_per_speaker;
  if (num_trials / 2 > targets || num_trials / 2 > nontargets) {
    throw ConfigError("not enough eval pairs for " +
                      std::to_string(num_trials) + " trials");
  }
}

double SpeakerDistance(const SynthSpeakerSpec& a, const SynthSpeakerSpec& b) {
  double d2 = 0.0;
  const double f0 = std::log(a.f0_hz / b.f0_hz) / LogRange(kF0Lo, kF0Hi);
  d2 += f0 * f0;
  for (int k = 0; k < 3; ++k) {
    const double f = std::log(a.formants_hz[k] / b.formants_hz[k]) /
                     LogRange(kFormantLo[k], kFormantHi[k]);
    d2 += f * f;
  }
  return std::sqrt(d2);
}

std::vector<SynthSpeakerSpec> MakeSpeakers(const SynthConfig& config) {
  std::mt19937_64 rng(DeriveSeed(config.seed, 0x5eed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) {
    return lo * std::exp(unit(rng) * LogRange(lo, hi));
  };
  std::vector<SynthSpeakerSpec> speakers;
  int attempts = 0;
  while (static_cast<int64_t>(speakers.size()) < config.num_speakers) {
    if (++attempts > 100000) {
      throw ConfigError("cannot place " + std::to_string(config.num_speakers) +
                        " speakers at distance " +
                        std::to_string(config.min_speaker_distance));
    }
    SynthSpeakerSpec s;
    s.f0_hz = log_uniform(kF0Lo, kF0Hi);
    for (int k = 0; k < 3; ++k) {
      s.formants_hz[k] = log_uniform(kFormantLo[k], kFormantHi[k]);
      s.bandwidths_hz[k] = (60.0 + 40.0 * k) * (0.8 + 0.4 * unit(rng));
    }
    s.jitter = 0.005 + 0.02 * unit(rng);
    s.shimmer = 0.02 + 0.1 * unit(rng);
    s.tilt = 0.8 + 0.17 * unit(rng);
    bool far_enough = true;
    for (const SynthSpeakerSpec& o : speakers) {
      if (SpeakerDistance(s, o) < config.min_speaker_distance) {
        far_enough = false;
        break;
      }
    }
    if (!far_enough) continue;
    char id[32];
    std::snprintf(id, sizeof(id), "spk%03zu", speakers.size());
    s.speaker_id = id;
    speakers.push_back(s);
  }
  return speakers;
}

Waveform SynthesizeUtterance(const SynthSpeakerSpec& spec, uint64_t seed,
                             int64_t utterance, double seconds) {
  const uint64_t speaker_hash = Fnv1a64(spec.speaker_id);
  std::mt19937_64 rng(DeriveSeed(seed, speaker_hash, static_cast<uint64_t>(utterance)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Waveform wave;
  const int64_t n = SecondsToSamples(seconds);
  wave.samples.assign(static_cast<size_t>(n), 0.0);

  // Per-utterance prosody: pitch offset, declination and slow vibrato.
  const double pitch = spec.f0_hz * (1.0 + 0.04 * normal(rng));
  const double declination = 0.1 * unit(rng);
  const double vibrato_rate = 3.0 + 3.0 * unit(rng);
  const double vibrato_depth = 0.02 * unit(rng);

  // Syllables of 120-320 ms, each a vowel with its own loudness.
  struct Syllable {
    int64_t start, length;
    int vowel;
    double loudness;
    bool voiced;
  };
  std::vector<Syllable> syllables;
  for (int64_t t = 0; t < n;) {
    Syllable s;
    s.start = t;
    s.length = static_cast<int64_t>((0.12 + 0.2 * unit(rng)) * kSampleRate);
    s.vowel = static_cast<int>(rng() % kVowels.size());
    s.loudness = 0.5 + 0.5 * unit(rng);
    s.voiced = unit(rng) > 0.12;
    syllables.push_back(s);
    t += s.length;
  }

  std::array<Resonator, 3> filters;
  double next_pulse = 0.0, pulse_amp = 1.0, source_state = 0.0;
  size_t current = 0;
  for (int64_t i = 0; i < n; ++i) {
    while (current + 1 < syllables.size() &&
           i >= syllables[current + 1].start) {
      ++current;
    }
    const Syllable& syl = syllables[current];
    if (i == syl.start) {
      for (int k = 0; k < 3; ++k) {
        filters[k].Set(spec.formants_hz[k] * kVowels[syl.vowel][k],
                       spec.bandwidths_hz[k]);
      }
    }
    const double time = static_cast<double>(i) / kSampleRate;
    const double f0 =
        pitch * (1.0 - declination * time / std::max(seconds, 1e-9)) *
        (1.0 + vibrato_depth * std::sin(2.0 * std::numbers::pi * vibrato_rate * time));
    double excitation = 0.0;
    if (syl.voiced && static_cast<double>(i) >= next_pulse) {
      excitation = pulse_amp;
      const double period = kSampleRate / f0;
      next_pulse = static_cast<double>(i) +
                   period * (1.0 + spec.jitter * normal(rng));
      pulse_amp = 1.0 + spec.shimmer * normal(rng);
    } else if (!syl.voiced) {
      excitation = 0.05 * normal(rng);
    }
    // Spectral tilt of the glottal source.
    source_state = excitation + spec.tilt * source_state;
    double y = source_state;
    double out = 0.0;
    for (int k = 0; k < 3; ++k) out += filters[k].Step(y) / (k + 1.0);
    // Raised-cosine syllable envelope.
    const double phase = static_cast<double>(i - syl.start) /
                         static_cast<double>(syl.length);
    const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * phase);
    wave.samples[i] = syl.loudness * (0.2 + 0.8 * env) * out;
  }
  // Peak normalization to 0.5 plus a faint noise floor.
  double peak = 1e-12;
  for (double v : wave.samples) peak = std::max(peak, std::abs(v));
  for (double& v : wave.samples) v = 0.5 * v / peak + 1e-3 * normal(rng);
  return wave;
}

std::vector<ManifestEntry> ReadManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    ManifestEntry e;
    if (!(fields >> e.speaker_id >> e.split >> e.path) ||
        (e.split != "train" && e.split != "eval")) {
      throw IoError("malformed manifest line '" + line + "' in " + path);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void WriteManifest(const std::string& path,
                   const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path);
  for (const ManifestEntry& e : entries) {
    out << e.speaker_id << ' ' << e.split << ' ' << e.path << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

std::vector<Trial> MakeTrials(const std::vector<ManifestEntry>& entries,
                              int64_t num_trials, uint64_t seed) {
  std::vector<const ManifestEntry*> eval;
  for (const ManifestEntry& e : entries) {
    if (e.split == "eval") eval.push_back(&e);
  }
  std::vector<Trial> targets, nontargets;
  for (size_t i = 0; i < eval.size(); ++i) {
    for (size_t j = i + 1; j < eval.size(); ++j) {
      const bool same = eval[i]->speaker_id == eval[j]->speaker_id;
      (same ? targets : nontargets)
          .push_back({same ? 1 : 0, eval[i]->path, eval[j]->path});
    }
  }
  const size_t half = static_cast<size_t>(num_trials / 2);
  if (targets.size() < half || nontargets.size() < half) {
    throw ConfigError("not enough eval pairs for " +
                      std::to_string(num_trials) + " trials");
  }
  std::mt19937_64 rng(DeriveSeed(seed, 0x7a1, 0));
  // Partial Fisher-Yates with an explicit index draw, so the selection does
  // not depend on the standard library's shuffle.
  auto pick = [&](std::vector<Trial>& pool) {
    for (size_t i = 0; i < half; ++i) {
      const size_t j = i + static_cast<size_t>(rng() % (pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(half);
  };
  pick(targets);
  pick(nontargets);
  std::vector<Trial> trials;
  for (size_t i = 0; i < half; ++i) {
    trials.push_back(targets[i]);
    trials.push_back(nontargets[i]);
  }
  return trials;
}

std::vector<ManifestEntry> SynthesizeDataset(const SynthConfig& config,
                                             const std::string& root) {
  config.Validate();
  namespace fs = std::filesystem;
  const std::vector<SynthSpeakerSpec> speakers = MakeSpeakers(config);
  std::vector<ManifestEntry> entries;
  for (int64_t s = 0; s < config.num_speakers; ++s) {
    const bool eval = s >= config.num_speakers - config.eval_speakers;
    fs::create_directories(fs::path(root) / "wav" / speakers[s].speaker_id);
    for (int64_t u = 0; u < config.utts_per_speaker; ++u) {
      char name[32];
      std::snprintf(name, sizeof(name), "utt%02lld.wav",
                    static_cast<long long>(u));
      entries.push_back({speakers[s].speaker_id, eval ? "eval" : "train",
                         "wav/" + speakers[s].speaker_id + "/" + name});
    }
  }
  const int64_t count = static_cast<int64_t>(entries.size());
  // Every file depends only on its own indices; workers write distinct paths.
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < count; ++i) {
    const int64_t s = i / config.utts_per_speaker;
    const int64_t u = i % config.utts_per_speaker;
    std::mt19937_64 len_rng(DeriveSeed(config.seed, 0x1e9, static_cast<uint64_t>(i)));
    const double seconds =
        config.seconds * (0.85 + 0.3 * std::uniform_real_distribution<double>(
                                           0.0, 1.0)(len_rng));
    WriteWav((fs::path(root) / entries[i].path).string(),
             SynthesizeUtterance(speakers[s], config.seed, u, seconds));
  }
  WriteManifest((fs::path(root) / "manifest.txt").string(), entries);
  {
    std::ofstream out(fs::path(root) / "speakers.txt");
    char line[256];
    for (const SynthSpeakerSpec& s : speakers) {
      std::snprintf(line, sizeof(line),
                    "%s f0=%.3f f1=%.3f f2=%.3f f3=%.3f jitter=%.4f\n",
                    s.speaker_id.c_str(), s.f0_hz, s.formants_hz[0],
                    s.formants_hz[1], s.formants_hz[2], s.jitter);
      out << line;
    }
  }
  WriteTrials((fs::path(root) / "trials.txt").string(),
              MakeTrials(entries, config.num_trials, config.seed));
  return entries;
}

}  // namespace ska
