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

#include "ska/features.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>

#include "ska/error.h"

namespace ska {
namespace {

constexpr int64_t kNumFftBins = kFftSize / 2 + 1;
constexpr double kPcmScale = 32767.0;

Array BuildFilterBank() {
  Array bank({kNumMelBins, kNumFftBins}, 0.0);
  const double low = HzToMel(kMelLowHz), high = HzToMel(kMelHighHz);
  const double step = (high - low) / (kNumMelBins + 1);
  for (int64_t m = 0; m < kNumMelBins; ++m) {
    const double left = low + m * step;
    const double center = left + step;
    const double right = center + step;
    for (int64_t k = 0; k < kNumFftBins; ++k) {
      const double mel =
          HzToMel(static_cast<double>(k) * kSampleRate / kFftSize);
      const double up = (mel - left) / (center - left);
      const double down = (right - mel) / (right - center);
      bank.at({m, k}) = std::max(0.0, std::min(up, down));
    }
  }
  return bank;
}

// Plan creation is not thread-safe in FFTW; execution on fresh arrays is.
class RealFft {
 public:
  static const RealFft& Get() {
    static const RealFft instance;
    return instance;
  }
  void Execute(double* in, fftw_complex* out) const {
    fftw_execute_dft_r2c(plan_, in, out);
  }

 private:
  RealFft() {
    double* in = fftw_alloc_real(kFftSize);
    fftw_complex* out = fftw_alloc_complex(kNumFftBins);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), in, out,
                                 FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
  }
  fftw_plan plan_;
};

const std::vector<double>& HammingWindow() {
  static const std::vector<double> window = [] {
    std::vector<double> w(kWindowLength);
    for (int64_t n = 0; n < kWindowLength; ++n) {
      w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n /
                                    (kWindowLength - 1));
    }
    return w;
  }();
  return window;
}

uint32_t ReadU32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t ReadU16(const unsigned char* p) { return p[0] | (p[1] << 8); }

void PutU32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void PutU16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

const Array& MelFilterBank() {
  static const Array bank = BuildFilterBank();
  return bank;
}

int64_t NumFrames(int64_t num_samples) {
  if (num_samples < kWindowLength) return 0;
  return 1 + (num_samples - kWindowLength) / kHopLength;
}

Array LogMel(const Waveform& wave) {
  if (wave.sample_rate != kSampleRate) {
    throw ContractError("log-mel expects 16 kHz audio");
  }
  const int64_t frames = NumFrames(wave.size());
  if (frames == 0) {
    throw ContractError("waveform of " + std::to_string(wave.size()) +
                        " samples is shorter than one 400-sample window");
  }
  const Array& bank = MelFilterBank();
  const std::vector<double>& window = HammingWindow();
  const RealFft& fft = RealFft::Get();
  Array mel({kNumMelBins, frames});
#pragma omp parallel
  {
    double* in = fftw_alloc_real(kFftSize);
    fftw_complex* out = fftw_alloc_complex(kNumFftBins);
    std::vector<double> power(kNumFftBins);
#pragma omp for schedule(static)
    for (int64_t t = 0; t < frames; ++t) {
      const double* src = wave.samples.data() + t * kHopLength;
      for (int64_t n = 0; n < kWindowLength; ++n) in[n] = src[n] * window[n];
      std::fill(in + kWindowLength, in + kFftSize, 0.0);
      fft.Execute(in, out);
      for (int64_t k = 0; k < kNumFftBins; ++k) {
        power[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
      }
      for (int64_t m = 0; m < kNumMelBins; ++m) {
        const double* row = bank.data() + m * kNumFftBins;
        double e = 0.0;
        for (int64_t k = 0; k < kNumFftBins; ++k) e += row[k] * power[k];
        mel[m * frames + t] = std::log(e + kLogFloor);
      }
    }
    fftw_free(in);
    fftw_free(out);
  }
  return mel;
}

Array InstanceNormalize(const Array& mel) {
  if (mel.rank() != 2) throw ContractError("InstanceNormalize expects (F, T)");
  const int64_t bins = mel.dim(0), frames = mel.dim(1);
  Array out(mel.shape());
  for (int64_t f = 0; f < bins; ++f) {
    const double* row = mel.data() + f * frames;
    double mean = 0.0;
    for (int64_t t = 0; t < frames; ++t) mean += row[t];
    mean /= frames;
    double var = 0.0;
    for (int64_t t = 0; t < frames; ++t) var += (row[t] - mean) * (row[t] - mean);
    const double sd = std::sqrt(var / frames);
    double* dst = out.data() + f * frames;
    for (int64_t t = 0; t < frames; ++t) {
      dst[t] = sd < 1e-8 ? 0.0 : (row[t] - mean) / sd;
    }
  }
  return out;
}

Waveform Tile(const Waveform& wave, int64_t min_length) {
  if (wave.samples.empty()) throw ContractError("cannot tile an empty waveform");
  Waveform out{wave.samples, wave.sample_rate};
  while (out.size() < min_length) {
    out.samples.insert(out.samples.end(), wave.samples.begin(),
                       wave.samples.end());
  }
  return out;
}

int64_t SecondsToSamples(double seconds) {
  if (!(seconds > 0.0)) throw ContractError("crop length must be positive");
  return std::max<int64_t>(1, std::llround(seconds * kSampleRate));
}

Waveform CropAt(const Waveform& wave, double seconds, int64_t start) {
  const int64_t length = SecondsToSamples(seconds);
  Waveform tiled = Tile(wave, length);
  if (start < 0 || start + length > tiled.size()) {
    throw ContractError("crop window out of range");
  }
  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples.assign(tiled.samples.begin() + start,
                     tiled.samples.begin() + start + length);
  return out;
}

Waveform CropMiddle(const Waveform& wave, double seconds) {
  const int64_t length = SecondsToSamples(seconds);
  const int64_t available = Tile(wave, length).size();
  return CropAt(wave, seconds, (available - length) / 2);
}

Waveform RandomCrop(const Waveform& wave, double seconds,
                    std::mt19937_64& rng) {
  const int64_t length = SecondsToSamples(seconds);
  const int64_t available = Tile(wave, length).size();
  std::uniform_int_distribution<int64_t> start(0, available - length);
  return CropAt(wave, seconds, start(rng));
}

Waveform Upsample(const Waveform& wave, double factor) {
  if (!(factor >= 1.0)) throw ContractError("upsample factor must be >= 1");
  if (wave.samples.empty()) throw ContractError("cannot upsample empty audio");
  const int64_t n = wave.size();
  const int64_t out_n = std::llround(factor * n);
  Waveform out;
  out.sample_rate = wave.sample_rate;
  out.samples.resize(out_n);
  for (int64_t i = 0; i < out_n; ++i) {
    const double pos = std::min(static_cast<double>(i) / factor,
                                static_cast<double>(n - 1));
    const int64_t lo = static_cast<int64_t>(std::floor(pos));
    const int64_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - lo;
    out.samples[i] = (1.0 - frac) * wave.samples[lo] + frac * wave.samples[hi];
  }
  return out;
}

void AddNoise(Waveform& wave, double snr_db, std::mt19937_64& rng) {
  double energy = 0.0;
  for (double v : wave.samples) energy += v * v;
  energy /= std::max<int64_t>(1, wave.size());
  if (energy == 0.0) return;
  const double noise_sd = std::sqrt(energy / std::pow(10.0, snr_db / 10.0));
  std::normal_distribution<double> normal(0.0, noise_sd);
  for (double& v : wave.samples) v += normal(rng);
}

Waveform ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 ||
      std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw IoError(path + " is not a RIFF/WAVE file");
  }
  bool have_format = false;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint32_t size = ReadU32(p + pos + 4);
    const unsigned char* body = p + pos + 8;
    if (pos + 8 + size > bytes.size()) throw IoError(path + " is truncated");
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (size < 16) throw IoError(path + " has a short fmt chunk");
      const uint16_t format = ReadU16(body);
      const uint16_t channels = ReadU16(body + 2);
      const uint32_t rate = ReadU32(body + 4);
      const uint16_t bits = ReadU16(body + 14);
      if (format != 1 || channels != 1 || rate != kSampleRate || bits != 16) {
        throw IoError(path + ": only 16-bit PCM mono 16 kHz audio is supported"
                      " (format " + std::to_string(format) + ", " +
                      std::to_string(channels) + " channels, " +
                      std::to_string(rate) + " Hz, " + std::to_string(bits) +
                      " bits)");
      }
      have_format = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_format) throw IoError(path + ": data chunk before fmt chunk");
      Waveform wave;
      wave.samples.resize(size / 2);
      for (size_t i = 0; i < wave.samples.size(); ++i) {
        const auto v = static_cast<int16_t>(ReadU16(body + 2 * i));
        wave.samples[i] = v / kPcmScale;
      }
      if (wave.samples.empty()) throw IoError(path + " holds no samples");
      return wave;
    }
    pos += 8 + size + (size & 1);
  }
  throw IoError(path + " has no data chunk");
}

void WriteWav(const std::string& path, const Waveform& wave) {
  if (wave.sample_rate != kSampleRate) {
    throw IoError("only 16 kHz audio can be written");
  }
  const uint32_t data_bytes = static_cast<uint32_t>(wave.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  PutU32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  PutU32(out, 16);
  PutU16(out, 1);
  PutU16(out, 1);
  PutU32(out, kSampleRate);
  PutU32(out, kSampleRate * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  out += "data";
  PutU32(out, data_bytes);
  for (double v : wave.samples) {
    const double clipped = std::clamp(v, -1.0, 1.0);
    PutU16(out, static_cast<uint16_t>(
                    static_cast<int16_t>(std::lround(clipped * kPcmScale))));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("short write to " + path);
}

}  // namespace ska
