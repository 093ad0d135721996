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

#include "ska/run_config.h"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <type_traits>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ska/error.h"

namespace ska {

namespace pt = boost::property_tree;

NetworkConfig RunConfig::network() const {
  if (size == "toy") return NetworkConfig::Toy(variant);
  if (size == "full") return NetworkConfig::Full(variant);
  throw ConfigError("model size must be toy or full, got '" + size + "'");
}

void RunConfig::Validate() const {
  network().Validate();
  synth.Validate();
  schedule.Validate();
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_speakers < 2) throw ConfigError("train.batch_speakers must be >= 2");
  if (!(crop_seconds >= 0.5)) throw ConfigError("train.crop_seconds must be >= 0.5");
  if (!(augment_prob >= 0.0 && augment_prob <= 1.0)) {
    throw ConfigError("train.augment_prob must lie in [0, 1]");
  }
  if (!(snr_min_db <= snr_max_db)) {
    throw ConfigError("train.snr_min_db must not exceed train.snr_max_db");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 &&
        adam.beta2 < 1.0 && adam.eps > 0.0 && adam.weight_decay >= 0.0)) {
    throw ConfigError("invalid Adam hyper-parameters");
  }
  if (!(aam.scale > 0.0 && aam.margin >= 0.0)) {
    throw ConfigError("AAM needs a positive scale and non-negative margin");
  }
  if (top_k < 1) throw ConfigError("eval.top_k must be >= 1");
  if (threads < 0) throw ConfigError("run.threads must be >= 0");
}

namespace {

std::string Text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
  requires std::is_integral_v<T>
std::string Text(T v) {
  return std::to_string(v);
}

template <typename T>
T ParseValue(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  if (!(in >> value) || !(in >> std::ws).eof()) {
    throw ConfigError("cannot parse " + key + " = '" + text + "'");
  }
  return value;
}

// key -> (getter as text, setter from text)
struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define SKA_FIELD(expr, type)                                              \
  Field {                                                                  \
    [](const RunConfig& c) { return Text(c.expr); },   \
        [](RunConfig& c, const std::string& v) {                           \
          c.expr = ParseValue<type>(#expr, v);                             \
        }                                                                  \
  }

const std::map<std::string, Field>& Fields() {
  static const std::map<std::string, Field> fields = {
      {"model.variant",
       {[](const RunConfig& c) { return VariantName(c.variant); },
        [](RunConfig& c, const std::string& v) { c.variant = ParseVariant(v); }}},
      {"model.size",
       {[](const RunConfig& c) { return c.size; },
        [](RunConfig& c, const std::string& v) { c.size = v; }}},
      {"data.dir",
       {[](const RunConfig& c) { return c.data_dir; },
        [](RunConfig& c, const std::string& v) { c.data_dir = v; }}},
      {"data.num_speakers", SKA_FIELD(synth.num_speakers, int64_t)},
      {"data.utts_per_speaker", SKA_FIELD(synth.utts_per_speaker, int64_t)},
      {"data.seconds", SKA_FIELD(synth.seconds, double)},
      {"data.eval_speakers", SKA_FIELD(synth.eval_speakers, int64_t)},
      {"data.num_trials", SKA_FIELD(synth.num_trials, int64_t)},
      {"data.min_speaker_distance", SKA_FIELD(synth.min_speaker_distance, double)},
      {"train.epochs", SKA_FIELD(epochs, int64_t)},
      {"train.batch_speakers", SKA_FIELD(batch_speakers, int64_t)},
      {"train.crop_seconds", SKA_FIELD(crop_seconds, double)},
      {"train.augment_prob", SKA_FIELD(augment_prob, double)},
      {"train.snr_min_db", SKA_FIELD(snr_min_db, double)},
      {"train.snr_max_db", SKA_FIELD(snr_max_db, double)},
      {"train.cycle_epochs", SKA_FIELD(schedule.cycle_epochs, int64_t)},
      {"train.max_lr", SKA_FIELD(schedule.max_lr, double)},
      {"train.cycle_decay", SKA_FIELD(schedule.decay, double)},
      {"train.lr_floor", SKA_FIELD(schedule.floor, double)},
      {"train.warmup_epochs", SKA_FIELD(schedule.warmup_epochs, double)},
      {"train.beta1", SKA_FIELD(adam.beta1, double)},
      {"train.beta2", SKA_FIELD(adam.beta2, double)},
      {"train.adam_eps", SKA_FIELD(adam.eps, double)},
      {"train.weight_decay", SKA_FIELD(adam.weight_decay, double)},
      {"train.aam_margin", SKA_FIELD(aam.margin, double)},
      {"train.aam_scale", SKA_FIELD(aam.scale, double)},
      {"train.ap_init_w", SKA_FIELD(ap.init_w, double)},
      {"train.ap_init_b", SKA_FIELD(ap.init_b, double)},
      {"eval.backend",
       {[](const RunConfig& c) { return BackendName(c.backend); },
        [](RunConfig& c, const std::string& v) { c.backend = ParseBackend(v); }}},
      {"eval.duration",
       {[](const RunConfig& c) { return DurationName(c.duration); },
        [](RunConfig& c, const std::string& v) { c.duration = ParseDuration(v); }}},
      {"eval.top_k", SKA_FIELD(top_k, int64_t)},
      {"run.seed", SKA_FIELD(seed, uint64_t)},
      {"run.threads", SKA_FIELD(threads, int)},
  };
  return fields;
}

#undef SKA_FIELD

}  // namespace

std::string RunConfig::ToIni() const {
  std::string out;
  // Sections in a fixed order; keys sorted within each.
  for (const char* s : {"model", "data", "train", "eval", "run"}) {
    out += std::string(out.empty() ? "" : "\n") + "[" + s + "]\n";
    for (const auto& [key, field] : Fields()) {
      const size_t dot = key.find('.');
      if (key.compare(0, dot, s) != 0) continue;
      out += key.substr(dot + 1) + " = " + field.get(*this) + "\n";
    }
  }
  return out;
}

RunConfig ParseRunConfig(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  RunConfig config;
  for (const auto& [section, keys] : tree) {
    if (keys.empty() && !keys.data().empty()) {
      throw ConfigError("config key '" + section + "' outside any section");
    }
    for (const auto& [key, value] : keys) {
      const std::string full = section + "." + key;
      const auto it = Fields().find(full);
      if (it == Fields().end()) throw ConfigError("unknown config key " + full);
      it->second.set(config, value.data());
    }
  }
  return config;
}

RunConfig ReadRunConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseRunConfig(buffer.str());
}

}  // namespace ska
