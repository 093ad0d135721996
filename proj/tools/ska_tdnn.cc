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

// Command-line front end: synth, train, extract, score, eval, analyze-attn.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ska/error.h"
#include "ska/pipeline.h"
#include "ska/run_config.h"

namespace fs = std::filesystem;
using namespace ska;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

// Flags shared by every subcommand.
struct Common {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out;
};

void AddCommon(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--config", c.config_path, "run configuration file");
  cmd->add_option("--seed", c.seed, "override run.seed");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (out_required) out->required();
}

RunConfig LoadConfig(const Common& c) {
  RunConfig config = c.config_path.empty() ? RunConfig{}
                                           : ReadRunConfig(c.config_path);
  if (c.seed) config.seed = *c.seed;
  config.Validate();
  if (config.threads > 0) omp_set_num_threads(config.threads);
  return config;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

// Creates `dir` and echoes the resolved configuration into it.
void PrepareOutput(const std::string& dir, const RunConfig& config) {
  fs::create_directories(dir);
  WriteText(fs::path(dir) / "config.ini", config.ToIni());
}

// Rebuilds the network recorded in a checkpoint. When a config file was
// given, its model section must describe the same network.
std::unique_ptr<Network> LoadNetwork(const std::string& path,
                                     const Common& common,
                                     const RunConfig& config) {
  const Checkpoint checkpoint = ReadCheckpoint(path);
  const NetworkConfig recorded = ConfigFromText(checkpoint.config_text);
  if (!common.config_path.empty() &&
      config.network().Digest() != recorded.Digest()) {
    throw ConfigError("checkpoint " + path + " holds a " +
                      VariantName(recorded.variant) +
                      " network that does not match the configured " +
                      VariantName(config.variant) + " (" + config.size + ")");
  }
  auto net = std::make_unique<Network>(recorded, 0);
  RestoreNetwork(*net, checkpoint);
  return net;
}

std::vector<std::string> ReadLines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

int RunSynth(const Common& common) {
  const RunConfig config = LoadConfig(common);
  const std::string root = common.out.empty() ? config.data_dir : common.out;
  PrepareOutput(root, config);
  const auto manifest = SynthesizeDataset(config.synth_config(), root);
  std::printf("wrote %zu utterances of %lld speakers to %s\n", manifest.size(),
              static_cast<long long>(config.synth.num_speakers), root.c_str());
  return kExitOk;
}

int RunTrain(const Common& common, const std::string& data_override,
             std::optional<int64_t> epochs, bool resume) {
  RunConfig config = LoadConfig(common);
  if (!data_override.empty()) config.data_dir = data_override;
  if (epochs) {
    config.epochs = *epochs;
    config.Validate();
  }
  int64_t speakers = 0;
  auto data = LoadTrainingSet(config.data_dir, &speakers);
  Trainer trainer(config, std::move(data), speakers);
  const fs::path out = common.out;
  const fs::path checkpoint_path = out / "checkpoint.bin";
  if (resume) {
    trainer.Restore(ReadCheckpoint(checkpoint_path.string()));
    std::printf("resumed at epoch %lld\n",
                static_cast<long long>(trainer.epoch()));
  }
  PrepareOutput(common.out, config);
  std::ofstream metrics(out / "metrics.csv", resume ? std::ios::app : std::ios::trunc);
  if (!resume) metrics << "epoch,steps,loss,lr\n";
  while (trainer.epoch() < config.epochs) {
    const auto start = std::chrono::steady_clock::now();
    const EpochStats s = trainer.RunEpoch();
    const double seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - start)
                               .count();
    char line[160];
    std::snprintf(line, sizeof(line), "%lld,%lld,%.10f,%.6e\n",
                  static_cast<long long>(s.epoch),
                  static_cast<long long>(s.steps), s.mean_loss, s.last_lr);
    metrics << line << std::flush;
    WriteCheckpoint(checkpoint_path.string(), trainer.MakeTrainingCheckpoint());
    std::printf("epoch %lld loss %.4f lr %.3e (%.1f s)\n",
                static_cast<long long>(s.epoch), s.mean_loss, s.last_lr,
                seconds);
    std::fflush(stdout);
  }
  return kExitOk;
}

int RunExtract(const Common& common, const std::string& checkpoint,
               const std::string& list, const std::string& data) {
  const RunConfig config = LoadConfig(common);
  auto net = LoadNetwork(checkpoint, common, config);
  const std::string root = data.empty() ? config.data_dir : data;
  const auto paths = ReadLines(list);
  PrepareOutput(common.out, config);
  std::vector<EmbeddingRecord> records;
  for (const std::string& p : paths) {
    const fs::path full = fs::path(p).is_absolute() ? fs::path(p) : fs::path(root) / p;
    records.push_back(EmbedWaveform(*net, ReadWav(full.string()), p));
  }
  WriteEmbeddings((fs::path(common.out) / "embeddings.txt").string(), records);
  std::printf("wrote %zu embeddings\n", records.size());
  return kExitOk;
}

int RunScore(const Common& common, const std::string& embeddings,
             const std::string& trials_path, const std::string& cohort_path,
             std::optional<std::string> backend_name) {
  RunConfig config = LoadConfig(common);
  if (backend_name) config.backend = ParseBackend(*backend_name);
  if (config.backend == Backend::kTta) {
    throw ConfigError("the tta backend needs waveforms; use eval");
  }
  if (config.backend == Backend::kSn && cohort_path.empty()) {
    throw ConfigError("the sn backend needs --cohort");
  }
  std::map<std::string, std::vector<double>> table;
  for (EmbeddingRecord& r : ReadEmbeddings(embeddings)) {
    table[r.utterance_id] = std::move(r.embedding);
  }
  auto lookup = [&](const std::string& id) -> const std::vector<double>& {
    const auto it = table.find(id);
    if (it == table.end()) throw ConfigError("no embedding for " + id);
    return it->second;
  };
  const auto trials = ReadTrials(trials_path);
  PrepareOutput(common.out, config);
  EvalReport report;
  report.backend = config.backend;
  for (const Trial& t : trials) {
    report.scores.push_back(CosineScore(lookup(t.enroll), lookup(t.test)));
    report.labels.push_back(t.label);
  }
  if (config.backend == Backend::kSn) {
    std::vector<std::vector<double>> cohort;
    for (EmbeddingRecord& r : ReadEmbeddings(cohort_path)) {
      cohort.push_back(std::move(r.embedding));
    }
    const int64_t k = std::min<int64_t>(config.top_k, static_cast<int64_t>(cohort.size()));
    auto stats = [&](const std::vector<double>& e) {
      std::vector<double> s;
      for (const auto& c : cohort) s.push_back(CosineScore(e, c));
      return TopKStats(s, k);
    };
    for (size_t i = 0; i < trials.size(); ++i) {
      report.scores[i] = SNorm(report.scores[i], stats(lookup(trials[i].enroll)),
                               stats(lookup(trials[i].test)));
    }
  }
  report.eer = Eer(report.scores, report.labels);
  report.min_dcf = MinDcf(report.scores, report.labels);
  WriteScores((fs::path(common.out) / "scores.txt").string(), trials, report.scores);
  WriteText(fs::path(common.out) / "report.txt", FormatReport(report));
  std::cout << FormatReport(report);
  return kExitOk;
}

int RunEval(const Common& common, const std::string& checkpoint,
            const std::string& data, std::string trials_path,
            std::optional<std::string> backend_name,
            std::optional<std::string> duration_name) {
  RunConfig config = LoadConfig(common);
  if (backend_name) config.backend = ParseBackend(*backend_name);
  if (duration_name) config.duration = ParseDuration(*duration_name);
  if (!data.empty()) config.data_dir = data;
  if (trials_path.empty()) {
    trials_path = (fs::path(config.data_dir) / "trials.txt").string();
  }
  auto net = LoadNetwork(checkpoint, common, config);
  const auto trials = ReadTrials(trials_path);
  PrepareOutput(common.out, config);
  const EvalReport report = Evaluate(*net, config.data_dir, trials,
                                     config.backend, config.duration,
                                     config.top_k);
  WriteScores((fs::path(common.out) / "scores.txt").string(), trials, report.scores);
  WriteText(fs::path(common.out) / "report.txt", FormatReport(report));
  std::cout << FormatReport(report);
  return kExitOk;
}

std::vector<double> ParseFactors(const std::string& text) {
  std::vector<double> factors;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      size_t used = 0;
      factors.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad upsample factor '" + item + "'");
    }
  }
  if (factors.empty()) throw ConfigError("no upsample factors given");
  return factors;
}

int RunAnalyze(const Common& common, const std::string& checkpoint,
               const std::string& wav, const std::string& factors_text) {
  const RunConfig config = LoadConfig(common);
  const std::vector<double> factors = ParseFactors(factors_text);
  auto net = LoadNetwork(checkpoint, common, config);
  const Waveform wave = ReadWav(wav);
  const auto tables = AnalyzeAttention(*net, wave, factors);
  PrepareOutput(common.out, config);
  std::string summary = "factor,mean_a3,mean_a5\n";
  for (const AttentionTable& t : tables) {
    char name[64];
    std::snprintf(name, sizeof(name), "attention_x%g.csv", t.factor);
    WriteText(fs::path(common.out) / name, FormatAttentionCsv(t));
    double a3 = 0.0, a5 = 0.0;
    for (const auto& row : t.rows) {
      a3 += row[0];
      a5 += row[1];
    }
    char line[96];
    std::snprintf(line, sizeof(line), "%g,%.6f,%.6f\n", t.factor,
                  a3 / t.rows.size(), a5 / t.rows.size());
    summary += line;
  }
  WriteText(fs::path(common.out) / "summary.csv", summary);
  std::cout << summary;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SKA-TDNN speaker verification toolkit"};
  app.require_subcommand(1);

  Common synth_c, train_c, extract_c, score_c, eval_c, analyze_c;

  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  AddCommon(synth, synth_c, false);

  auto* train = app.add_subcommand("train", "train a toy network");
  AddCommon(train, train_c, true);
  std::string train_data;
  std::optional<int64_t> train_epochs;
  bool resume = false;
  train->add_option("--data", train_data, "dataset root (overrides data.dir)");
  train->add_option("--epochs", train_epochs, "override train.epochs");
  train->add_flag("--resume", resume, "continue from <out>/checkpoint.bin");

  auto* extract = app.add_subcommand("extract", "write utterance embeddings");
  AddCommon(extract, extract_c, true);
  std::string extract_ckpt, extract_list, extract_data;
  extract->add_option("--checkpoint", extract_ckpt)->required();
  extract->add_option("--list", extract_list, "file with one WAV path per line")
      ->required();
  extract->add_option("--data", extract_data, "root for relative paths");

  auto* score = app.add_subcommand("score", "score trials from embeddings");
  AddCommon(score, score_c, true);
  std::string score_emb, score_trials, score_cohort;
  std::optional<std::string> score_backend;
  score->add_option("--embeddings", score_emb)->required();
  score->add_option("--trials", score_trials)->required();
  score->add_option("--cohort", score_cohort, "cohort embeddings for sn");
  score->add_option("--backend", score_backend, "cos or sn");

  auto* eval = app.add_subcommand("eval", "extract, score and report EER/MinDCF");
  AddCommon(eval, eval_c, true);
  std::string eval_ckpt, eval_data, eval_trials;
  std::optional<std::string> eval_backend, eval_duration;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--data", eval_data, "dataset root (overrides data.dir)");
  eval->add_option("--trials", eval_trials, "defaults to <data>/trials.txt");
  eval->add_option("--backend", eval_backend, "cos, tta or sn");
  eval->add_option("--duration", eval_duration, "full, 3.0 or 1.5");

  auto* analyze = app.add_subcommand("analyze-attn",
                                     "dump channel-wise SKA weights per upsample factor");
  AddCommon(analyze, analyze_c, true);
  std::string analyze_ckpt, analyze_wav, analyze_factors = "1,2,3";
  analyze->add_option("--checkpoint", analyze_ckpt)->required();
  analyze->add_option("--wav", analyze_wav)->required();
  analyze->add_option("--factors", analyze_factors, "comma-separated factors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*synth) return RunSynth(synth_c);
    if (*train) return RunTrain(train_c, train_data, train_epochs, resume);
    if (*extract) {
      return RunExtract(extract_c, extract_ckpt, extract_list, extract_data);
    }
    if (*score) {
      return RunScore(score_c, score_emb, score_trials, score_cohort,
                      score_backend);
    }
    if (*eval) {
      return RunEval(eval_c, eval_ckpt, eval_data, eval_trials, eval_backend,
                     eval_duration);
    }
    if (*analyze) {
      return RunAnalyze(analyze_c, analyze_ckpt, analyze_wav, analyze_factors);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitOther;
  }
  return kExitOther;
}
