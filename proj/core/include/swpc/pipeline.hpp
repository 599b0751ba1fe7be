#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "swpc/config.hpp"
#include "swpc/dataio.hpp"
#include "swpc/eval.hpp"
#include "swpc/model.hpp"
#include "swpc/training.hpp"

// Glue between the modules: preprocessing, training both networks and
// decoding a test stream.
namespace swpc::pipeline {

struct TrainingData {
  TrialSet multiclass;  // MI trials, for the classifier
  TrialSet binary;      // MI and adjacent rest trials, for the prescreen
  std::size_t n_channels = 0;
  double fs = 0.0;
  std::size_t trial_len = 0;
  std::size_t skipped_rest = 0;
};

// Pools trials from already preprocessed recordings that share channels and fs.
TrainingData build_training_data(std::span<const ContinuousRecording> recordings, double trial_seconds);

// Copy of cfg.net with the data-dependent fields filled in.
NetConfig net_for(const SwpcConfig& cfg, std::size_t n_channels, double fs, std::size_t n_classes);

// Supervised and SSL-refined versions of both networks. When a switch is off
// the refined model equals the supervised one.
struct StageModels {
  ModelBundle prescreen_supervised;
  ModelBundle prescreen_refined;
  ModelBundle classifier_supervised;
  ModelBundle classifier_refined;
  std::size_t prescreen_best_epoch = 0;
  std::size_t classifier_best_epoch = 0;
};

StageModels train_models(const TrainingData& data, const SwpcConfig& cfg, std::uint64_t seed,
                         const training::MetricsSink& sink = {}, bool refine_prescreen = true,
                         bool refine_classifier = true);

struct ModelPair {
  ModelBundle prescreen;
  ModelBundle classifier;
};

ModelPair select(const StageModels& models, const AblationSwitches& switches);

// Decodes a preprocessed test stream, optionally adapting both networks on it first.
struct DecodeResult {
  std::vector<DecisionRecord> records;
  std::vector<std::string> warnings;
};

DecodeResult decode(const ModelPair& models, const ContinuousRecording& test, const SwpcConfig& cfg,
                    std::uint64_t seed);

struct AblationRow {
  AblationSwitches switches;
  eval::ScoreReport report;
};

// All 8 combinations of the three switches, in the order
// (ssl_prescreen, ssl_classification, averaging) counting down from all on.
std::array<AblationSwitches, 8> ablation_grid();

std::vector<AblationRow> run_ablation(const StageModels& models, const ContinuousRecording& test,
                                      const SwpcConfig& cfg);

}  // namespace swpc::pipeline
