#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "swpc/augment.hpp"
#include "swpc/datagen.hpp"
#include "swpc/dsp.hpp"
#include "swpc/model.hpp"
#include "swpc/stream_engine.hpp"
#include "swpc/training.hpp"

namespace swpc {

enum class Mode { within_subject, cross_subject };

struct AblationSwitches {
  bool ssl_prescreen = true;
  bool ssl_classification = true;
  bool averaging = true;

  friend bool operator==(const AblationSwitches&, const AblationSwitches&) = default;
};

// One document describing a full experiment. n_channels, input_len, fs and
// n_classes of `net` are filled from the data at run time.
struct SwpcConfig {
  Mode mode = Mode::within_subject;
  NetConfig net;
  dsp::PreprocessConfig preprocess;
  training::SupervisedConfig supervised;
  training::SslConfig ssl;
  augment::AugmentParams augment;
  StreamConfig stream;
  SynthSpec synth;
  double trial_seconds = 0.0;  // 0: shortest event in the training data

  std::string data_root;
  std::string dataset;
  std::vector<std::string> subjects;
  std::string train_session = "1";
  std::string test_session = "2";

  AblationSwitches ablation;
  bool offline_adapt = false;
  std::size_t adapt_max_windows = 512;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  void validate() const;
};

std::string to_json_string(const SwpcConfig& cfg, int indent = 2);
// Missing keys keep their defaults; unknown keys are rejected.
SwpcConfig config_from_json_string(const std::string& text);
SwpcConfig load_config(const std::filesystem::path& path);
void save_config(const SwpcConfig& cfg, const std::filesystem::path& path);

// <data_root>/<dataset>/<subject>/<session>.swpc
std::filesystem::path recording_path(const SwpcConfig& cfg, const std::string& subject, const std::string& session);

}  // namespace swpc
