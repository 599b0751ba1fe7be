#include "swpc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json_io.hpp"
#include "swpc/error.hpp"

namespace swpc {

NLOHMANN_JSON_SERIALIZE_ENUM(Mode, {{Mode::within_subject, "within_subject"}, {Mode::cross_subject, "cross_subject"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AblationSwitches, ssl_prescreen, ssl_classification, averaging)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SwpcConfig, mode, net, preprocess, supervised, ssl, augment, stream,
                                                synth, trial_seconds, data_root, dataset, subjects, train_session,
                                                test_session, ablation, offline_adapt, adapt_max_windows, seeds)

void SwpcConfig::validate() const {
  supervised.validate();
  ssl.validate();
  augment.validate();
  stream.validate();
  if (trial_seconds < 0.0) throw InvalidArgument("trial_seconds must be non-negative");
  if (seeds.empty()) throw InvalidArgument("at least one seed is required");
  if (mode == Mode::cross_subject && subjects.size() < 2) {
    throw InvalidArgument("cross-subject mode needs at least two subjects");
  }
}

namespace {

// Rejects keys the config structs do not know, so typos surface instead of
// silently falling back to defaults.
void check_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& where) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    if (!known.contains(key)) throw InvalidArgument("unknown config key: " + where + key);
    if (value.is_object() && known[key].is_object()) check_keys(value, known[key], where + key + ".");
  }
}

}  // namespace

std::string to_json_string(const SwpcConfig& cfg, int indent) { return nlohmann::json(cfg).dump(indent); }

SwpcConfig config_from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  check_keys(j, nlohmann::json(SwpcConfig{}), "");
  try {
    return j.get<SwpcConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config has a field of the wrong type: ") + e.what());
  }
}

SwpcConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_string(ss.str());
}

void save_config(const SwpcConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << to_json_string(cfg) << '\n';
  if (!out) throw IoError("failed writing config " + path.string());
}

std::filesystem::path recording_path(const SwpcConfig& cfg, const std::string& subject, const std::string& session) {
  return std::filesystem::path(cfg.data_root) / cfg.dataset / subject / (session + ".swpc");
}

}  // namespace swpc
