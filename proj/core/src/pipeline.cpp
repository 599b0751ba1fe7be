#include "swpc/pipeline.hpp"

#include <algorithm>
#include <limits>
#include <optional>

#include "swpc/dsp.hpp"
#include "swpc/error.hpp"

namespace swpc::pipeline {

TrainingData build_training_data(std::span<const ContinuousRecording> recordings, double trial_seconds) {
  if (recordings.empty()) throw InvalidArgument("no training recordings");
  TrainingData data;
  data.n_channels = recordings.front().n_channels();
  data.fs = recordings.front().fs;
  std::uint64_t shortest = std::numeric_limits<std::uint64_t>::max();
  for (const auto& rec : recordings) {
    if (rec.n_channels() != data.n_channels || rec.fs != data.fs) {
      throw InvalidArgument("training recordings differ in channel count or sampling rate");
    }
    for (const Event& e : rec.events) shortest = std::min(shortest, e.duration);
  }
  if (shortest == std::numeric_limits<std::uint64_t>::max()) throw InvalidArgument("training data has no events");
  data.trial_len = trial_seconds > 0.0 ? dsp::seconds_to_samples(trial_seconds, data.fs) : shortest;

  std::size_t n_classes = 0;
  for (const auto& rec : recordings) {
    for (const Event& e : rec.events) n_classes = std::max<std::size_t>(n_classes, e.label);
  }
  data.multiclass.kind = TrialKind::multiclass;
  data.multiclass.class_names = default_class_names(n_classes);
  data.binary.kind = TrialKind::binary;
  data.binary.class_names = {"rest", "mi"};
  for (const auto& rec : recordings) {
    auto mi = extract_mi_trials(rec, data.trial_len, n_classes);
    for (auto& t : mi.trials) data.multiclass.trials.push_back(std::move(t));
    auto rest = extract_adjacent_rest(rec, data.trial_len);
    data.skipped_rest += rest.skipped;
    for (auto& t : rest.set.trials) data.binary.trials.push_back(std::move(t));
  }
  return data;
}

NetConfig net_for(const SwpcConfig& cfg, std::size_t n_channels, double fs, std::size_t n_classes) {
  NetConfig net = cfg.net;
  net.n_channels = n_channels;
  net.fs = fs;
  net.input_len = cfg.stream.window_samples(fs);
  net.n_classes = n_classes;
  net.validate();
  return net;
}

StageModels train_models(const TrainingData& data, const SwpcConfig& cfg, std::uint64_t seed,
                         const training::MetricsSink& sink, bool refine_prescreen, bool refine_classifier) {
  StageModels out;
  auto sup = cfg.supervised;
  auto ssl = cfg.ssl;

  auto tagged = [&](const std::string& module) -> training::MetricsSink {
    if (!sink) return {};
    return [&sink, module](const training::MetricRecord& r) {
      auto copy = r;
      copy.stage = module + "/" + r.stage;
      sink(copy);
    };
  };

  const NetConfig pre_net = net_for(cfg, data.n_channels, data.fs, 2);
  sup.seed = augment::mix_seed(seed, 11);
  auto pre = training::fit_supervised(init_model(pre_net, augment::mix_seed(seed, 1)), data.binary, sup,
                                      tagged("prescreen"));
  out.prescreen_best_epoch = pre.best_epoch;
  out.prescreen_supervised = std::move(pre.bundle);
  out.prescreen_refined = out.prescreen_supervised;
  if (refine_prescreen) {
    ssl.seed = augment::mix_seed(seed, 21);
    const auto transitions = training::make_transition_trials(data.binary, data.binary.size(),
                                                              augment::mix_seed(seed, 31));
    out.prescreen_refined =
        training::ssl_prescreen(out.prescreen_supervised, data.binary, transitions, ssl, tagged("prescreen"));
  }

  const NetConfig cls_net = net_for(cfg, data.n_channels, data.fs, data.multiclass.n_classes());
  sup.seed = augment::mix_seed(seed, 12);
  auto cls = training::fit_supervised(init_model(cls_net, augment::mix_seed(seed, 2)), data.multiclass, sup,
                                      tagged("classifier"));
  out.classifier_best_epoch = cls.best_epoch;
  out.classifier_supervised = std::move(cls.bundle);
  out.classifier_refined = out.classifier_supervised;
  if (refine_classifier) {
    ssl.seed = augment::mix_seed(seed, 22);
    out.classifier_refined = training::ssl_classification(out.classifier_supervised, data.multiclass, ssl,
                                                          cfg.augment, tagged("classifier"));
  }
  return out;
}

ModelPair select(const StageModels& models, const AblationSwitches& switches) {
  return {switches.ssl_prescreen ? models.prescreen_refined : models.prescreen_supervised,
          switches.ssl_classification ? models.classifier_refined : models.classifier_supervised};
}

DecodeResult decode(const ModelPair& models, const ContinuousRecording& test, const SwpcConfig& cfg,
                    std::uint64_t seed) {
  StreamConfig stream = cfg.stream;
  stream.averaging = cfg.ablation.averaging;
  DecodeResult result;
  if (!cfg.offline_adapt) {
    result.records = decode_stream(models.prescreen, models.classifier, test, stream);
    return result;
  }
  check_models(models.prescreen, models.classifier, test, stream);
  const auto seq = dsp::sliding_windows(test, stream.window_samples(test.fs), stream.step_samples);
  std::vector<Matrix> windows;
  windows.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) windows.push_back(seq[i].samples);
  auto ssl = cfg.ssl;
  ssl.seed = augment::mix_seed(seed, 41);
  auto adapted = training::ssl_offline_adapt(models.prescreen, models.classifier, windows, stream.tau, ssl,
                                             cfg.augment, cfg.adapt_max_windows);
  result.warnings = std::move(adapted.warnings);
  result.records = decode_stream(adapted.prescreen, adapted.classifier, test, stream);
  return result;
}

std::array<AblationSwitches, 8> ablation_grid() {
  std::array<AblationSwitches, 8> grid{};
  for (std::size_t r = 0; r < 8; ++r) grid[r] = {(r & 4) == 0, (r & 2) == 0, (r & 1) == 0};
  return grid;
}

std::vector<AblationRow> run_ablation(const StageModels& models, const ContinuousRecording& test,
                                      const SwpcConfig& cfg) {
  const std::size_t len = cfg.stream.window_samples(test.fs);
  // Scores depend only on which two networks are used; the averaging switch
  // is applied afterwards.
  std::array<std::array<std::optional<WindowScores>, 2>, 2> cache;
  std::vector<AblationRow> rows;
  for (const auto& sw : ablation_grid()) {
    auto& slot = cache[sw.ssl_prescreen][sw.ssl_classification];
    if (!slot) {
      const auto pair = select(models, sw);
      slot = score_windows(pair.prescreen, pair.classifier, test, cfg.stream);
    }
    const auto records = gate_and_average(*slot, cfg.stream.tau, sw.averaging);
    rows.push_back({sw, eval::score_stream(records, test.events, len, cfg.stream.tau)});
  }
  return rows;
}

}  // namespace swpc::pipeline
