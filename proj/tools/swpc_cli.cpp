#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "swpc/config.hpp"
#include "swpc/datagen.hpp"
#include "swpc/dataio.hpp"
#include "swpc/dsp.hpp"
#include "swpc/error.hpp"
#include "swpc/eval.hpp"
#include "swpc/pipeline.hpp"
#include "swpc/stream_engine.hpp"
#include "swpc/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace swpc;

namespace {

void log(const std::string& msg) { std::cerr << "[swpc] " << msg << '\n'; }

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) return {};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

ordered_json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

ordered_json events_json(const ContinuousRecording& rec) {
  ordered_json j;
  j["fs"] = rec.fs;
  j["n_samples"] = rec.n_samples();
  j["n_channels"] = rec.n_channels();
  auto& ev = j["events"] = ordered_json::array();
  for (const Event& e : rec.events) ev.push_back({{"onset", e.onset}, {"duration", e.duration}, {"label", e.label}});
  return j;
}

// Ground truth from either a recording or its sidecar JSON.
std::pair<double, std::vector<Event>> load_truth(const fs::path& path) {
  if (path.extension() == ".swpc") {
    auto rec = read_recording(path);
    return {rec.fs, rec.events};
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    std::vector<Event> events;
    for (const auto& e : j.at("events")) {
      events.push_back({e.at("onset").get<std::uint64_t>(), e.at("duration").get<std::uint64_t>(),
                        e.at("label").get<std::uint16_t>()});
    }
    return {j.at("fs").get<double>(), events};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("truth file " + path.string() + ": " + e.what());
  }
}

// Training recordings named on the command line, or resolved from the config's
// data layout for one subject.
std::vector<ContinuousRecording> training_recordings(const SwpcConfig& cfg, const std::vector<std::string>& files,
                                                     const std::string& subject) {
  std::vector<fs::path> paths(files.begin(), files.end());
  if (paths.empty()) {
    if (subject.empty()) throw InvalidArgument("give --train files or a --subject resolved through the config");
    if (cfg.mode == Mode::within_subject) {
      paths.push_back(recording_path(cfg, subject, cfg.train_session));
    } else {
      for (const auto& other : cfg.subjects) {
        if (other != subject) paths.push_back(recording_path(cfg, other, cfg.train_session));
      }
    }
  }
  std::vector<ContinuousRecording> recs;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw IoError("training recording not found: " + p.string());
    log("loading " + p.string());
    recs.push_back(dsp::preprocess(read_recording(p), cfg.preprocess));
  }
  return recs;
}

ContinuousRecording test_recording(const SwpcConfig& cfg, const std::string& file, const std::string& subject) {
  fs::path p = file;
  if (p.empty()) {
    if (subject.empty()) throw InvalidArgument("give --test or a --subject resolved through the config");
    p = recording_path(cfg, subject, cfg.test_session);
  }
  if (!fs::exists(p)) throw IoError("test recording not found: " + p.string());
  return dsp::preprocess(read_recording(p), cfg.preprocess);
}

struct Common {
  std::string config_path;
  std::string out = ".";
  std::vector<std::uint64_t> seeds;
  double tau = -1.0;
  double lw = -1.0;

  SwpcConfig load() const {
    SwpcConfig cfg = config_path.empty() ? SwpcConfig{} : load_config(config_path);
    if (!seeds.empty()) cfg.seeds = seeds;
    if (tau >= 0.0) cfg.stream.tau = tau;
    if (lw >= 0.0) cfg.stream.lw_seconds = lw;
    cfg.validate();
    fs::create_directories(out);
    return cfg;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--seed", c.seeds, "seed list, overrides the config");
  cmd->add_option("--tau", c.tau, "prescreen threshold, overrides the config");
  cmd->add_option("--lw", c.lw, "window length in seconds, overrides the config");
}

// ---- synth

struct SynthArgs {
  std::string name = "synthetic";
  std::uint64_t seed = 0;
  double erd = -1.0;
  std::size_t events = 0;
};

void cmd_synth(const Common& common, const SynthArgs& a) {
  const SwpcConfig cfg = common.load();
  SynthSpec spec = cfg.synth;
  spec.seed = a.seed;
  if (a.erd >= 0.0) spec.erd_depth = a.erd;
  if (a.events > 0) spec.n_events = a.events;
  const auto rec = synth_recording(spec);
  const fs::path base = fs::path(common.out) / a.name;
  write_recording(rec, base.string() + ".swpc");
  write_text(base.string() + ".events.json", events_json(rec).dump(2) + "\n");
  log("wrote " + base.string() + ".swpc (" + std::to_string(rec.n_channels()) + " channels, " +
      std::to_string(rec.n_samples()) + " samples, " + std::to_string(rec.events.size()) + " events)");
}

// ---- train

struct TrainArgs {
  std::vector<std::string> train;
  std::string subject;
};

void cmd_train(const Common& common, const TrainArgs& a) {
  const SwpcConfig cfg = common.load();
  const auto recs = training_recordings(cfg, a.train, a.subject);
  const auto data = pipeline::build_training_data(recs, cfg.trial_seconds);
  log(std::to_string(data.multiclass.size()) + " MI trials, " + std::to_string(data.binary.size()) +
      " binary trials of " + std::to_string(data.trial_len) + " samples");
  if (data.skipped_rest > 0) log(std::to_string(data.skipped_rest) + " events had no clean preceding rest trial");
  save_config(cfg, fs::path(common.out) / "config.json");

  std::vector<double> pre_epochs, cls_epochs, pre_acc, cls_acc;
  ordered_json summary;
  summary["seeds"] = ordered_json::array();
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = fs::path(common.out) / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    std::ofstream metrics(dir / "metrics.jsonl");
    if (!metrics) throw IoError("cannot write metrics log in " + dir.string());
    log("seed " + std::to_string(seed) + ": training");
    const auto models = pipeline::train_models(
        data, cfg, seed, [&](const training::MetricRecord& r) { metrics << training::to_json_line(r) << '\n'; },
        cfg.ablation.ssl_prescreen, cfg.ablation.ssl_classification);
    const auto pair = pipeline::select(models, cfg.ablation);
    save_checkpoint(pair.prescreen, dir / "prescreen.ckpt");
    save_checkpoint(pair.classifier, dir / "classifier.ckpt");
    pre_epochs.push_back(static_cast<double>(models.prescreen_best_epoch));
    cls_epochs.push_back(static_cast<double>(models.classifier_best_epoch));
    pre_acc.push_back(training::accuracy(pair.prescreen, data.binary));
    cls_acc.push_back(training::accuracy(pair.classifier, data.multiclass));
    summary["seeds"].push_back({{"seed", seed},
                                {"prescreen_best_epoch", models.prescreen_best_epoch},
                                {"classifier_best_epoch", models.classifier_best_epoch},
                                {"prescreen_train_acc", pre_acc.back()},
                                {"classifier_train_acc", cls_acc.back()}});
  }
  summary["prescreen_best_epoch"] = to_json(mean_std(pre_epochs));
  summary["classifier_best_epoch"] = to_json(mean_std(cls_epochs));
  summary["prescreen_train_acc"] = to_json(mean_std(pre_acc));
  summary["classifier_train_acc"] = to_json(mean_std(cls_acc));
  write_text(fs::path(common.out) / "summary.json", summary.dump(2) + "\n");
  log("wrote checkpoints and summary to " + common.out);
}

// ---- decode

struct DecodeArgs {
  std::string prescreen;
  std::string classifier;
  std::string test;
  std::string subject;
  std::string log_name = "decisions.jsonl";
};

void cmd_decode(const Common& common, const DecodeArgs& a) {
  const SwpcConfig cfg = common.load();
  const pipeline::ModelPair models{load_checkpoint(a.prescreen), load_checkpoint(a.classifier)};
  const auto test = test_recording(cfg, a.test, a.subject);
  const auto result = pipeline::decode(models, test, cfg, cfg.seeds.front());
  for (const auto& w : result.warnings) log("warning: " + w);
  const fs::path path = fs::path(common.out) / a.log_name;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_decision_log(result.records, out);
  log("wrote " + std::to_string(result.records.size()) + " decisions to " + path.string());
}

// ---- eval

struct EvalArgs {
  std::string log_path;
  std::string truth;
};

void cmd_eval(const Common& common, const EvalArgs& a) {
  const SwpcConfig cfg = common.load();
  std::ifstream in(a.log_path);
  if (!in) throw IoError("cannot open " + a.log_path);
  const auto records = read_decision_log(in);
  if (records.empty()) throw InvalidArgument("decision log " + a.log_path + " is empty");
  const auto [fs_hz, events] = load_truth(a.truth);
  const auto report =
      eval::score_stream(records, events, cfg.stream.window_samples(fs_hz), cfg.stream.tau);
  const std::string text = eval::to_json(report) + "\n";
  write_text(fs::path(common.out) / "report.json", text);
  std::cout << "acc " << report.acc << " prescreen_acc " << report.prescreen_acc << " false_alarm_rate "
            << report.false_alarm_rate << '\n';
}

// ---- sweep

struct SweepArgs {
  std::vector<std::string> train;
  std::string test;
  std::string subject;
  std::vector<double> lw_grid{0.5, 1.0, 1.5, 2.0};
  std::vector<double> tau_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
};

void cmd_sweep(const Common& common, const SweepArgs& a) {
  SwpcConfig cfg = common.load();
  const auto recs = training_recordings(cfg, a.train, a.subject);
  const auto test = test_recording(cfg, a.test, a.subject);
  std::vector<eval::SweepPoint> all;
  for (std::uint64_t seed : cfg.seeds) {
    for (double lw : a.lw_grid) {
      // The window length fixes the network input, so each L_w retrains.
      cfg.stream.lw_seconds = lw;
      log("seed " + std::to_string(seed) + ": training for L_w = " + std::to_string(lw) + " s");
      const auto data = pipeline::build_training_data(recs, cfg.trial_seconds);
      const auto models = pipeline::train_models(data, cfg, seed, {}, cfg.ablation.ssl_prescreen,
                                                 cfg.ablation.ssl_classification);
      const auto pair = pipeline::select(models, cfg.ablation);
      const auto scores = score_windows(pair.prescreen, pair.classifier, test, cfg.stream);
      const std::vector<double> one_lw{lw};
      auto points = eval::sweep(one_lw, a.tau_grid, test.fs, test.events, [&](double, double tau) {
        return gate_and_average(scores, tau, cfg.ablation.averaging);
      });
      all.insert(all.end(), points.begin(), points.end());
    }
  }
  std::ostringstream csv;
  eval::write_sweep_csv(all, csv);
  write_text(fs::path(common.out) / "sweep.csv", csv.str());
  log("wrote " + std::to_string(all.size()) + " sweep rows");
}

// ---- ablate

struct AblateArgs {
  std::vector<std::string> train;
  std::string test;
  std::string subject;
};

void cmd_ablate(const Common& common, const AblateArgs& a) {
  const SwpcConfig cfg = common.load();
  const auto recs = training_recordings(cfg, a.train, a.subject);
  const auto test = test_recording(cfg, a.test, a.subject);
  const auto data = pipeline::build_training_data(recs, cfg.trial_seconds);
  const auto grid = pipeline::ablation_grid();
  std::vector<std::vector<double>> acc(grid.size());
  for (std::uint64_t seed : cfg.seeds) {
    log("seed " + std::to_string(seed) + ": training");
    const auto models = pipeline::train_models(data, cfg, seed);
    const auto rows = pipeline::run_ablation(models, test, cfg);
    for (std::size_t r = 0; r < rows.size(); ++r) acc[r].push_back(rows[r].report.acc);
  }
  std::ostringstream csv;
  csv << "ssl_prescreen,ssl_classification,averaging,acc_mean,acc_std\n";
  ordered_json table = ordered_json::array();
  for (std::size_t r = 0; r < grid.size(); ++r) {
    const auto ms = mean_std(acc[r]);
    csv << grid[r].ssl_prescreen << ',' << grid[r].ssl_classification << ',' << grid[r].averaging << ','
        << ms.mean << ',' << ms.std << '\n';
    table.push_back({{"ssl_prescreen", grid[r].ssl_prescreen},
                     {"ssl_classification", grid[r].ssl_classification},
                     {"averaging", grid[r].averaging},
                     {"acc", acc[r]},
                     {"acc_mean", ms.mean},
                     {"acc_std", ms.std}});
  }
  write_text(fs::path(common.out) / "ablation.csv", csv.str());
  write_text(fs::path(common.out) / "ablation.json", table.dump(2) + "\n");
  std::cout << csv.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sliding-window prescreening and classification for asynchronous MI decoding"};
  app.require_subcommand(1);

  Common common;
  SynthArgs synth;
  TrainArgs train;
  DecodeArgs decode;
  EvalArgs evaluate;
  SweepArgs sweep;
  AblateArgs ablate;

  auto* c_synth = app.add_subcommand("synth", "write a synthetic recording and its truth events");
  add_common(c_synth, common);
  c_synth->add_option("--name", synth.name, "file stem");
  c_synth->add_option("--recording-seed", synth.seed, "generator seed");
  c_synth->add_option("--erd", synth.erd, "ERD depth, overrides the config");
  c_synth->add_option("--events", synth.events, "event count, overrides the config");

  auto* c_train = app.add_subcommand("train", "train both networks for every seed");
  add_common(c_train, common);
  c_train->add_option("--train", train.train, "training recordings (.swpc)");
  c_train->add_option("--subject", train.subject, "subject resolved through the config's data layout");

  auto* c_decode = app.add_subcommand("decode", "run the stream decoder and write a decision log");
  add_common(c_decode, common);
  c_decode->add_option("--prescreen", decode.prescreen, "prescreen checkpoint")->required()->check(CLI::ExistingFile);
  c_decode->add_option("--classifier", decode.classifier, "classifier checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  c_decode->add_option("--test", decode.test, "test recording (.swpc)");
  c_decode->add_option("--subject", decode.subject, "subject resolved through the config's data layout");
  c_decode->add_option("--log-name", decode.log_name, "decision log file name");

  auto* c_eval = app.add_subcommand("eval", "score a decision log against truth events");
  add_common(c_eval, common);
  c_eval->add_option("--log", evaluate.log_path, "decision log (JSONL)")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--truth", evaluate.truth, "recording (.swpc) or events JSON")
      ->required()
      ->check(CLI::ExistingFile);

  auto* c_sweep = app.add_subcommand("sweep", "accuracy over a grid of window lengths and thresholds");
  add_common(c_sweep, common);
  c_sweep->add_option("--train", sweep.train, "training recordings (.swpc)");
  c_sweep->add_option("--test", sweep.test, "test recording (.swpc)");
  c_sweep->add_option("--subject", sweep.subject, "subject resolved through the config's data layout");
  c_sweep->add_option("--lw-grid", sweep.lw_grid, "window lengths in seconds");
  c_sweep->add_option("--tau-grid", sweep.tau_grid, "thresholds");

  auto* c_ablate = app.add_subcommand("ablate", "the 8-row grid of SSL and averaging switches");
  add_common(c_ablate, common);
  c_ablate->add_option("--train", ablate.train, "training recordings (.swpc)");
  c_ablate->add_option("--test", ablate.test, "test recording (.swpc)");
  c_ablate->add_option("--subject", ablate.subject, "subject resolved through the config's data layout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_synth->parsed()) cmd_synth(common, synth);
    if (c_train->parsed()) cmd_train(common, train);
    if (c_decode->parsed()) cmd_decode(common, decode);
    if (c_eval->parsed()) cmd_eval(common, evaluate);
    if (c_sweep->parsed()) cmd_sweep(common, sweep);
    if (c_ablate->parsed()) cmd_ablate(common, ablate);
  } catch (const std::exception& e) {
    std::cerr << "[swpc] error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
