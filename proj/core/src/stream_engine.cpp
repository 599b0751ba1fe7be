#include "swpc/stream_engine.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "json_io.hpp"
#include "swpc/dsp.hpp"
#include "swpc/error.hpp"

namespace swpc {

namespace {
constexpr std::size_t kChunk = 256;
}

void StreamConfig::validate() const {
  if (!(lw_seconds > 0.0)) throw InvalidArgument("window length must be positive");
  if (step_samples == 0) throw InvalidArgument("window step must be positive");
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must be in (0, 1)");
}

std::size_t StreamConfig::window_samples(double fs) const { return dsp::seconds_to_samples(lw_seconds, fs); }

std::vector<double> running_average(std::span<const std::vector<double>> run) {
  if (run.empty()) throw InvalidArgument("running average of an empty run");
  std::vector<double> mean(run.front().size(), 0.0);
  for (const auto& p : run) {
    if (p.size() != mean.size()) throw ShapeError("probability vectors differ in length");
    for (std::size_t k = 0; k < p.size(); ++k) mean[k] += p[k];
  }
  for (double& v : mean) v /= static_cast<double>(run.size());
  return mean;
}

std::uint16_t class_label(std::span<const double> probs) {
  if (probs.empty()) throw InvalidArgument("empty probability vector");
  return static_cast<std::uint16_t>(1 + (std::max_element(probs.begin(), probs.end()) - probs.begin()));
}

StreamDecoder::StreamDecoder(double tau, bool averaging) : tau_(tau), averaging_(averaging) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must be in (0, 1)");
}

void StreamDecoder::reset() {
  run_start_.reset();
  sum_.clear();
  count_ = 0;
}

DecisionRecord StreamDecoder::step(std::size_t index, std::size_t start_sample, double p_bar,
                                   std::span<const double> p) {
  DecisionRecord rec;
  rec.index = index;
  rec.start_sample = start_sample;
  rec.p_bar = p_bar;
  if (!gated(p_bar)) {
    reset();
    return rec;
  }
  if (p.empty()) throw InvalidArgument("gated window " + std::to_string(index) + " has no class probabilities");
  if (!run_start_) {
    run_start_ = index;
    sum_.assign(p.size(), 0.0);
    count_ = 0;
  }
  if (p.size() != sum_.size()) throw ShapeError("class probability length changed within a run");
  for (std::size_t k = 0; k < p.size(); ++k) sum_[k] += p[k];
  ++count_;

  rec.p = std::vector<double>(p.begin(), p.end());
  if (averaging_) {
    std::vector<double> mean(sum_);
    for (double& v : mean) v /= static_cast<double>(count_);
    rec.p_hat = std::move(mean);
  } else {
    rec.p_hat = rec.p;
  }
  rec.predicted_label = class_label(*rec.p_hat);
  rec.run_start = run_start_;
  return rec;
}

void check_models(const ModelBundle& prescreen, const ModelBundle& classifier, const ContinuousRecording& rec,
                  const StreamConfig& cfg) {
  cfg.validate();
  const std::size_t len = cfg.window_samples(rec.fs);
  for (const auto* b : {&prescreen, &classifier}) {
    const char* name = b == &prescreen ? "prescreen" : "classifier";
    if (b->config.input_len != len || b->config.n_channels != rec.n_channels()) {
      throw ShapeError(std::string(name) + " model expects " + std::to_string(b->config.n_channels) + "x" +
                       std::to_string(b->config.input_len) + " windows, stream gives " +
                       std::to_string(rec.n_channels()) + "x" + std::to_string(len));
    }
  }
  if (prescreen.config.n_classes != 2) throw ShapeError("prescreen model must have two outputs");
}

namespace {

std::vector<Matrix> materialize(const dsp::WindowSequence& seq, std::size_t begin, std::size_t end) {
  std::vector<Matrix> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(seq[i].samples);
  return out;
}

}  // namespace

std::vector<DecisionRecord> decode_stream(const ModelBundle& prescreen, const ModelBundle& classifier,
                                          const ContinuousRecording& rec, const StreamConfig& cfg) {
  check_models(prescreen, classifier, rec, cfg);
  const auto seq = dsp::sliding_windows(rec, cfg.window_samples(rec.fs), cfg.step_samples);
  StreamDecoder decoder(cfg.tau, cfg.averaging);
  std::vector<DecisionRecord> records;
  records.reserve(seq.size());
  for (std::size_t begin = 0; begin < seq.size(); begin += kChunk) {
    const std::size_t end = std::min(seq.size(), begin + kChunk);
    const auto windows = materialize(seq, begin, end);
    const auto p_bar = predict_proba(prescreen, windows);
    std::vector<Matrix> gated;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      if (decoder.gated(p_bar[i][1])) gated.push_back(windows[i]);
    }
    const auto p = gated.empty() ? std::vector<std::vector<double>>{} : predict_proba(classifier, gated);
    std::size_t next = 0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const bool in = decoder.gated(p_bar[i][1]);
      const std::span<const double> pi = in ? std::span<const double>(p[next++]) : std::span<const double>{};
      records.push_back(decoder.step(begin + i, seq.start(begin + i), p_bar[i][1], pi));
    }
  }
  return records;
}

std::vector<DecisionRecord> decode_stream_online(const ModelBundle& prescreen, const ModelBundle& classifier,
                                                 const ContinuousRecording& rec, const StreamConfig& cfg) {
  check_models(prescreen, classifier, rec, cfg);
  const auto seq = dsp::sliding_windows(rec, cfg.window_samples(rec.fs), cfg.step_samples);
  StreamDecoder decoder(cfg.tau, cfg.averaging);
  std::vector<DecisionRecord> records;
  records.reserve(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const std::vector<Matrix> window{seq[i].samples};
    const double p_bar = predict_proba(prescreen, window)[0][1];
    std::vector<double> p;
    if (decoder.gated(p_bar)) p = predict_proba(classifier, window)[0];
    records.push_back(decoder.step(i, seq.start(i), p_bar, p));
  }
  return records;
}

WindowScores score_windows(const ModelBundle& prescreen, const ModelBundle& classifier,
                           const ContinuousRecording& rec, const StreamConfig& cfg) {
  check_models(prescreen, classifier, rec, cfg);
  const auto seq = dsp::sliding_windows(rec, cfg.window_samples(rec.fs), cfg.step_samples);
  WindowScores scores;
  scores.start.reserve(seq.size());
  scores.p_bar.reserve(seq.size());
  scores.p.reserve(seq.size());
  for (std::size_t begin = 0; begin < seq.size(); begin += kChunk) {
    const std::size_t end = std::min(seq.size(), begin + kChunk);
    const auto windows = materialize(seq, begin, end);
    const auto p_bar = predict_proba(prescreen, windows);
    auto p = predict_proba(classifier, windows);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      scores.start.push_back(seq.start(begin + i));
      scores.p_bar.push_back(p_bar[i][1]);
      scores.p.push_back(std::move(p[i]));
    }
  }
  return scores;
}

std::vector<DecisionRecord> gate_and_average(const WindowScores& scores, double tau, bool averaging) {
  StreamDecoder decoder(tau, averaging);
  std::vector<DecisionRecord> records;
  records.reserve(scores.p_bar.size());
  for (std::size_t i = 0; i < scores.p_bar.size(); ++i) {
    records.push_back(decoder.step(i, scores.start[i], scores.p_bar[i], scores.p[i]));
  }
  return records;
}

void write_decision_log(std::span<const DecisionRecord> records, std::ostream& out) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["i"] = r.index;
    j["start_sample"] = r.start_sample;
    j["p_bar"] = r.p_bar;
    if (r.p) j["p"] = *r.p;
    if (r.p_hat) j["p_hat"] = *r.p_hat;
    j["label"] = r.predicted_label;
    if (r.run_start) j["run_start"] = *r.run_start;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed to write decision log");
}

std::vector<DecisionRecord> read_decision_log(std::istream& in) {
  std::vector<DecisionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DecisionRecord r;
      r.index = j.at("i").get<std::size_t>();
      r.start_sample = j.at("start_sample").get<std::size_t>();
      r.p_bar = j.at("p_bar").get<double>();
      if (j.contains("p")) r.p = j["p"].get<std::vector<double>>();
      if (j.contains("p_hat")) r.p_hat = j["p_hat"].get<std::vector<double>>();
      r.predicted_label = j.at("label").get<std::uint16_t>();
      if (j.contains("run_start")) r.run_start = j["run_start"].get<std::size_t>();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("decision log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace swpc
