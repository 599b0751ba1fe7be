#pragma once

// Randomized models and recordings for engine and scorer properties.

#include <algorithm>
#include <random>

#include "swpc/dataio.hpp"
#include "swpc/model.hpp"
#include "swpc/stream_engine.hpp"

namespace swpc::testing {

struct StreamCase {
  ModelBundle prescreen;
  ModelBundle classifier;
  ContinuousRecording recording;
  StreamConfig config;
};

// Untrained models of random shape over a random-walk recording. tau is set
// between the middle distinct prescreen outputs so both gated and rejected windows occur.
inline StreamCase random_stream_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  StreamCase c;
  c.recording.fs = 64.0;
  const std::size_t ch = pick(1, 4);
  c.recording.samples = Matrix(ch, pick(200, 700));
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t r = 0; r < ch; ++r) {
    double level = 0.0;
    for (double& v : c.recording.samples.row(r)) v = level += g(rng);
  }
  c.config.lw_seconds = 0.5;
  c.config.step_samples = pick(1, 12);
  c.config.averaging = true;

  NetConfig net;
  net.n_channels = ch;
  net.input_len = c.config.window_samples(c.recording.fs);
  net.fs = c.recording.fs;
  net.f1 = 2;
  net.depth = 2;
  net.f2 = 4;
  net.separable_kernel = 4;
  net.pool1 = 4;
  net.pool2 = 4;
  net.n_classes = 2;
  c.prescreen = init_model(net, rng());
  net.n_classes = pick(2, 4);
  c.classifier = init_model(net, rng());
  c.config.tau = 0.5;
  const auto scores = score_windows(c.prescreen, c.classifier, c.recording, c.config);
  auto p = scores.p_bar;
  std::sort(p.begin(), p.end());
  p.erase(std::unique(p.begin(), p.end()), p.end());
  const std::size_t mid = p.size() / 2;
  c.config.tau = p.size() < 2 ? 0.5 : std::clamp(0.5 * (p[mid - 1] + p[mid]), 1e-6, 1.0 - 1e-6);
  return c;
}

// Records for windows of `length` every `step` samples over `n` samples.
inline std::vector<DecisionRecord> records_from(const std::vector<double>& p_bar, const std::vector<std::vector<double>>& p,
                                         std::size_t step, double tau) {
  WindowScores s;
  for (std::size_t i = 0; i < p_bar.size(); ++i) s.start.push_back(i * step);
  s.p_bar = p_bar;
  s.p = p;
  return gate_and_average(s, tau, true);
}

// Scorer input: decisions from random scores and a random event table.
struct RandomCase {
  std::vector<DecisionRecord> records;
  std::vector<Event> events;
  std::size_t length;
  double tau;
};

inline RandomCase random_case(std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::uniform_real_distribution<double> u;
  RandomCase c;
  c.length = pick(5, 40);
  const std::size_t step = pick(1, 10), n_windows = pick(20, 150), k = pick(2, 4);
  const std::size_t n = (n_windows - 1) * step + c.length;
  std::size_t pos = pick(0, 30);
  while (true) {
    const std::size_t dur = pick(1, 80);
    if (pos + dur > n) break;
    c.events.push_back({pos, dur, static_cast<std::uint16_t>(pick(1, k))});
    pos += dur + pick(0, 40);
  }
  if (c.events.empty()) c.events.push_back({0, n, 1});
  c.tau = u(rng) * 0.9 + 0.05;
  std::vector<double> p_bar(n_windows);
  std::vector<std::vector<double>> p(n_windows);
  const double sticky = u(rng);
  for (std::size_t i = 0; i < n_windows; ++i) {
    p_bar[i] = i > 0 && u(rng) < sticky ? p_bar[i - 1] : u(rng);
    std::vector<double> v(k);
    double s = 0.0;
    for (double& x : v) s += x = u(rng) < 0.2 ? 1.0 : u(rng);
    for (double& x : v) x /= s;
    p[i] = v;
  }
  c.records = records_from(p_bar, p, step, c.tau);
  return c;
}

}  // namespace swpc::testing
