#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "swpc/datagen.hpp"
#include "swpc/dsp.hpp"
#include "swpc/model.hpp"
#include "swpc/stream_engine.hpp"
#include "swpc/training.hpp"

using namespace swpc;

namespace {

NetConfig net(std::size_t channels, double fs) {
  NetConfig c;
  c.n_channels = channels;
  c.fs = fs;
  c.input_len = static_cast<std::size_t>(fs);
  return c;
}

std::vector<Matrix> random_windows(std::size_t n, std::size_t channels, std::size_t len) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 10.0);
  std::vector<Matrix> out(n, Matrix(channels, len));
  for (auto& m : out)
    for (std::size_t r = 0; r < channels; ++r)
      for (double& v : m.row(r)) v = g(rng);
  return out;
}

void BM_Filtfilt(benchmark::State& state) {
  const auto coeffs = dsp::design_bandpass(8.0, 30.0, 250.0, 4);
  const auto x = pink_noise(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(dsp::filtfilt(coeffs, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Filtfilt)->Arg(2500)->Arg(75000);

void BM_Embed(benchmark::State& state) {
  const auto cfg = net(static_cast<std::size_t>(state.range(0)), 250.0);
  const auto bundle = init_model(cfg, 1);
  const auto windows = random_windows(32, cfg.n_channels, cfg.input_len);
  for (auto _ : state) benchmark::DoNotOptimize(embed(bundle, windows));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Embed)->Arg(3)->Arg(22)->Unit(benchmark::kMillisecond);

// One forward and backward pass over a training batch of 8.
void BM_TrainStep(benchmark::State& state) {
  auto cfg = net(static_cast<std::size_t>(state.range(0)), 250.0);
  auto bundle = init_model(cfg, 1);
  const auto windows = random_windows(8, cfg.n_channels, cfg.input_len);
  const auto input = stack_batch(std::span<const Matrix>(windows), cfg);
  const std::vector<std::size_t> targets{0, 1, 0, 1, 1, 0, 0, 1};
  std::mt19937_64 rng(2);
  for (auto _ : state) {
    ad::Tape tape;
    const auto theta = bind_params(tape, bundle.theta, true);
    const auto psi = bind_params(tape, bundle.psi, true);
    const auto emb = feature_extract(tape, cfg, theta, bundle.batchnorm, tape.constant(input),
                                     {ad::BatchNormMode::train, &rng});
    const auto loss = ad::cross_entropy(tape, classify_logits(tape, psi, emb), targets);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(theta[0]));
  }
}
BENCHMARK(BM_TrainStep)->Arg(3)->Arg(22)->Unit(benchmark::kMillisecond);

// Decoding one minute of a 4-channel stream at 128 Hz with a step of 10 samples.
void BM_DecodeStream(benchmark::State& state) {
  SynthSpec spec;
  spec.n_events = 12;
  const auto rec = dsp::preprocess(synth_recording(spec));
  ContinuousRecording minute = rec;
  minute.samples = Matrix(rec.n_channels(), 60 * 128);
  for (std::size_t r = 0; r < rec.n_channels(); ++r)
    for (std::size_t t = 0; t < minute.samples.cols(); ++t) minute.samples(r, t) = rec.samples(r, t);
  minute.events.clear();
  StreamConfig sc;
  auto cfg = net(rec.n_channels(), rec.fs);
  cfg.input_len = sc.window_samples(rec.fs);
  const auto prescreen = init_model(cfg, 1);
  const auto classifier = init_model(cfg, 2);
  for (auto _ : state) benchmark::DoNotOptimize(decode_stream(prescreen, classifier, minute, sc));
}
BENCHMARK(BM_DecodeStream)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
