#include "swpc/datagen.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "swpc/augment.hpp"
#include "swpc/dsp.hpp"
#include "swpc/error.hpp"

namespace swpc {

void SynthSpec::validate() const {
  if (n_channels == 0) throw InvalidArgument("synthetic recording needs at least one channel");
  if (!(fs > 0.0)) throw InvalidArgument("sampling rate must be positive");
  if (n_classes == 0) throw InvalidArgument("at least one MI class is required");
  if (!(mu_freq > 0.0 && mu_freq < fs / 2.0)) throw InvalidArgument("mu frequency must lie below Nyquist");
  if (!(erd_depth >= 0.0 && erd_depth < 1.0)) throw InvalidArgument("erd_depth must be in [0, 1)");
  if (!(mu_modulation >= 0.0 && mu_modulation < 1.0)) throw InvalidArgument("mu_modulation must be in [0, 1)");
  if (!(mu_jitter_hz >= 0.0)) throw InvalidArgument("mu_jitter_hz must be non-negative");
  if (mu_amplitude < 0.0 || noise_amplitude < 0.0) throw InvalidArgument("amplitudes must be non-negative");
  if (!(trial_seconds > 0.0)) throw InvalidArgument("trial length must be positive");
  if (!(rest_min_seconds >= 0.0 && rest_max_seconds >= rest_min_seconds)) {
    throw InvalidArgument("rest gap range must satisfy 0 <= min <= max");
  }
  if (n_events == 0) throw InvalidArgument("at least one event is required");
  if (!erd_channels.empty() && erd_channels.size() != n_classes) {
    throw InvalidArgument("erd_channels needs one entry per class");
  }
  for (const auto& chans : erd_channels) {
    for (std::size_t c : chans) {
      if (c >= n_channels) throw InvalidArgument("ERD channel " + std::to_string(c) + " out of range");
    }
  }
}

std::vector<std::size_t> SynthSpec::channels_for(std::size_t class_index) const {
  if (!erd_channels.empty()) return erd_channels.at(class_index);
  return {class_index % n_channels};
}

std::vector<double> pink_noise(std::size_t n, std::uint64_t seed) {
  constexpr std::size_t kRows = 16;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::array<double, kRows> rows{};
  double running = 0.0;
  for (double& r : rows) {
    r = u(rng);
    running += r;
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Row j changes every 2^j samples: the counter's trailing zeros pick it.
    const auto j = static_cast<std::size_t>(std::countr_zero(static_cast<std::uint64_t>(i + 1)));
    if (j < kRows) {
      running -= rows[j];
      rows[j] = u(rng);
      running += rows[j];
    }
    out[i] = running + u(rng);
  }
  // Each uniform has variance 1/3; kRows + 1 of them are summed.
  const double scale = 1.0 / std::sqrt(static_cast<double>(kRows + 1) / 3.0);
  for (double& v : out) v *= scale;
  return out;
}

ContinuousRecording synth_recording(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(augment::mix_seed(spec.seed, 0));
  const std::size_t trial = dsp::seconds_to_samples(spec.trial_seconds, spec.fs);
  if (trial == 0) throw InvalidArgument("trial shorter than one sample");
  std::uniform_real_distribution<double> gap_s(spec.rest_min_seconds, spec.rest_max_seconds);

  std::vector<std::uint16_t> labels(spec.n_events);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint16_t>(1 + i % spec.n_classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  ContinuousRecording rec;
  rec.fs = spec.fs;
  std::uint64_t cursor = 0;
  for (std::uint16_t label : labels) {
    cursor += dsp::seconds_to_samples(gap_s(rng), spec.fs);
    rec.events.push_back({cursor, trial, label});
    cursor += trial;
  }
  cursor += dsp::seconds_to_samples(gap_s(rng), spec.fs);
  const std::size_t n = cursor;

  // Per-sample gain of the mu rhythm on each channel.
  std::vector<std::vector<double>> gain(spec.n_channels, std::vector<double>(n, 1.0));
  for (const Event& e : rec.events) {
    for (std::size_t c : spec.channels_for(e.label - 1)) {
      std::fill(gain[c].begin() + static_cast<std::ptrdiff_t>(e.onset),
                gain[c].begin() + static_cast<std::ptrdiff_t>(e.end()), 1.0 - spec.erd_depth);
    }
  }

  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> wobble_hz(0.05, 0.2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Frequency offset follows an Ornstein-Uhlenbeck process with a 0.5 s time
  // constant and stationary standard deviation mu_jitter_hz.
  const double dt = 1.0 / spec.fs;
  const double decay = std::exp(-dt / 0.5);
  const double kick = spec.mu_jitter_hz * std::sqrt(1.0 - decay * decay);
  rec.samples = Matrix(spec.n_channels, n);
  for (std::size_t c = 0; c < spec.n_channels; ++c) {
    double ph = phase(rng);
    const double wob_ph = phase(rng);
    const double wob_f = wobble_hz(rng);
    double offset = spec.mu_jitter_hz * gauss(rng);
    const auto noise = pink_noise(n, augment::mix_seed(spec.seed, 100 + c));
    auto row = rec.samples.row(c);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) * dt;
      const double amp =
          spec.mu_amplitude * (1.0 + spec.mu_modulation * std::sin(2.0 * std::numbers::pi * wob_f * t + wob_ph));
      row[i] = gain[c][i] * amp * std::sin(ph) + spec.noise_amplitude * noise[i];
      ph += 2.0 * std::numbers::pi * (spec.mu_freq + offset) * dt;
      offset = decay * offset + kick * gauss(rng);
    }
  }
  rec.validate();
  return rec;
}

SynthDataset synth_dataset(const SynthSpec& spec, std::size_t n_trials_per_class) {
  if (n_trials_per_class == 0) throw InvalidArgument("at least one trial per class is required");
  SynthSpec s = spec;
  s.n_events = n_trials_per_class * spec.n_classes;
  s.rest_min_seconds = std::max(s.rest_min_seconds, s.trial_seconds);
  s.rest_max_seconds = std::max(s.rest_max_seconds, s.rest_min_seconds);
  SynthDataset ds;
  ds.recording = synth_recording(s);
  const std::size_t trial = dsp::seconds_to_samples(s.trial_seconds, s.fs);
  ds.multiclass = extract_mi_trials(ds.recording, trial, s.n_classes);
  auto rest = extract_adjacent_rest(ds.recording, trial);
  if (rest.skipped != 0) throw InvalidArgument("synthetic rest gaps too short for adjacent rest trials");
  ds.binary = std::move(rest.set);
  return ds;
}

}  // namespace swpc
