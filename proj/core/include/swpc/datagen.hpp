#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "swpc/dataio.hpp"

namespace swpc {

// Synthetic MI recordings: a mu-band rhythm on every channel plus pink noise.
// Each channel's rhythm wanders in frequency independently, so phase
// relations between channels carry no information.
// During an event of class k the rhythm on class k's channels is suppressed
// by erd_depth.
struct SynthSpec {
  std::size_t n_channels = 4;
  double fs = 128.0;
  std::size_t n_classes = 2;
  double mu_freq = 11.0;
  double mu_amplitude = 10.0;   // microvolts
  double mu_modulation = 0.1;   // slow amplitude wobble, fraction of mu_amplitude
  double mu_jitter_hz = 1.0;    // std of the per-channel frequency wander; keeps the rhythm narrowband
  double erd_depth = 0.6;
  std::vector<std::vector<std::size_t>> erd_channels;  // per class; empty: class k -> channel k-1
  double noise_amplitude = 8.0;  // pink noise standard deviation, microvolts
  double trial_seconds = 3.0;
  double rest_min_seconds = 2.0;
  double rest_max_seconds = 4.0;
  std::size_t n_events = 40;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<std::size_t> channels_for(std::size_t class_index) const;
};

// Unit-variance 1/f noise (Voss-McCartney, 16 rows).
std::vector<double> pink_noise(std::size_t n, std::uint64_t seed);

// Balanced classes in shuffled order, each event preceded by a rest gap drawn
// from [rest_min, rest_max] and followed by a final gap.
ContinuousRecording synth_recording(const SynthSpec& spec);

struct SynthDataset {
  ContinuousRecording recording;
  TrialSet multiclass;  // one trial per event
  TrialSet binary;      // the MI trials plus one adjacent rest trial each
};

// Rest gaps are widened to at least one trial length so every event has a
// clean preceding rest trial.
SynthDataset synth_dataset(const SynthSpec& spec, std::size_t n_trials_per_class);

}  // namespace swpc
