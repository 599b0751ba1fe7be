#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

#include "swpc/tensor.hpp"

// Stochastic trial augmentations for contrastive refinement of the
// classification module. Every function is a pure function of (input, seed).
namespace swpc::augment {

enum class AugmentKind { add_noise = 0, scale_amplitude = 1, mask_channels = 2, mask_segments = 3 };

inline constexpr std::array<AugmentKind, 4> kAllKinds{AugmentKind::add_noise, AugmentKind::scale_amplitude,
                                                      AugmentKind::mask_channels, AugmentKind::mask_segments};

std::string_view to_string(AugmentKind kind);

struct AugmentParams {
  double noise_factor = 0.5;
  double scale_low = 0.75;
  double scale_high = 1.25;
  double channel_mask_fraction = 0.25;
  std::size_t n_segments = 2;
  double segment_fraction = 0.1;

  void validate() const;
};

// x + factor * u with u ~ U(-s_c, s_c), s_c the standard deviation of channel c.
Matrix add_noise(const Matrix& trial, std::uint64_t seed, double factor = 0.5);

// Whole trial times `low` or `high`, each with probability 1/2.
Matrix scale_amplitude(const Matrix& trial, std::uint64_t seed, double low = 0.75, double high = 1.25);

// Zeroes ceil(fraction * channels) distinct channels.
Matrix mask_channels(const Matrix& trial, double fraction, std::uint64_t seed);

// Zeroes `n_segments` intervals of round(segment_fraction * samples) samples
// on every channel. Intervals may overlap.
Matrix mask_segments(const Matrix& trial, std::size_t n_segments, double segment_fraction, std::uint64_t seed);

Matrix apply(AugmentKind kind, const Matrix& trial, const AugmentParams& params, std::uint64_t seed);

struct AugmentedPair {
  Matrix first;
  Matrix second;
  AugmentKind first_kind;
  AugmentKind second_kind;
};

// Two different augmentations drawn without replacement, applied
// independently to the same trial.
AugmentedPair pick_two_distinct(const Matrix& trial, const AugmentParams& params, std::uint64_t seed);

// splitmix64 finalizer, used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace swpc::augment
