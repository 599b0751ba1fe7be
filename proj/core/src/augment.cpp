#include "swpc/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "swpc/error.hpp"

namespace swpc::augment {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string_view to_string(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::add_noise:
      return "add_noise";
    case AugmentKind::scale_amplitude:
      return "scale_amplitude";
    case AugmentKind::mask_channels:
      return "mask_channels";
    case AugmentKind::mask_segments:
      return "mask_segments";
  }
  return "unknown";
}

void AugmentParams::validate() const {
  if (noise_factor < 0.0) throw InvalidArgument("noise factor must be non-negative");
  if (!(channel_mask_fraction > 0.0 && channel_mask_fraction < 1.0)) {
    throw InvalidArgument("channel mask fraction must be in (0, 1)");
  }
  if (!(segment_fraction > 0.0 && segment_fraction < 1.0)) throw InvalidArgument("segment fraction must be in (0, 1)");
  if (n_segments == 0) throw InvalidArgument("at least one segment must be masked");
}

Matrix add_noise(const Matrix& trial, std::uint64_t seed, double factor) {
  std::mt19937_64 rng(seed);
  Matrix out = trial;
  const auto n = static_cast<double>(trial.cols());
  for (std::size_t c = 0; c < trial.rows(); ++c) {
    const auto row = trial.row(c);
    const double mean = std::accumulate(row.begin(), row.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : row) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / n);
    if (sd == 0.0) continue;
    std::uniform_real_distribution<double> u(-sd, sd);
    for (double& v : out.row(c)) v += factor * u(rng);
  }
  return out;
}

Matrix scale_amplitude(const Matrix& trial, std::uint64_t seed, double low, double high) {
  std::mt19937_64 rng(seed);
  const double factor = std::bernoulli_distribution(0.5)(rng) ? high : low;
  Matrix out = trial;
  for (double& v : out.data()) v *= factor;
  return out;
}

Matrix mask_channels(const Matrix& trial, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0)) throw InvalidArgument("channel mask fraction must be positive");
  const auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(trial.rows()) - 1e-9));
  if (count >= trial.rows()) {
    throw InvalidArgument("masking " + std::to_string(count) + " of " + std::to_string(trial.rows()) +
                          " channels would zero the whole trial");
  }
  std::vector<std::size_t> order(trial.rows());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  Matrix out = trial;
  for (std::size_t i = 0; i < count; ++i) std::fill(out.row(order[i]).begin(), out.row(order[i]).end(), 0.0);
  return out;
}

Matrix mask_segments(const Matrix& trial, std::size_t n_segments, double segment_fraction, std::uint64_t seed) {
  const auto len = static_cast<std::size_t>(std::llround(segment_fraction * static_cast<double>(trial.cols())));
  if (len == 0 || !(segment_fraction > 0.0)) throw InvalidArgument("masked segment length must be at least one sample");
  if (len > trial.cols()) throw InvalidArgument("masked segment longer than the trial");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> start(0, trial.cols() - len);
  Matrix out = trial;
  for (std::size_t s = 0; s < n_segments; ++s) {
    const std::size_t b = start(rng);
    for (std::size_t c = 0; c < out.rows(); ++c) {
      auto row = out.row(c);
      std::fill(row.begin() + static_cast<std::ptrdiff_t>(b), row.begin() + static_cast<std::ptrdiff_t>(b + len), 0.0);
    }
  }
  return out;
}

Matrix apply(AugmentKind kind, const Matrix& trial, const AugmentParams& params, std::uint64_t seed) {
  switch (kind) {
    case AugmentKind::add_noise:
      return add_noise(trial, seed, params.noise_factor);
    case AugmentKind::scale_amplitude:
      return scale_amplitude(trial, seed, params.scale_low, params.scale_high);
    case AugmentKind::mask_channels:
      return mask_channels(trial, params.channel_mask_fraction, seed);
    case AugmentKind::mask_segments:
      return mask_segments(trial, params.n_segments, params.segment_fraction, seed);
  }
  throw InvalidArgument("unknown augmentation");
}

AugmentedPair pick_two_distinct(const Matrix& trial, const AugmentParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0));
  std::uniform_int_distribution<std::size_t> first(0, kAllKinds.size() - 1);
  std::uniform_int_distribution<std::size_t> other(0, kAllKinds.size() - 2);
  const std::size_t a = first(rng);
  std::size_t b = other(rng);
  if (b >= a) ++b;
  AugmentedPair pair{apply(kAllKinds[a], trial, params, mix_seed(seed, 1)),
                     apply(kAllKinds[b], trial, params, mix_seed(seed, 2)), kAllKinds[a], kAllKinds[b]};
  return pair;
}

}  // namespace swpc::augment
