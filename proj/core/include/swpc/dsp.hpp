#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "swpc/dataio.hpp"
#include "swpc/tensor.hpp"

namespace swpc::dsp {

enum class FilterKind { bandpass, notch, custom };

// Transfer function b(z)/a(z) with a[0] == 1.
struct FilterCoeffs {
  std::vector<double> numerator;
  std::vector<double> denominator;
  FilterKind kind = FilterKind::custom;

  // H(e^{jw}) at `freq_hz` for sampling rate `fs`.
  std::complex<double> response(double freq_hz, double fs) const;
  double magnitude_db(double freq_hz, double fs) const;
  // Roots of the denominator, i.e. the filter poles.
  std::vector<std::complex<double>> poles() const;
  bool stable() const;
};

// Digital Butterworth bandpass of prototype order `order` (the result has
// 2 * order poles), designed by bilinear transform with prewarped edges.
FilterCoeffs design_bandpass(double low_hz, double high_hz, double fs, int order);

// Second-order IIR notch with -3 dB bandwidth freq_hz / quality.
FilterCoeffs design_notch(double freq_hz, double fs, double quality);

// Direct-form II transposed filtering with optional initial state.
std::vector<double> lfilter(const FilterCoeffs& coeffs, std::span<const double> signal,
                            std::span<const double> initial_state = {});

// Steady-state filter state for a unit step input.
std::vector<double> lfilter_zi(const FilterCoeffs& coeffs);

// Zero-phase forward-backward filtering. The signal is extended at both ends
// by odd reflection of 3 * max(len(b), len(a)) samples.
std::vector<double> filtfilt(const FilterCoeffs& coeffs, std::span<const double> signal);

struct PreprocessConfig {
  double band_low_hz = 8.0;
  double band_high_hz = 30.0;
  int band_order = 4;
  double notch_hz = 50.0;
  double notch_quality = 30.0;
  bool notch = true;
};

// Bandpass then notch, each zero-phase, channel by channel. The notch is
// skipped when its frequency is at or above Nyquist.
ContinuousRecording preprocess(const ContinuousRecording& rec, const PreprocessConfig& cfg = {});

std::size_t seconds_to_samples(double seconds, double fs);

// floor((n_samples - window) / step) + 1, or an error when the window does
// not fit.
std::size_t window_count(std::size_t n_samples, std::size_t window, std::size_t step);

struct Window {
  std::size_t index = 0;
  std::size_t start = 0;
  Matrix samples;  // [channels x window]
};

// Windows [i * step, i * step + length) over a recording, materialized on
// demand so long streams are not copied up front.
class WindowSequence {
 public:
  WindowSequence(const ContinuousRecording& rec, std::size_t length, std::size_t step);

  std::size_t size() const noexcept { return count_; }
  std::size_t length() const noexcept { return length_; }
  std::size_t step() const noexcept { return step_; }
  std::size_t start(std::size_t i) const noexcept { return i * step_; }
  Window operator[](std::size_t i) const;

 private:
  const ContinuousRecording* rec_;
  std::size_t length_;
  std::size_t step_;
  std::size_t count_;
};

WindowSequence sliding_windows(const ContinuousRecording& rec, std::size_t window, std::size_t step);

}  // namespace swpc::dsp
