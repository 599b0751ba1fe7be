#include "swpc/dsp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "swpc/error.hpp"

namespace swpc::dsp {

namespace {

using cplx = std::complex<double>;

// Coefficients of prod (z - r), highest power first.
std::vector<double> poly_from_roots(const std::vector<cplx>& roots) {
  std::vector<cplx> c{1.0};
  for (const cplx& r : roots) {
    std::vector<cplx> next(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= c[i] * r;
    }
    c = std::move(next);
  }
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

cplx eval_poly_inverse(const std::vector<double>& coeffs, cplx z_inv) {
  // sum_k c_k z^{-k}, Horner in z^{-1}
  cplx acc = 0.0;
  for (std::size_t k = coeffs.size(); k-- > 0;) acc = acc * z_inv + coeffs[k];
  return acc;
}

}  // namespace

cplx FilterCoeffs::response(double freq_hz, double fs) const {
  const double w = 2.0 * std::numbers::pi * freq_hz / fs;
  const cplx z_inv = std::polar(1.0, -w);
  return eval_poly_inverse(numerator, z_inv) / eval_poly_inverse(denominator, z_inv);
}

double FilterCoeffs::magnitude_db(double freq_hz, double fs) const {
  return 20.0 * std::log10(std::abs(response(freq_hz, fs)));
}

std::vector<cplx> FilterCoeffs::poles() const {
  std::size_t n = denominator.size();
  while (n > 1 && denominator[n - 1] == 0.0) --n;
  if (n <= 1) return {};
  const std::size_t order = n - 1;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(order),
                                                    static_cast<Eigen::Index>(order));
  for (std::size_t j = 0; j < order; ++j) {
    companion(0, static_cast<Eigen::Index>(j)) = -denominator[j + 1] / denominator[0];
  }
  for (std::size_t i = 1; i < order; ++i) {
    companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
  }
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<cplx> out;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) out.push_back(solver.eigenvalues()(i));
  return out;
}

bool FilterCoeffs::stable() const {
  const auto p = poles();
  return std::all_of(p.begin(), p.end(), [](const cplx& z) { return std::abs(z) < 1.0; });
}

FilterCoeffs design_bandpass(double low_hz, double high_hz, double fs, int order) {
  if (!(fs > 0.0)) throw InvalidArgument("sampling rate must be positive");
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0)) {
    throw InvalidArgument("band edges must satisfy 0 < low < high < fs/2");
  }
  if (order < 2 || order % 2 != 0) throw InvalidArgument("bandpass order must be even and at least 2");

  const auto n = static_cast<std::size_t>(order);
  const double pi = std::numbers::pi;
  const double fs2 = 2.0 * fs;
  const double w_low = fs2 * std::tan(pi * low_hz / fs);
  const double w_high = fs2 * std::tan(pi * high_hz / fs);
  const double bw = w_high - w_low;
  const double w0 = std::sqrt(w_low * w_high);

  // Analog lowpass prototype poles on the left half of the unit circle.
  std::vector<cplx> proto;
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = pi * static_cast<double>(2 * k + n + 1) / static_cast<double>(2 * n);
    proto.push_back(std::polar(1.0, angle));
  }

  // Lowpass -> bandpass: each pole splits in two, n zeros land at s = 0.
  std::vector<cplx> poles;
  for (const cplx& p : proto) {
    const cplx half = p * bw / 2.0;
    const cplx root = std::sqrt(half * half - w0 * w0);
    poles.push_back(half + root);
    poles.push_back(half - root);
  }
  double gain = std::pow(bw, static_cast<double>(n));

  // Bilinear transform: s = 0 zeros map to z = 1, zeros at infinity to z = -1.
  std::vector<cplx> zd(n, cplx(1.0)), pd;
  zd.insert(zd.end(), n, cplx(-1.0));
  cplx num_prod = 1.0, den_prod = 1.0;
  for (std::size_t i = 0; i < n; ++i) num_prod *= fs2;  // (fs2 - 0) for each analog zero
  for (const cplx& p : poles) {
    pd.push_back((fs2 + p) / (fs2 - p));
    den_prod *= (fs2 - p);
  }
  gain *= (num_prod / den_prod).real();

  FilterCoeffs out;
  out.kind = FilterKind::bandpass;
  out.numerator = poly_from_roots(zd);
  for (double& b : out.numerator) b *= gain;
  out.denominator = poly_from_roots(pd);
  if (!out.stable()) throw Error("bandpass design produced an unstable filter");
  return out;
}

FilterCoeffs design_notch(double freq_hz, double fs, double quality) {
  if (!(fs > 0.0)) throw InvalidArgument("sampling rate must be positive");
  if (!(freq_hz > 0.0 && freq_hz < fs / 2.0)) throw InvalidArgument("notch frequency must be in (0, fs/2)");
  if (!(quality > 0.0)) throw InvalidArgument("notch quality must be positive");
  const double w0 = 2.0 * std::numbers::pi * freq_hz / fs;
  const double bw = w0 / quality;
  const double beta = std::tan(bw / 2.0);
  const double gain = 1.0 / (1.0 + beta);
  const double c = std::cos(w0);
  FilterCoeffs out;
  out.kind = FilterKind::notch;
  out.numerator = {gain, -2.0 * gain * c, gain};
  out.denominator = {1.0, -2.0 * gain * c, 2.0 * gain - 1.0};
  return out;
}

namespace {

// Pads b and a to the same length and normalizes by a[0].
void normalized(const FilterCoeffs& coeffs, std::vector<double>& b, std::vector<double>& a) {
  if (coeffs.denominator.empty() || coeffs.denominator[0] == 0.0) {
    throw InvalidArgument("filter denominator must start with a non-zero coefficient");
  }
  if (coeffs.numerator.empty()) throw InvalidArgument("filter numerator is empty");
  const std::size_t n = std::max(coeffs.numerator.size(), coeffs.denominator.size());
  b.assign(n, 0.0);
  a.assign(n, 0.0);
  const double a0 = coeffs.denominator[0];
  for (std::size_t i = 0; i < coeffs.numerator.size(); ++i) b[i] = coeffs.numerator[i] / a0;
  for (std::size_t i = 0; i < coeffs.denominator.size(); ++i) a[i] = coeffs.denominator[i] / a0;
}

}  // namespace

std::vector<double> lfilter(const FilterCoeffs& coeffs, std::span<const double> signal,
                            std::span<const double> initial_state) {
  std::vector<double> b, a;
  normalized(coeffs, b, a);
  const std::size_t order = b.size() - 1;
  std::vector<double> z(order, 0.0);
  if (!initial_state.empty()) {
    if (initial_state.size() != order) throw InvalidArgument("initial state length must equal filter order");
    std::copy(initial_state.begin(), initial_state.end(), z.begin());
  }
  std::vector<double> y(signal.size());
  for (std::size_t n = 0; n < signal.size(); ++n) {
    const double x = signal[n];
    const double out = b[0] * x + (order > 0 ? z[0] : 0.0);
    for (std::size_t k = 0; k + 1 < order; ++k) z[k] = b[k + 1] * x + z[k + 1] - a[k + 1] * out;
    if (order > 0) z[order - 1] = b[order] * x - a[order] * out;
    y[n] = out;
  }
  return y;
}

std::vector<double> lfilter_zi(const FilterCoeffs& coeffs) {
  std::vector<double> b, a;
  normalized(coeffs, b, a);
  const std::size_t order = b.size() - 1;
  if (order == 0) return {};
  const auto m = static_cast<Eigen::Index>(order);
  // (I - A^T) zi = b[1:] - a[1:] * b[0], A the companion matrix of a.
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index j = 0; j < m; ++j) lhs(j, 0) += a[static_cast<std::size_t>(j) + 1];
  for (Eigen::Index i = 1; i < m; ++i) lhs(i - 1, i) -= 1.0;
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    rhs(i) = b[static_cast<std::size_t>(i) + 1] - a[static_cast<std::size_t>(i) + 1] * b[0];
  }
  const Eigen::VectorXd zi = lhs.fullPivLu().solve(rhs);
  return {zi.data(), zi.data() + zi.size()};
}

std::vector<double> filtfilt(const FilterCoeffs& coeffs, std::span<const double> signal) {
  const std::size_t padlen = 3 * std::max(coeffs.numerator.size(), coeffs.denominator.size());
  if (signal.size() <= padlen) {
    throw InvalidArgument("filtfilt: signal of " + std::to_string(signal.size()) +
                          " samples is too short, need more than " + std::to_string(padlen));
  }
  const std::size_t n = signal.size();
  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[i]);
  ext.insert(ext.end(), signal.begin(), signal.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

  const std::vector<double> zi = lfilter_zi(coeffs);
  std::vector<double> state(zi.size());
  for (std::size_t i = 0; i < zi.size(); ++i) state[i] = zi[i] * ext.front();
  std::vector<double> forward = lfilter(coeffs, ext, state);

  std::reverse(forward.begin(), forward.end());
  for (std::size_t i = 0; i < zi.size(); ++i) state[i] = zi[i] * forward.front();
  std::vector<double> backward = lfilter(coeffs, forward, state);
  std::reverse(backward.begin(), backward.end());

  return {backward.begin() + static_cast<std::ptrdiff_t>(padlen),
          backward.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

ContinuousRecording preprocess(const ContinuousRecording& rec, const PreprocessConfig& cfg) {
  const FilterCoeffs band = design_bandpass(cfg.band_low_hz, cfg.band_high_hz, rec.fs, cfg.band_order);
  const bool use_notch = cfg.notch && cfg.notch_hz < rec.fs / 2.0;
  FilterCoeffs notch;
  if (use_notch) notch = design_notch(cfg.notch_hz, rec.fs, cfg.notch_quality);

  ContinuousRecording out = rec;
  for (std::size_t c = 0; c < rec.n_channels(); ++c) {
    std::vector<double> y = filtfilt(band, rec.samples.row(c));
    if (use_notch) y = filtfilt(notch, y);
    std::copy(y.begin(), y.end(), out.samples.row(c).begin());
  }
  return out;
}

std::size_t seconds_to_samples(double seconds, double fs) {
  if (!(seconds > 0.0) || !(fs > 0.0)) throw InvalidArgument("duration and sampling rate must be positive");
  return static_cast<std::size_t>(std::llround(seconds * fs));
}

std::size_t window_count(std::size_t n_samples, std::size_t window, std::size_t step) {
  if (step == 0) throw InvalidArgument("window step must be at least 1");
  if (window == 0) throw InvalidArgument("window length must be positive");
  if (window > n_samples) {
    throw InvalidArgument("window of " + std::to_string(window) + " samples exceeds stream of " +
                          std::to_string(n_samples));
  }
  return (n_samples - window) / step + 1;
}

WindowSequence::WindowSequence(const ContinuousRecording& rec, std::size_t length, std::size_t step)
    : rec_(&rec), length_(length), step_(step), count_(window_count(rec.n_samples(), length, step)) {}

Window WindowSequence::operator[](std::size_t i) const {
  if (i >= count_) throw InvalidArgument("window index out of range");
  return Window{i, start(i), rec_->samples.slice_cols(start(i), length_)};
}

WindowSequence sliding_windows(const ContinuousRecording& rec, std::size_t window, std::size_t step) {
  return WindowSequence(rec, window, step);
}

}  // namespace swpc::dsp
