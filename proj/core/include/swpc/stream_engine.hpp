#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "swpc/dataio.hpp"
#include "swpc/model.hpp"

namespace swpc {

struct StreamConfig {
  double lw_seconds = 1.0;
  std::size_t step_samples = 10;
  double tau = 0.2;
  bool averaging = true;  // false: p_hat is the instantaneous p

  void validate() const;
  std::size_t window_samples(double fs) const;
};

// Label code emitted for windows the prescreen rejects.
inline constexpr std::uint16_t kRestDecision = kRestLabel;

struct DecisionRecord {
  std::size_t index = 0;
  std::size_t start_sample = 0;
  double p_bar = 0.0;                        // prescreen MI probability
  std::optional<std::vector<double>> p;      // present only for gated windows
  std::optional<std::vector<double>> p_hat;  // running mean over the current run
  std::uint16_t predicted_label = kRestDecision;
  std::optional<std::size_t> run_start;

  friend bool operator==(const DecisionRecord&, const DecisionRecord&) = default;
};

// Elementwise mean; the divisor is the number of vectors.
std::vector<double> running_average(std::span<const std::vector<double>> run);

// 1 + argmax, ties to the lowest index.
std::uint16_t class_label(std::span<const double> probs);

// Gating and run averaging with O(1) state: the running sum and the run start.
class StreamDecoder {
 public:
  explicit StreamDecoder(double tau, bool averaging = true);

  bool gated(double p_bar) const noexcept { return p_bar >= tau_; }
  // `p` is required iff the window is gated and ignored otherwise.
  DecisionRecord step(std::size_t index, std::size_t start_sample, double p_bar, std::span<const double> p);
  void reset();
  std::optional<std::size_t> run_start() const noexcept { return run_start_; }

 private:
  double tau_;
  bool averaging_;
  std::optional<std::size_t> run_start_;
  std::vector<double> sum_;
  std::size_t count_ = 0;
};

// Throws ShapeError unless both bundles accept windows of this recording.
void check_models(const ModelBundle& prescreen, const ModelBundle& classifier, const ContinuousRecording& rec,
                  const StreamConfig& cfg);

// Batch decoding. The classifier runs only on gated windows.
std::vector<DecisionRecord> decode_stream(const ModelBundle& prescreen, const ModelBundle& classifier,
                                          const ContinuousRecording& rec, const StreamConfig& cfg);

// One window at a time, as a live decoder would.
std::vector<DecisionRecord> decode_stream_online(const ModelBundle& prescreen, const ModelBundle& classifier,
                                                 const ContinuousRecording& rec, const StreamConfig& cfg);

// Model outputs for every window, so thresholds and the averaging switch can
// be varied without re-running the networks.
struct WindowScores {
  std::vector<std::size_t> start;
  std::vector<double> p_bar;
  std::vector<std::vector<double>> p;
};

WindowScores score_windows(const ModelBundle& prescreen, const ModelBundle& classifier,
                           const ContinuousRecording& rec, const StreamConfig& cfg);
std::vector<DecisionRecord> gate_and_average(const WindowScores& scores, double tau, bool averaging);

// Line-delimited JSON: {"i", "start_sample", "p_bar", "p"?, "p_hat"?, "label", "run_start"?}.
void write_decision_log(std::span<const DecisionRecord> records, std::ostream& out);
std::vector<DecisionRecord> read_decision_log(std::istream& in);

}  // namespace swpc
