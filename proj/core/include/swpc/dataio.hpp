#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "swpc/tensor.hpp"

namespace swpc {

// Label code 0 is rest in every dataset; MI classes are 1..K.
inline constexpr std::uint16_t kRestLabel = 0;

struct Event {
  std::uint64_t onset = 0;     // sample index
  std::uint64_t duration = 0;  // samples
  std::uint16_t label = 0;

  std::uint64_t end() const noexcept { return onset + duration; }
  friend bool operator==(const Event&, const Event&) = default;
};

// A long multichannel stream with its ground-truth event table.
struct ContinuousRecording {
  double fs = 0.0;
  Matrix samples;  // [channels x samples], microvolts
  std::vector<Event> events;

  std::size_t n_channels() const noexcept { return samples.rows(); }
  std::size_t n_samples() const noexcept { return samples.cols(); }

  // Throws InvalidArgument when the recording breaks its invariants: empty
  // stream, events out of range, unsorted or overlapping events.
  void validate() const;

  friend bool operator==(const ContinuousRecording&, const ContinuousRecording&) = default;
};

struct Trial {
  Matrix samples;  // [channels x ts]
  std::uint16_t label = 0;
};

enum class TrialKind { multiclass, binary };

struct TrialSet {
  std::vector<Trial> trials;
  TrialKind kind = TrialKind::multiclass;
  std::vector<std::string> class_names;

  std::size_t size() const noexcept { return trials.size(); }
  bool empty() const noexcept { return trials.empty(); }
  // Number of network outputs: 2 for binary sets, K for multiclass.
  std::size_t n_classes() const noexcept { return class_names.size(); }
  // Network output index of a trial: label for binary sets, label - 1 otherwise.
  std::size_t class_index(const Trial& trial) const;
  std::vector<std::size_t> class_counts() const;
};

inline constexpr std::uint16_t kContainerVersion = 1;

void write_recording(const ContinuousRecording& rec, const std::filesystem::path& path);
ContinuousRecording read_recording(const std::filesystem::path& path);

// One trial per event covering [onset, onset + trial_len).
TrialSet extract_mi_trials(const ContinuousRecording& rec, std::size_t trial_len, std::size_t n_classes = 0);

struct RestExtraction {
  TrialSet set;           // binary: MI trials (label 1) and the rest trials (label 0)
  std::size_t skipped = 0;  // events without a clean preceding gap
};

// Pairs every MI event with the rest window [onset - trial_len, onset).
RestExtraction extract_adjacent_rest(const ContinuousRecording& rec, std::size_t trial_len);

std::vector<std::string> default_class_names(std::size_t n_classes);

}  // namespace swpc
