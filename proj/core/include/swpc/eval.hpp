#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swpc/dataio.hpp"
#include "swpc/stream_engine.hpp"

namespace swpc::eval {

enum class WindowTruth { mi, rest, excluded };

// mi: inside one event; rest: touches no event; excluded: straddles a boundary.
WindowTruth classify_window(std::size_t start, std::size_t length, std::span<const Event> events);

struct EventVerdict {
  std::size_t event_index = 0;
  std::uint16_t label = 0;
  std::optional<std::size_t> deciding_window;  // last gated window fully inside the event
  std::uint16_t predicted = kRestDecision;
  bool correct = false;
  bool too_short = false;  // event cannot hold a single window
};

struct ScoreReport {
  double acc = 0.0;
  std::size_t n_events = 0;
  std::vector<EventVerdict> verdicts;
  double prescreen_acc = 0.0;
  double false_alarm_rate = 0.0;
  std::size_t n_mi_windows = 0;
  std::size_t n_rest_windows = 0;
};

// An MI event is correct iff the last contained window with p_bar >= tau
// predicts its label; with no such window it is wrong. Records may come in
// any order.
ScoreReport score_stream(std::span<const DecisionRecord> records, std::span<const Event> events,
                         std::size_t window_length, double tau);

// Accuracy of (p_bar >= tau) against the truth of MI-contained and rest windows.
double prescreen_accuracy(std::span<const DecisionRecord> records, std::span<const Event> events,
                          std::size_t window_length, double tau);

std::string to_json(const ScoreReport& report, int indent = 2);

struct SweepPoint {
  double lw_seconds = 0.0;
  double tau = 0.0;
  ScoreReport report;
};

// Produces the decision records of one grid point.
using RecordProvider = std::function<std::vector<DecisionRecord>(double lw_seconds, double tau)>;

std::vector<SweepPoint> sweep(std::span<const double> lw_grid, std::span<const double> tau_grid, double fs,
                              std::span<const Event> events, const RecordProvider& provider);

// Columns: L_w,tau,acc,prescreen_acc,false_alarm_rate
void write_sweep_csv(std::span<const SweepPoint> points, std::ostream& out);

}  // namespace swpc::eval
