#include "swpc/eval.hpp"

#include <algorithm>
#include <ostream>

#include <json.hpp>

#include "swpc/dsp.hpp"
#include "swpc/error.hpp"

namespace swpc::eval {

WindowTruth classify_window(std::size_t start, std::size_t length, std::span<const Event> events) {
  const std::size_t end = start + length;
  for (const Event& e : events) {
    if (start >= e.onset && end <= e.end()) return WindowTruth::mi;
    if (start < e.end() && e.onset < end) return WindowTruth::excluded;
  }
  return WindowTruth::rest;
}

namespace {

std::vector<DecisionRecord> sorted_records(std::span<const DecisionRecord> records) {
  if (records.empty()) throw InvalidArgument("no decision records to score");
  std::vector<DecisionRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const DecisionRecord& a, const DecisionRecord& b) { return a.index < b.index; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].index == sorted[i - 1].index) {
      throw InvalidArgument("duplicate decision record for window " + std::to_string(sorted[i].index));
    }
  }
  return sorted;
}

struct WindowCounts {
  std::size_t mi = 0, mi_hit = 0, rest = 0, rest_alarm = 0;
};

WindowCounts count_windows(std::span<const DecisionRecord> records, std::span<const Event> events,
                           std::size_t window_length, double tau) {
  WindowCounts c;
  for (const auto& r : records) {
    const bool gated = r.p_bar >= tau;
    switch (classify_window(r.start_sample, window_length, events)) {
      case WindowTruth::mi:
        ++c.mi;
        c.mi_hit += gated;
        break;
      case WindowTruth::rest:
        ++c.rest;
        c.rest_alarm += gated;
        break;
      case WindowTruth::excluded:
        break;
    }
  }
  return c;
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ScoreReport score_stream(std::span<const DecisionRecord> records, std::span<const Event> events,
                         std::size_t window_length, double tau) {
  if (window_length == 0) throw InvalidArgument("window length must be positive");
  if (events.empty()) throw InvalidArgument("no events to score against");
  const auto sorted = sorted_records(records);

  ScoreReport report;
  report.n_events = events.size();
  std::size_t correct = 0;
  for (std::size_t e = 0; e < events.size(); ++e) {
    const Event& ev = events[e];
    EventVerdict v;
    v.event_index = e;
    v.label = ev.label;
    v.too_short = ev.duration < window_length;
    if (!v.too_short) {
      // Records are ordered by index and starts grow with index, so the first
      // record starting past the last admissible start bounds the search.
      const std::uint64_t last_start = ev.end() - window_length;
      auto it = std::upper_bound(sorted.begin(), sorted.end(), last_start,
                                 [](std::uint64_t s, const DecisionRecord& r) { return s < r.start_sample; });
      while (it != sorted.begin()) {
        --it;
        if (it->start_sample < ev.onset) break;
        if (it->p_bar >= tau) {
          v.deciding_window = it->index;
          v.predicted = it->predicted_label;
          break;
        }
      }
    }
    v.correct = v.deciding_window.has_value() && v.predicted == ev.label;
    correct += v.correct;
    report.verdicts.push_back(v);
  }
  report.acc = ratio(correct, events.size());

  const auto c = count_windows(sorted, events, window_length, tau);
  report.n_mi_windows = c.mi;
  report.n_rest_windows = c.rest;
  report.prescreen_acc = ratio(c.mi_hit + (c.rest - c.rest_alarm), c.mi + c.rest);
  report.false_alarm_rate = ratio(c.rest_alarm, c.rest);
  return report;
}

double prescreen_accuracy(std::span<const DecisionRecord> records, std::span<const Event> events,
                          std::size_t window_length, double tau) {
  const auto c = count_windows(records, events, window_length, tau);
  return ratio(c.mi_hit + (c.rest - c.rest_alarm), c.mi + c.rest);
}

std::string to_json(const ScoreReport& report, int indent) {
  nlohmann::ordered_json j;
  j["acc"] = report.acc;
  j["n_events"] = report.n_events;
  j["prescreen_acc"] = report.prescreen_acc;
  j["false_alarm_rate"] = report.false_alarm_rate;
  j["n_mi_windows"] = report.n_mi_windows;
  j["n_rest_windows"] = report.n_rest_windows;
  auto& verdicts = j["verdicts"] = nlohmann::ordered_json::array();
  for (const auto& v : report.verdicts) {
    nlohmann::ordered_json jv;
    jv["event"] = v.event_index;
    jv["label"] = v.label;
    jv["predicted"] = v.predicted;
    jv["correct"] = v.correct;
    if (v.deciding_window) jv["window"] = *v.deciding_window;
    if (v.too_short) jv["too_short"] = true;
    verdicts.push_back(std::move(jv));
  }
  return j.dump(indent);
}

std::vector<SweepPoint> sweep(std::span<const double> lw_grid, std::span<const double> tau_grid, double fs,
                              std::span<const Event> events, const RecordProvider& provider) {
  if (lw_grid.empty() || tau_grid.empty()) throw InvalidArgument("sweep grid is empty");
  std::vector<SweepPoint> points;
  for (double lw : lw_grid) {
    if (!(lw > 0.0)) throw InvalidArgument("window length must be positive");
    const std::size_t len = dsp::seconds_to_samples(lw, fs);
    for (double tau : tau_grid) {
      if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must be in (0, 1)");
      const auto records = provider(lw, tau);
      points.push_back({lw, tau, score_stream(records, events, len, tau)});
    }
  }
  return points;
}

void write_sweep_csv(std::span<const SweepPoint> points, std::ostream& out) {
  out << "L_w,tau,acc,prescreen_acc,false_alarm_rate\n";
  for (const auto& p : points) {
    out << p.lw_seconds << ',' << p.tau << ',' << p.report.acc << ',' << p.report.prescreen_acc << ','
        << p.report.false_alarm_rate << '\n';
  }
}

}  // namespace swpc::eval
