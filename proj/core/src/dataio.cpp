#include "swpc/dataio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "swpc/error.hpp"

namespace swpc {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'W', 'P', 'C'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 2 + 8 + 8 + 4;
constexpr std::size_t kEventBytes = 8 + 8 + 2;

template <typename T>
void put_le(std::vector<char>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.insert(out.end(), bytes.begin(), bytes.end());
}

class Reader {
 public:
  Reader(const std::vector<char>& buf, const std::filesystem::path& path) : buf_(buf), path_(path) {}

  template <typename T>
  T get(const char* what) {
    if (pos_ + sizeof(T) > buf_.size()) {
      throw TruncatedFileError(path_.string() + ": truncated while reading " + what);
    }
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), buf_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
  }

  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::vector<char>& buf_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void ContinuousRecording::validate() const {
  if (n_samples() == 0 || n_channels() == 0) throw InvalidArgument("recording has no samples");
  if (!(fs > 0.0)) throw InvalidArgument("recording sampling rate must be positive");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.duration == 0) throw InvalidArgument("event " + std::to_string(i) + " has zero duration");
    if (e.end() > n_samples()) throw InvalidArgument("event " + std::to_string(i) + " extends past the recording");
    if (i > 0 && e.onset < events[i - 1].end()) {
      throw InvalidArgument("events " + std::to_string(i - 1) + " and " + std::to_string(i) +
                            " are unsorted or overlap");
    }
  }
}

std::size_t TrialSet::class_index(const Trial& trial) const {
  const std::size_t idx = kind == TrialKind::binary ? trial.label : static_cast<std::size_t>(trial.label) - 1;
  if (trial.label == 0 && kind == TrialKind::multiclass) throw InvalidArgument("rest label in a multiclass set");
  if (idx >= n_classes()) throw InvalidArgument("trial label " + std::to_string(trial.label) + " out of range");
  return idx;
}

std::vector<std::size_t> TrialSet::class_counts() const {
  std::vector<std::size_t> counts(n_classes(), 0);
  for (const Trial& t : trials) ++counts[class_index(t)];
  return counts;
}

std::vector<std::string> default_class_names(std::size_t n_classes) {
  std::vector<std::string> names;
  for (std::size_t k = 1; k <= n_classes; ++k) names.push_back("class" + std::to_string(k));
  return names;
}

void write_recording(const ContinuousRecording& rec, const std::filesystem::path& path) {
  rec.validate();
  if (rec.n_channels() > 0xFFFF) throw InvalidArgument("too many channels for the container format");

  std::vector<char> buf;
  buf.reserve(kHeaderBytes + rec.samples.size() * 4 + rec.events.size() * kEventBytes);
  buf.insert(buf.end(), kMagic.begin(), kMagic.end());
  put_le<std::uint16_t>(buf, kContainerVersion);
  put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(rec.n_channels()));
  put_le<std::uint64_t>(buf, rec.n_samples());
  put_le<double>(buf, rec.fs);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(rec.events.size()));
  for (double v : rec.samples.data()) put_le<float>(buf, static_cast<float>(v));
  for (const Event& e : rec.events) {
    put_le<std::uint64_t>(buf, e.onset);
    put_le<std::uint64_t>(buf, e.duration);
    put_le<std::uint16_t>(buf, e.label);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ContinuousRecording read_recording(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), buf.begin())) {
    throw BadMagicError(path.string() + ": not an SWPC container");
  }
  Reader r(buf, path);
  for (std::size_t i = 0; i < kMagic.size(); ++i) r.get<char>("magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kContainerVersion) {
    throw VersionMismatchError(path.string() + ": container version " + std::to_string(version) +
                               ", expected " + std::to_string(kContainerVersion));
  }
  const auto n_channels = r.get<std::uint16_t>("channel count");
  const auto n_samples = r.get<std::uint64_t>("sample count");
  const auto fs = r.get<double>("sampling rate");
  const auto n_events = r.get<std::uint32_t>("event count");

  const std::uint64_t n_values = static_cast<std::uint64_t>(n_channels) * n_samples;
  if (n_values * 4 > r.remaining()) throw TruncatedFileError(path.string() + ": truncated sample block");
  ContinuousRecording rec;
  rec.fs = fs;
  rec.samples = Matrix(n_channels, n_samples);
  for (double& v : rec.samples.data()) v = static_cast<double>(r.get<float>("samples"));
  if (static_cast<std::uint64_t>(n_events) * kEventBytes > r.remaining()) {
    throw TruncatedFileError(path.string() + ": truncated event table");
  }
  rec.events.reserve(n_events);
  for (std::uint32_t i = 0; i < n_events; ++i) {
    Event e;
    e.onset = r.get<std::uint64_t>("event onset");
    e.duration = r.get<std::uint64_t>("event duration");
    e.label = r.get<std::uint16_t>("event label");
    rec.events.push_back(e);
  }
  if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes after event table");
  rec.validate();
  return rec;
}

TrialSet extract_mi_trials(const ContinuousRecording& rec, std::size_t trial_len, std::size_t n_classes) {
  if (trial_len == 0) throw InvalidArgument("trial length must be positive");
  TrialSet set;
  set.kind = TrialKind::multiclass;
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    const Event& e = rec.events[i];
    if (e.duration < trial_len) {
      throw InvalidArgument("event " + std::to_string(i) + " lasts " + std::to_string(e.duration) +
                            " samples, shorter than the trial length " + std::to_string(trial_len));
    }
    if (e.label == kRestLabel) throw InvalidArgument("event " + std::to_string(i) + " carries the rest label");
    if (e.onset + trial_len > rec.n_samples()) throw InvalidArgument("event trial runs past the recording");
    Trial trial{rec.samples.slice_cols(e.onset, trial_len), e.label};
    if (!trial.samples.all_finite()) throw InvalidArgument("event " + std::to_string(i) + " has non-finite samples");
    set.trials.push_back(std::move(trial));
    max_label = std::max<std::size_t>(max_label, e.label);
  }
  set.class_names = default_class_names(std::max(n_classes, max_label));
  return set;
}

RestExtraction extract_adjacent_rest(const ContinuousRecording& rec, std::size_t trial_len) {
  if (trial_len == 0) throw InvalidArgument("trial length must be positive");
  RestExtraction result;
  result.set.kind = TrialKind::binary;
  result.set.class_names = {"rest", "mi"};
  std::vector<Trial> mi, rest;
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    const Event& e = rec.events[i];
    const std::uint64_t prev_end = i > 0 ? rec.events[i - 1].end() : 0;
    const bool clean_gap = e.onset >= trial_len && e.onset - trial_len >= prev_end;
    if (!clean_gap || e.duration < trial_len || e.onset + trial_len > rec.n_samples()) {
      ++result.skipped;
      continue;
    }
    Trial before{rec.samples.slice_cols(e.onset - trial_len, trial_len), kRestLabel};
    Trial during{rec.samples.slice_cols(e.onset, trial_len), 1};
    if (!before.samples.all_finite() || !during.samples.all_finite()) {
      throw InvalidArgument("event " + std::to_string(i) + " has non-finite samples");
    }
    rest.push_back(std::move(before));
    mi.push_back(std::move(during));
  }
  if (mi.empty()) {
    throw InvalidArgument("no event has a clean rest interval of " + std::to_string(trial_len) +
                          " samples before it");
  }
  for (Trial& t : mi) result.set.trials.push_back(std::move(t));
  for (Trial& t : rest) result.set.trials.push_back(std::move(t));
  return result;
}

}  // namespace swpc
