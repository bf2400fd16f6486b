#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dermalab/error.hpp"

namespace dermalab {

inline constexpr std::size_t kEnvChannelCount = 8;

/// Column names of env.csv, in file order.
inline constexpr std::array<std::string_view, kEnvChannelCount> kEnvChannelNames = {
    "noise_db", "ir", "dust", "co2_ppm", "temp_c", "rh_pct", "pressure", "wind"};

using EnvVector = Eigen::Matrix<double, kEnvChannelCount, 1>;

/// Skin conductance samples in microsiemens, uniformly sampled from start_ms.
struct RawEdaTrace {
  std::int64_t start_ms = 0;
  double sample_rate = 0.0;
  Eigen::VectorXd samples;

  double duration_s() const { return samples.size() / sample_rate; }
  double time_ms(Eigen::Index i) const { return start_ms + 1000.0 * i / sample_rate; }
};

struct TimeGap {
  std::int64_t from_ms = 0;
  std::int64_t to_ms = 0;
  double seconds() const { return (to_ms - from_ms) / 1000.0; }
};

struct EnvTrace {
  std::int64_t start_ms = 0;
  double sample_rate = 0.0;
  std::vector<std::int64_t> time_ms;
  /// One column per channel, ordered as kEnvChannelNames.
  Eigen::Matrix<double, Eigen::Dynamic, kEnvChannelCount> channels;
  /// Consecutive samples more than five seconds apart.
  std::vector<TimeGap> gaps;

  Eigen::Index size() const { return channels.rows(); }
};

enum class EventLabel {
  Baseline,
  Task,
  Survey,
  StimulusPristine,
  StimulusPolluted,
  StimulusGenfill,
  Prompting,
};

std::string_view to_string(EventLabel label) noexcept;
std::optional<EventLabel> parse_event_label(std::string_view text) noexcept;

struct Event {
  std::string event_id;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  EventLabel label = EventLabel::Task;

  double duration_s() const { return (end_ms - start_ms) / 1000.0; }
};

/// Sorted, non-overlapping events with unique ids.
class EventTimeline {
 public:
  EventTimeline() = default;
  /// Sorts by start time and validates; throws InvalidSpec on overlap,
  /// duplicate ids, or empty spans.
  explicit EventTimeline(std::vector<Event> events);

  const std::vector<Event>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }

 private:
  std::vector<Event> events_;
};

struct SamResponse {
  std::string event_id;
  int valence = 5;
  int arousal = 5;
  int dominance = 5;
};

struct SelfReport {
  std::string window_id;
  int difficulty = 1;
  int stress = 1;
};

enum class StressLabel { High, Low, Unlabeled };

std::string_view to_string(StressLabel label) noexcept;

/// High when difficulty > 6 and stress > 4; low when both are below 3.
StressLabel label_stress(const SelfReport& report) noexcept;

struct AlignedWindow {
  Event event;
  RawEdaTrace eda;
  /// Per-channel mean of the environment samples inside the event span.
  EnvVector env_mean;
  /// First sample index of `eda` inside the parent trace.
  Eigen::Index first_sample = 0;
};

RawEdaTrace parse_eda_csv(const std::filesystem::path& path);
EnvTrace parse_env_csv(const std::filesystem::path& path);
EventTimeline parse_events_csv(const std::filesystem::path& path);
std::vector<SamResponse> parse_sam_csv(const std::filesystem::path& path);
std::vector<SelfReport> parse_reports_csv(const std::filesystem::path& path);

// String-level parsers; the path overloads read the file and forward here.
RawEdaTrace parse_eda_text(std::string_view text);
EnvTrace parse_env_text(std::string_view text);
EventTimeline parse_events_text(std::string_view text);
std::vector<SamResponse> parse_sam_text(std::string_view text);
std::vector<SelfReport> parse_reports_text(std::string_view text);

std::string format_eda_csv(const RawEdaTrace& trace);
std::string format_env_csv(const EnvTrace& trace);
std::string format_events_csv(const EventTimeline& timeline);
std::string format_sam_csv(const std::vector<SamResponse>& responses);
std::string format_reports_csv(const std::vector<SelfReport>& reports);

/// Cuts both traces at every event. Throws PartialCoverage when an event
/// leaves either trace, EmptyWindow when fewer than two EDA samples remain.
std::vector<AlignedWindow> window_align(const RawEdaTrace& eda, const EnvTrace& env,
                                        const EventTimeline& timeline);

}  // namespace dermalab
