#include "dermalab/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

#include "dermalab/io.hpp"

namespace dermalab {
namespace {

constexpr std::int64_t kEnvGapMs = 5000;

double parse_real(std::string_view field, std::size_t line_no) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(value)) {
    throw Error(ErrorCode::MalformedRow,
                "line " + std::to_string(line_no) + ": bad number '" + std::string(field) + "'");
  }
  return value;
}

std::int64_t parse_int(std::string_view field, std::size_t line_no) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::MalformedRow,
                "line " + std::to_string(line_no) + ": bad integer '" + std::string(field) + "'");
  }
  return value;
}

int parse_rating(std::string_view field, std::size_t line_no, int lo, int hi) {
  auto v = parse_int(field, line_no);
  if (v < lo || v > hi) {
    throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": rating " +
                                             std::to_string(v) + " outside [" +
                                             std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return static_cast<int>(v);
}

void expect_header(std::string_view got, std::string_view want) {
  if (got != want) {
    throw Error(ErrorCode::MalformedRow,
                "expected header '" + std::string(want) + "', got '" + std::string(got) + "'");
  }
}

std::vector<std::string_view> row_fields(std::string_view line, std::size_t arity,
                                         std::size_t line_no) {
  auto fields = io::split_fields(line);
  if (fields.size() != arity) {
    throw Error(ErrorCode::MalformedRow, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(arity) + " fields, got " +
                                             std::to_string(fields.size()));
  }
  return fields;
}

/// Median of the positive inter-sample gaps, in milliseconds.
double median_gap_ms(const std::vector<std::int64_t>& t) {
  std::vector<std::int64_t> gaps;
  gaps.reserve(t.size());
  for (std::size_t i = 1; i < t.size(); ++i) gaps.push_back(t[i] - t[i - 1]);
  auto mid = gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2);
  std::nth_element(gaps.begin(), mid, gaps.end());
  double median = static_cast<double>(*mid);
  if (gaps.size() % 2 == 0) {
    auto lower = *std::max_element(gaps.begin(), mid);
    median = 0.5 * (median + static_cast<double>(lower));
  }
  if (median <= 0.0) throw Error(ErrorCode::NonMonotonicTime, "median sample gap is zero");
  return median;
}

void check_time_order(const std::vector<std::int64_t>& t) {
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] < t[i - 1]) {
      throw Error(ErrorCode::NonMonotonicTime,
                  "timestamp " + std::to_string(t[i]) + " precedes " + std::to_string(t[i - 1]));
    }
  }
}

std::string join_header(std::string_view first) {
  std::string h(first);
  for (auto name : kEnvChannelNames) {
    h += ',';
    h += name;
  }
  return h;
}

}  // namespace

std::string_view to_string(EventLabel label) noexcept {
  switch (label) {
    case EventLabel::Baseline: return "baseline";
    case EventLabel::Task: return "task";
    case EventLabel::Survey: return "survey";
    case EventLabel::StimulusPristine: return "stimulus_pristine";
    case EventLabel::StimulusPolluted: return "stimulus_polluted";
    case EventLabel::StimulusGenfill: return "stimulus_genfill";
    case EventLabel::Prompting: return "prompting";
  }
  return "task";
}

std::optional<EventLabel> parse_event_label(std::string_view text) noexcept {
  for (auto label : {EventLabel::Baseline, EventLabel::Task, EventLabel::Survey,
                     EventLabel::StimulusPristine, EventLabel::StimulusPolluted,
                     EventLabel::StimulusGenfill, EventLabel::Prompting}) {
    if (to_string(label) == text) return label;
  }
  return std::nullopt;
}

std::string_view to_string(StressLabel label) noexcept {
  switch (label) {
    case StressLabel::High: return "high";
    case StressLabel::Low: return "low";
    case StressLabel::Unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

StressLabel label_stress(const SelfReport& report) noexcept {
  if (report.difficulty > 6 && report.stress > 4) return StressLabel::High;
  if (report.difficulty < 3 && report.stress < 3) return StressLabel::Low;
  return StressLabel::Unlabeled;
}

EventTimeline::EventTimeline(std::vector<Event> events) : events_(std::move(events)) {
  std::unordered_set<std::string> ids;
  for (const auto& e : events_) {
    if (e.end_ms <= e.start_ms) {
      throw Error(ErrorCode::InvalidSpec, "event " + e.event_id + " ends before it starts");
    }
    if (!ids.insert(e.event_id).second) {
      throw Error(ErrorCode::InvalidSpec, "duplicate event id " + e.event_id);
    }
  }
  std::stable_sort(events_.begin(), events_.end(),
                   [](const Event& a, const Event& b) { return a.start_ms < b.start_ms; });
  for (std::size_t i = 1; i < events_.size(); ++i) {
    if (events_[i].start_ms < events_[i - 1].end_ms) {
      throw Error(ErrorCode::InvalidSpec,
                  "events " + events_[i - 1].event_id + " and " + events_[i].event_id + " overlap");
    }
  }
}

RawEdaTrace parse_eda_text(std::string_view text) {
  auto lines = io::split_lines(text);
  if (lines.empty()) throw Error(ErrorCode::EmptyFile, "no header");
  expect_header(lines[0], "unix_ms,eda_us");
  if (lines.size() < 2) throw Error(ErrorCode::EmptyFile, "no data rows");

  std::vector<std::int64_t> t;
  std::vector<double> v;
  t.reserve(lines.size() - 1);
  v.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = row_fields(lines[i], 2, i + 1);
    t.push_back(parse_int(f[0], i + 1));
    double x = parse_real(f[1], i + 1);
    if (x < 0.0) {
      throw Error(ErrorCode::MalformedRow,
                  "line " + std::to_string(i + 1) + ": negative conductance");
    }
    v.push_back(x);
  }
  check_time_order(t);
  if (t.size() < 2) throw Error(ErrorCode::EmptyFile, "need at least two rows to infer a rate");

  RawEdaTrace trace;
  trace.start_ms = t.front();
  trace.sample_rate = 1000.0 / median_gap_ms(t);
  trace.samples = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  return trace;
}

EnvTrace parse_env_text(std::string_view text) {
  auto lines = io::split_lines(text);
  if (lines.empty()) throw Error(ErrorCode::EmptyFile, "no header");

  // Columns may appear in any order as long as all are present.
  auto header = io::split_fields(lines[0]);
  if (header.empty() || header[0] != "unix_ms") {
    throw Error(ErrorCode::MalformedRow, "first column must be unix_ms");
  }
  std::array<std::size_t, kEnvChannelCount> column{};
  for (std::size_t c = 0; c < kEnvChannelCount; ++c) {
    auto it = std::find(header.begin(), header.end(), kEnvChannelNames[c]);
    if (it == header.end()) {
      throw Error(ErrorCode::MissingChannel, std::string(kEnvChannelNames[c]));
    }
    column[c] = static_cast<std::size_t>(it - header.begin());
  }
  if (lines.size() < 2) throw Error(ErrorCode::EmptyFile, "no data rows");

  const auto rows = static_cast<Eigen::Index>(lines.size() - 1);
  EnvTrace trace;
  trace.channels.resize(rows, kEnvChannelCount);
  trace.time_ms.reserve(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto line_no = static_cast<std::size_t>(r) + 2;
    auto f = row_fields(lines[static_cast<std::size_t>(r) + 1], header.size(), line_no);
    trace.time_ms.push_back(parse_int(f[0], line_no));
    for (std::size_t c = 0; c < kEnvChannelCount; ++c) {
      trace.channels(r, static_cast<Eigen::Index>(c)) = parse_real(f[column[c]], line_no);
    }
  }
  check_time_order(trace.time_ms);
  trace.start_ms = trace.time_ms.front();
  trace.sample_rate = trace.time_ms.size() >= 2 ? 1000.0 / median_gap_ms(trace.time_ms) : 1.0;
  for (std::size_t i = 1; i < trace.time_ms.size(); ++i) {
    if (trace.time_ms[i] - trace.time_ms[i - 1] > kEnvGapMs) {
      trace.gaps.push_back({trace.time_ms[i - 1], trace.time_ms[i]});
    }
  }
  return trace;
}

EventTimeline parse_events_text(std::string_view text) {
  auto lines = io::split_lines(text);
  if (lines.empty()) throw Error(ErrorCode::EmptyFile, "no header");
  expect_header(lines[0], "event_id,start_ms,end_ms,label");
  std::vector<Event> events;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = row_fields(lines[i], 4, i + 1);
    Event e;
    e.event_id = std::string(f[0]);
    e.start_ms = parse_int(f[1], i + 1);
    e.end_ms = parse_int(f[2], i + 1);
    auto label = parse_event_label(f[3]);
    if (!label) {
      throw Error(ErrorCode::MalformedRow,
                  "line " + std::to_string(i + 1) + ": unknown label '" + std::string(f[3]) + "'");
    }
    e.label = *label;
    events.push_back(std::move(e));
  }
  if (events.empty()) throw Error(ErrorCode::EmptyFile, "no events");
  try {
    return EventTimeline(std::move(events));
  } catch (const Error& err) {
    throw Error(ErrorCode::MalformedRow, err.what());
  }
}

std::vector<SamResponse> parse_sam_text(std::string_view text) {
  auto lines = io::split_lines(text);
  if (lines.empty()) throw Error(ErrorCode::EmptyFile, "no header");
  expect_header(lines[0], "event_id,valence,arousal,dominance");
  std::vector<SamResponse> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = row_fields(lines[i], 4, i + 1);
    out.push_back({std::string(f[0]), parse_rating(f[1], i + 1, 1, 9),
                   parse_rating(f[2], i + 1, 1, 9), parse_rating(f[3], i + 1, 1, 9)});
  }
  return out;
}

std::vector<SelfReport> parse_reports_text(std::string_view text) {
  auto lines = io::split_lines(text);
  if (lines.empty()) throw Error(ErrorCode::EmptyFile, "no header");
  expect_header(lines[0], "window_id,difficulty,stress");
  std::vector<SelfReport> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = row_fields(lines[i], 3, i + 1);
    out.push_back({std::string(f[0]), parse_rating(f[1], i + 1, 1, 10),
                   parse_rating(f[2], i + 1, 1, 7)});
  }
  return out;
}

RawEdaTrace parse_eda_csv(const std::filesystem::path& path) {
  return parse_eda_text(io::read_file(path));
}
EnvTrace parse_env_csv(const std::filesystem::path& path) {
  return parse_env_text(io::read_file(path));
}
EventTimeline parse_events_csv(const std::filesystem::path& path) {
  return parse_events_text(io::read_file(path));
}
std::vector<SamResponse> parse_sam_csv(const std::filesystem::path& path) {
  return parse_sam_text(io::read_file(path));
}
std::vector<SelfReport> parse_reports_csv(const std::filesystem::path& path) {
  return parse_reports_text(io::read_file(path));
}

std::string format_eda_csv(const RawEdaTrace& trace) {
  std::string out = "unix_ms,eda_us\n";
  for (Eigen::Index i = 0; i < trace.samples.size(); ++i) {
    out += std::to_string(static_cast<std::int64_t>(std::llround(trace.time_ms(i))));
    out += ',';
    out += io::format_double(trace.samples[i]);
    out += '\n';
  }
  return out;
}

std::string format_env_csv(const EnvTrace& trace) {
  std::string out = join_header("unix_ms") + '\n';
  for (Eigen::Index r = 0; r < trace.size(); ++r) {
    out += std::to_string(trace.time_ms[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(kEnvChannelCount); ++c) {
      out += ',';
      out += io::format_double(trace.channels(r, c));
    }
    out += '\n';
  }
  return out;
}

std::string format_events_csv(const EventTimeline& timeline) {
  std::string out = "event_id,start_ms,end_ms,label\n";
  for (const auto& e : timeline.events()) {
    out += e.event_id + ',' + std::to_string(e.start_ms) + ',' + std::to_string(e.end_ms) + ',' +
           std::string(to_string(e.label)) + '\n';
  }
  return out;
}

std::string format_sam_csv(const std::vector<SamResponse>& responses) {
  std::string out = "event_id,valence,arousal,dominance\n";
  for (const auto& s : responses) {
    out += s.event_id + ',' + std::to_string(s.valence) + ',' + std::to_string(s.arousal) + ',' +
           std::to_string(s.dominance) + '\n';
  }
  return out;
}

std::string format_reports_csv(const std::vector<SelfReport>& reports) {
  std::string out = "window_id,difficulty,stress\n";
  for (const auto& r : reports) {
    out += r.window_id + ',' + std::to_string(r.difficulty) + ',' + std::to_string(r.stress) + '\n';
  }
  return out;
}

std::vector<AlignedWindow> window_align(const RawEdaTrace& eda, const EnvTrace& env,
                                        const EventTimeline& timeline) {
  const double eda_step_ms = 1000.0 / eda.sample_rate;
  const double eda_end_ms = eda.start_ms + eda.samples.size() * eda_step_ms;
  const double env_end_ms =
      env.time_ms.empty() ? env.start_ms : env.time_ms.back() + 1000.0 / env.sample_rate;

  std::vector<AlignedWindow> windows;
  windows.reserve(timeline.size());
  for (const auto& event : timeline.events()) {
    if (event.start_ms < eda.start_ms || event.end_ms > eda_end_ms + 1e-6 ||
        event.start_ms < env.start_ms || event.end_ms > env_end_ms + 1e-6) {
      throw Error(ErrorCode::PartialCoverage,
                  "event " + event.event_id + " is not covered by both traces");
    }
    // Sample i sits at start + i*step; keep those with time in [start, end).
    auto first = static_cast<Eigen::Index>(
        std::ceil((event.start_ms - eda.start_ms) / eda_step_ms - 1e-9));
    auto last = static_cast<Eigen::Index>(
        std::ceil((event.end_ms - eda.start_ms) / eda_step_ms - 1e-9));
    last = std::min<Eigen::Index>(last, eda.samples.size());
    if (last - first < 2) {
      throw Error(ErrorCode::EmptyWindow, "event " + event.event_id + " holds fewer than 2 samples");
    }

    EnvVector sum = EnvVector::Zero();
    Eigen::Index count = 0;
    for (Eigen::Index r = 0; r < env.size(); ++r) {
      auto t = env.time_ms[static_cast<std::size_t>(r)];
      if (t >= event.start_ms && t < event.end_ms) {
        sum += env.channels.row(r).transpose();
        ++count;
      }
    }
    if (count == 0) {
      throw Error(ErrorCode::PartialCoverage,
                  "event " + event.event_id + " contains no environment samples");
    }

    AlignedWindow w;
    w.event = event;
    w.first_sample = first;
    w.eda.sample_rate = eda.sample_rate;
    w.eda.start_ms = static_cast<std::int64_t>(std::llround(eda.time_ms(first)));
    w.eda.samples = eda.samples.segment(first, last - first);
    w.env_mean = sum / static_cast<double>(count);
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace dermalab
