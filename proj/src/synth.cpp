#include "dermalab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "dermalab/cvxeda.hpp"
#include "dermalab/features.hpp"
#include "dermalab/io.hpp"
#include "json.hpp"

namespace dermalab {

void SynthSpec::validate() const {
  if (!(duration_s > 0.0) || !(sample_rate > 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "duration and sample rate must be > 0");
  }
  if (scr_times.size() != scr_amplitudes.size()) {
    throw Error(ErrorCode::InvalidSpec, "scr_times and scr_amplitudes differ in length");
  }
  for (std::size_t i = 0; i < scr_times.size(); ++i) {
    if (!(scr_times[i] >= 0.0 && scr_times[i] <= duration_s)) {
      throw Error(ErrorCode::InvalidSpec, "SCR time " + io::format_sig(scr_times[i], 6) +
                                              " s outside the trace");
    }
    if (!(scr_amplitudes[i] > 0.0)) throw Error(ErrorCode::InvalidSpec, "SCR amplitude must be > 0");
  }
  if (!(noise_std >= 0.0)) throw Error(ErrorCode::InvalidSpec, "noise_std must be >= 0");
  if (!std::isfinite(tonic_level) || !std::isfinite(tonic_drift)) {
    throw Error(ErrorCode::InvalidSpec, "tonic parameters must be finite");
  }
  if (!(tau0 > tau1 && tau1 > 0.0)) throw Error(ErrorCode::InvalidSpec, "need tau0 > tau1 > 0");
}

double normalized_bateman(double t, double tau0, double tau1) {
  if (t < 0.0) return 0.0;
  const double tp = bateman_peak_time(tau0, tau1);
  const double peak = std::exp(-tp / tau0) - std::exp(-tp / tau1);
  return (std::exp(-t / tau0) - std::exp(-t / tau1)) / peak;
}

SynthEda gen_eda(const SynthSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(std::llround(spec.duration_s * spec.sample_rate));
  SynthEda out;
  auto& gt = out.truth;
  gt.tonic.resize(n);
  gt.phasic = Eigen::VectorXd::Zero(n);
  gt.noise = Eigen::VectorXd::Zero(n);
  gt.scr_times = spec.scr_times;
  gt.scr_amplitudes = spec.scr_amplitudes;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / spec.sample_rate;
    gt.tonic[i] = spec.tonic_level + spec.tonic_drift * t / 60.0;
    for (std::size_t k = 0; k < spec.scr_times.size(); ++k) {
      gt.phasic[i] += spec.scr_amplitudes[k] * normalized_bateman(t - spec.scr_times[k], spec.tau0, spec.tau1);
    }
    if (spec.noise_std > 0.0) gt.noise[i] = spec.noise_std * normal(rng);
  }
  out.trace.start_ms = spec.start_ms;
  out.trace.sample_rate = spec.sample_rate;
  out.trace.samples = gt.tonic + gt.phasic + gt.noise;
  return out;
}

std::string_view to_string(Relation relation) noexcept {
  switch (relation) {
    case Relation::Co2SuppressesFeature: return "co2_suppresses_feature";
    case Relation::IrRaisesFeature: return "ir_raises_feature";
    case Relation::None: return "none";
  }
  return "none";
}

std::optional<Relation> parse_relation(std::string_view text) noexcept {
  if (text == "co2" || text == "co2_suppresses_feature") return Relation::Co2SuppressesFeature;
  if (text == "ir" || text == "ir_raises_feature") return Relation::IrRaisesFeature;
  if (text == "none") return Relation::None;
  return std::nullopt;
}

namespace {

constexpr double kCarrierHz = 0.03;
constexpr double kInbandHz = 0.125;
constexpr double kMinInband = 0.02;
constexpr double kMaxInband = 0.25;
constexpr double kTaperS = 5.0;

struct Range {
  double lo, hi;
};

// Ordered as kEnvChannelNames.
constexpr std::array<Range, kEnvChannelCount> kEnvRanges = {{
    {35.0, 70.0},      // noise_db
    {0.0, 400.0},      // ir
    {5.0, 80.0},       // dust
    {400.0, 2000.0},   // co2_ppm
    {20.0, 35.0},      // temp_c
    {30.0, 70.0},      // rh_pct
    {1000.0, 1025.0},  // pressure
    {0.0, 1.0},        // wind
}};

constexpr std::array<EventLabel, 4> kStimulusCycle = {
    EventLabel::StimulusPristine, EventLabel::StimulusPolluted, EventLabel::StimulusGenfill,
    EventLabel::Prompting};

std::string window_id(int i) {
  std::string s = std::to_string(i + 1);
  if (s.size() < 2) s.insert(0, "0");
  return "w" + s;
}

double taper(double t, double span) {
  const double edge = std::min(t, span - t);
  if (edge <= 0.0) return 0.0;
  if (edge >= kTaperS) return 1.0;
  return 0.5 - 0.5 * std::cos(std::numbers::pi * edge / kTaperS);
}

}  // namespace

SessionBundle gen_session(const SessionSpec& spec) {
  if (spec.n_windows < 2) throw Error(ErrorCode::InvalidSpec, "a session needs at least two windows");
  if (!(spec.window_s >= kMinFeatureWindowS) || !(spec.baseline_s >= kMinFeatureWindowS)) {
    throw Error(ErrorCode::InvalidSpec, "windows must last at least 64 s");
  }
  if (!(spec.gap_s >= 0.0) || !(spec.sample_rate > 0.0) || !(spec.env_rate > 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "gap, sample rate and env rate must be positive");
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SessionBundle b;
  std::vector<Event> events;
  const auto ms = [&](double s) { return spec.start_ms + static_cast<std::int64_t>(std::llround(s * 1000.0)); };
  events.push_back({"baseline", ms(0.0), ms(spec.baseline_s), EventLabel::Baseline});
  double t = spec.baseline_s;
  std::vector<double> starts{0.0};
  for (int i = 0; i < spec.n_windows; ++i) {
    t += spec.gap_s;
    starts.push_back(t);
    events.push_back({window_id(i), ms(t), ms(t + spec.window_s),
                      kStimulusCycle[static_cast<std::size_t>(i) % kStimulusCycle.size()]});
    t += spec.window_s;
  }
  const double total_s = t + spec.gap_s;

  // Environment and planted in-band amplitude per event.
  std::vector<SessionWindowTruth> truth;
  for (std::size_t e = 0; e < events.size(); ++e) {
    SessionWindowTruth w;
    w.event_id = events[e].event_id;
    w.label = events[e].label;
    for (std::size_t c = 0; c < kEnvChannelCount; ++c) {
      w.env[static_cast<Eigen::Index>(c)] = kEnvRanges[c].lo + (kEnvRanges[c].hi - kEnvRanges[c].lo) * unit(rng);
    }
    double s = unit(rng);
    if (spec.relation == Relation::Co2SuppressesFeature) {
      s = 1.0 - (w.env[3] - kEnvRanges[3].lo) / (kEnvRanges[3].hi - kEnvRanges[3].lo);
    } else if (spec.relation == Relation::IrRaisesFeature) {
      s = (w.env[1] - kEnvRanges[1].lo) / (kEnvRanges[1].hi - kEnvRanges[1].lo);
    }
    w.inband_amplitude = (kMinInband + (kMaxInband - kMinInband) * s) * std::exp(0.05 * normal(rng));
    truth.push_back(w);
  }

  // SCR times with at least 3 s between responses.
  SynthSpec eda;
  eda.duration_s = total_s;
  eda.sample_rate = spec.sample_rate;
  eda.tonic_level = 2.0 + 0.5 * unit(rng);
  eda.tonic_drift = 0.05 * (2.0 * unit(rng) - 1.0);
  eda.noise_std = spec.noise_std;
  eda.seed = rng();
  eda.start_ms = spec.start_ms;
  for (std::size_t e = 0; e < events.size(); ++e) {
    const double span = events[e].duration_s();
    const auto expected = spec.scr_rate * span / 60.0;
    const int count = static_cast<int>(std::llround(expected * (0.5 + unit(rng))));
    std::vector<double> times;
    for (int tries = 0; static_cast<int>(times.size()) < count && tries < 1000; ++tries) {
      const double c = 2.0 + (span - 10.0) * unit(rng);
      if (std::all_of(times.begin(), times.end(), [&](double o) { return std::abs(o - c) >= 3.0; })) {
        times.push_back(c);
      }
    }
    std::sort(times.begin(), times.end());
    for (double c : times) {
      eda.scr_times.push_back(starts[e] + c);
      eda.scr_amplitudes.push_back(0.05 + 0.07 * unit(rng));
    }
    truth[e].scr_count = static_cast<int>(times.size());
  }
  auto generated = gen_eda(eda);
  b.eda = std::move(generated.trace);

  const double carrier_phase = 2.0 * std::numbers::pi * unit(rng);
  std::vector<double> phases;
  for (std::size_t e = 0; e < events.size(); ++e) phases.push_back(2.0 * std::numbers::pi * unit(rng));
  for (Eigen::Index i = 0; i < b.eda.samples.size(); ++i) {
    const double ti = static_cast<double>(i) / spec.sample_rate;
    double v = spec.carrier_amplitude * std::sin(2.0 * std::numbers::pi * kCarrierHz * ti + carrier_phase);
    for (std::size_t e = 0; e < events.size(); ++e) {
      const double local = ti - starts[e];
      const double span = events[e].duration_s();
      if (local < 0.0 || local > span) continue;
      v += truth[e].inband_amplitude * taper(local, span) *
           std::sin(2.0 * std::numbers::pi * kInbandHz * local + phases[e]);
    }
    b.eda.samples[i] += v;
  }

  // Environment stream: event values with small jitter, baseline values in gaps.
  const auto n_env = static_cast<Eigen::Index>(std::floor(total_s * spec.env_rate)) + 1;
  b.env.start_ms = spec.start_ms;
  b.env.sample_rate = spec.env_rate;
  b.env.channels.resize(n_env, kEnvChannelCount);
  for (Eigen::Index r = 0; r < n_env; ++r) {
    const double tr = static_cast<double>(r) / spec.env_rate;
    std::size_t owner = 0;
    for (std::size_t e = 0; e < events.size(); ++e) {
      if (tr >= starts[e] && tr < starts[e] + events[e].duration_s()) owner = e;
    }
    b.env.time_ms.push_back(ms(tr));
    for (std::size_t c = 0; c < kEnvChannelCount; ++c) {
      const double jitter = 0.005 * (kEnvRanges[c].hi - kEnvRanges[c].lo) * normal(rng);
      b.env.channels(r, static_cast<Eigen::Index>(c)) =
          std::max(0.0, truth[owner].env[static_cast<Eigen::Index>(c)] + jitter);
    }
  }

  // SAM and self-reports follow the planted arousal proxy.
  for (std::size_t e = 1; e < events.size(); ++e) {
    const double s = (truth[e].inband_amplitude - kMinInband) / (kMaxInband - kMinInband);
    SamResponse sam;
    sam.event_id = events[e].event_id;
    sam.arousal = s < 1.0 / 3.0 ? 3 : s < 2.0 / 3.0 ? 5 : 7;
    sam.valence = 10 - sam.arousal;
    sam.dominance = truth[e].scr_count >= std::llround(spec.scr_rate * spec.window_s / 60.0) ? 6 : 4;
    b.sam.push_back(sam);
    SelfReport rep;
    rep.window_id = events[e].event_id;
    rep.difficulty = sam.arousal == 7 ? 8 : sam.arousal == 5 ? 5 : 2;
    rep.stress = sam.arousal == 7 ? 6 : sam.arousal == 5 ? 3 : 2;
    b.reports.push_back(rep);
  }

  nlohmann::ordered_json j;
  j["format"] = "dermalab.ground_truth";
  j["version"] = 1;
  j["seed"] = spec.seed;
  j["relation"] = {{"name", to_string(spec.relation)},
                   {"feature", "tvsymp"},
                   {"channel", spec.relation == Relation::IrRaisesFeature ? "ir"
                               : spec.relation == Relation::None          ? ""
                                                                          : "co2_ppm"},
                   {"direction", spec.relation == Relation::IrRaisesFeature ? 1
                                 : spec.relation == Relation::None          ? 0
                                                                            : -1}};
  j["sample_rate"] = spec.sample_rate;
  j["noise_std"] = spec.noise_std;
  j["tonic_level"] = eda.tonic_level;
  j["tonic_drift"] = eda.tonic_drift;
  j["carrier_hz"] = kCarrierHz;
  j["carrier_amplitude"] = spec.carrier_amplitude;
  j["inband_hz"] = kInbandHz;
  auto& jw = j["windows"] = nlohmann::ordered_json::array();
  for (const auto& w : truth) {
    nlohmann::ordered_json env;
    for (std::size_t c = 0; c < kEnvChannelCount; ++c) {
      env[std::string(kEnvChannelNames[c])] = w.env[static_cast<Eigen::Index>(c)];
    }
    jw.push_back({{"event_id", w.event_id},
                  {"label", to_string(w.label)},
                  {"inband_amplitude", w.inband_amplitude},
                  {"scr_count", w.scr_count},
                  {"env", env}});
  }
  j["scr_times_s"] = eda.scr_times;
  j["scr_amplitudes"] = eda.scr_amplitudes;
  b.ground_truth_json = j.dump(2) + "\n";

  b.events = EventTimeline(std::move(events));
  b.windows = std::move(truth);
  return b;
}

void write_session(const SessionBundle& bundle, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  io::write_file_atomic(dir / "eda.csv", format_eda_csv(bundle.eda));
  io::write_file_atomic(dir / "env.csv", format_env_csv(bundle.env));
  io::write_file_atomic(dir / "events.csv", format_events_csv(bundle.events));
  io::write_file_atomic(dir / "sam.csv", format_sam_csv(bundle.sam));
  io::write_file_atomic(dir / "reports.csv", format_reports_csv(bundle.reports));
  io::write_file_atomic(dir / "ground_truth.json", bundle.ground_truth_json);
}

}  // namespace dermalab
