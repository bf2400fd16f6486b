#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dermalab/ingest.hpp"

namespace dermalab {

struct SynthSpec {
  double duration_s = 120.0;
  double sample_rate = 10.0;
  double tonic_level = 2.0;   // µS
  double tonic_drift = 0.0;   // µS per minute
  std::vector<double> scr_times;       // s
  std::vector<double> scr_amplitudes;  // µS, peak of each response
  double noise_std = 0.0;     // µS
  std::uint64_t seed = 0;
  std::int64_t start_ms = 0;
  double tau0 = 2.0;
  double tau1 = 0.7;

  /// Throws InvalidSpec.
  void validate() const;
};

struct GroundTruth {
  Eigen::VectorXd tonic;
  Eigen::VectorXd phasic;
  Eigen::VectorXd noise;
  std::vector<double> scr_times;
  std::vector<double> scr_amplitudes;
  std::string relation = "none";
};

/// Bateman response scaled to a unit peak; zero for t < 0.
double normalized_bateman(double t, double tau0 = 2.0, double tau1 = 0.7);

struct SynthEda {
  RawEdaTrace trace;
  GroundTruth truth;
};

/// samples = tonic + phasic + noise, with tonic = level + drift * t / 60 and
/// phasic = sum of amplitude * normalized_bateman(t - t_i).
SynthEda gen_eda(const SynthSpec& spec);

enum class Relation { Co2SuppressesFeature, IrRaisesFeature, None };

std::string_view to_string(Relation relation) noexcept;
/// Accepts the full names and the short forms co2, ir, none.
std::optional<Relation> parse_relation(std::string_view text) noexcept;

struct SessionSpec {
  int n_windows = 8;
  Relation relation = Relation::Co2SuppressesFeature;
  std::uint64_t seed = 0;
  double sample_rate = 10.0;
  double baseline_s = 120.0;
  double window_s = 120.0;
  double gap_s = 10.0;
  double env_rate = 0.5;       // Hz
  double noise_std = 0.005;    // µS
  double scr_rate = 4.0;       // responses per minute
  double carrier_amplitude = 0.1;  // µS of the fixed 0.03 Hz component
  std::int64_t start_ms = 1'700'000'000'000;
};

struct SessionWindowTruth {
  std::string event_id;
  EventLabel label = EventLabel::Task;
  EnvVector env = EnvVector::Zero();
  double inband_amplitude = 0.0;  // µS of the 0.125 Hz component
  int scr_count = 0;
};

struct SessionBundle {
  RawEdaTrace eda;
  EnvTrace env;
  EventTimeline events;
  std::vector<SamResponse> sam;
  std::vector<SelfReport> reports;
  std::vector<SessionWindowTruth> windows;
  std::string ground_truth_json;
};

/// A baseline followed by n_windows stimulus windows. The in-band (TVSymp)
/// amplitude of each window follows the chosen relation to the environment.
SessionBundle gen_session(const SessionSpec& spec);

/// Writes eda.csv, env.csv, events.csv, sam.csv, reports.csv and
/// ground_truth.json into `dir`, creating it if needed.
void write_session(const SessionBundle& bundle, const std::filesystem::path& dir);

inline constexpr std::array<const char*, 6> kSessionFiles = {
    "eda.csv", "env.csv", "events.csv", "sam.csv", "reports.csv", "ground_truth.json"};

}  // namespace dermalab
