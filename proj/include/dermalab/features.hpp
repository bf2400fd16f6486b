#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dermalab/cvxeda.hpp"
#include "dermalab/ingest.hpp"

namespace dermalab {

struct ScrEvent {
  double onset_s = 0.0;
  double peak_s = 0.0;
  double amplitude = 0.0;  // trough-to-peak on the phasic signal
};

enum class PsdOverlap {
  Fraction,  // psd_overlap_fraction of the segment length
  Strict,    // half a second, i.e. one sample of a 2 Hz stream
};

struct FeatureParams {
  double scr_min_amplitude = 0.01;
  double scr_merge_s = 1.0;
  double tvsymp_low = 0.08;
  double tvsymp_high = 0.24;
  double edasymp_low = 0.045;
  double edasymp_high = 0.25;
  int psd_window_len = 128;
  double psd_overlap_fraction = 0.5;
  PsdOverlap psd_overlap = PsdOverlap::Fraction;
  int cdm_num_bands = 8;
  double cdm_bandwidth = 0.125;
  int cdm_filter_order = 4;
  double spectral_rate = 2.0;      // Hz of the stream used for TVSymp/EDASymp
  double detrend_cutoff = 0.01;    // highpass applied after downsampling
  int detrend_order = 8;

  void validate() const;
  /// Samples shared by consecutive Welch segments.
  int psd_overlap_samples() const;
};

/// Peaks of the phasic signal with a trough-to-peak rise of at least
/// scr_min_amplitude. Peaks closer than scr_merge_s keep the larger one.
std::vector<ScrEvent> detect_scrs(const Eigen::VectorXd& phasic, double sample_rate,
                                  const FeatureParams& params = {});

/// Responses per minute.
double nsscr(const std::vector<ScrEvent>& events, double duration_s);

struct CdmResult {
  Eigen::VectorXd centers;    // Hz, one per band
  Eigen::MatrixXd amplitude;  // samples x bands, instantaneous amplitude
};

/// Fixed-band complex demodulation: for centers k * bandwidth, k = 1..bands,
/// shift the band to DC, lowpass at bandwidth/2 (zero-phase Butterworth) and
/// take twice the modulus, which is the amplitude of a real tone.
CdmResult cdm_decompose(const Eigen::VectorXd& x, const FeatureParams& params = {});

/// Shortest input cdm_decompose accepts.
Eigen::Index cdm_min_length(const FeatureParams& params);

struct TvSymp {
  Eigen::VectorXd series;
  double window_mean = 0.0;
};

/// The input is scaled to unit variance, demodulated, and the amplitudes of
/// the bands centred inside [tvsymp_low, tvsymp_high] are summed per sample.
TvSymp tvsymp(const Eigen::VectorXd& x, const FeatureParams& params = {});

struct Psd {
  Eigen::VectorXd freq;
  Eigen::VectorXd density;  // one-sided, units^2 / Hz
  double resolution = 0.0;
  int segments = 0;
};

/// Welch estimate with periodic Blackman segments and mean removal.
Psd welch_psd(const Eigen::VectorXd& x, double sample_rate, int segment_len, int overlap);

struct EdaSymp {
  double band_power = 0.0;
  double normalized = 0.0;
};

/// Band power over [edasymp_low, edasymp_high] and its share of (0, 1] Hz.
EdaSymp edasymp(const Eigen::VectorXd& x, const FeatureParams& params = {});

struct WindowFeatureRow {
  std::string window_id;
  EventLabel label = EventLabel::Task;
  double tvsymp = 0.0;
  double edasymp = 0.0;
  double edasymp_n = 0.0;
  double nsscr = 0.0;
  EnvVector env = EnvVector::Zero();
  std::optional<StressLabel> stress;
  std::optional<SamResponse> sam;
};

inline constexpr double kMinFeatureWindowS = 64.0;

/// Runs SCR counting on the decomposition and the spectral chain
/// (downsample, detrend, TVSymp, EDASymp) on the window's signal.
WindowFeatureRow extract_window_features(const AlignedWindow& window,
                                         const Decomposition& decomposition,
                                         const FeatureParams& params = {});

/// `features.csv`: window_id,label,stress,valence,arousal,dominance,tvsymp,
/// edasymp,edasymp_n,nsscr followed by the eight environment channels.
std::string format_features_csv(const std::vector<WindowFeatureRow>& rows);
std::vector<WindowFeatureRow> parse_features_csv(std::string_view text);

}  // namespace dermalab
