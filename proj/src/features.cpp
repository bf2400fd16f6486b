#include "dermalab/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "dermalab/dsp.hpp"
#include "dermalab/io.hpp"

namespace dermalab {

void FeatureParams::validate() const {
  const double nyquist = spectral_rate / 2.0;
  auto band_ok = [&](double lo, double hi) { return lo >= 0.0 && lo < hi && hi < nyquist; };
  if (!band_ok(tvsymp_low, tvsymp_high) || !band_ok(edasymp_low, edasymp_high)) {
    throw Error(ErrorCode::InvalidArgument, "feature bands must satisfy 0 <= lo < hi < Nyquist");
  }
  if (!(psd_overlap_fraction >= 0.0 && psd_overlap_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "overlap fraction must be in [0, 1)");
  }
  if (psd_window_len < 2 || cdm_num_bands < 1 || !(cdm_bandwidth > 0.0) ||
      cdm_num_bands * cdm_bandwidth > nyquist + 1e-12 || cdm_filter_order % 2 != 0 ||
      !(scr_min_amplitude > 0.0) || scr_merge_s < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "invalid feature parameters");
  }
}

int FeatureParams::psd_overlap_samples() const {
  if (psd_overlap == PsdOverlap::Strict) {
    return std::max(1, static_cast<int>(std::lround(0.5 * spectral_rate)));
  }
  return static_cast<int>(std::lround(psd_overlap_fraction * psd_window_len));
}

std::vector<ScrEvent> detect_scrs(const Eigen::VectorXd& phasic, double sample_rate,
                                  const FeatureParams& params) {
  std::vector<ScrEvent> found;
  const Eigen::Index n = phasic.size();
  if (n < 3 || static_cast<double>(n) < 2.0 * sample_rate) return found;

  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    if (!(phasic[i] > phasic[i - 1] && phasic[i] >= phasic[i + 1])) continue;
    Eigen::Index trough = i;
    while (trough > 0 && phasic[trough - 1] < phasic[trough]) --trough;
    const double amp = phasic[i] - phasic[trough];
    if (amp >= params.scr_min_amplitude) {
      found.push_back({trough / sample_rate, i / sample_rate, amp});
    }
  }

  // Refractory merge: a peak within scr_merge_s of the previous kept peak
  // replaces it only when larger.
  std::vector<ScrEvent> merged;
  for (const auto& ev : found) {
    if (!merged.empty() && ev.peak_s - merged.back().peak_s < params.scr_merge_s) {
      if (ev.amplitude > merged.back().amplitude) merged.back() = ev;
      continue;
    }
    merged.push_back(ev);
  }
  std::sort(merged.begin(), merged.end(),
            [](const ScrEvent& a, const ScrEvent& b) { return a.onset_s < b.onset_s; });
  return merged;
}

double nsscr(const std::vector<ScrEvent>& events, double duration_s) {
  if (!(duration_s > 0.0)) throw Error(ErrorCode::ZeroDuration, "duration must be positive");
  return 60.0 * static_cast<double>(events.size()) / duration_s;
}

Eigen::Index cdm_min_length(const FeatureParams& params) {
  // One period of the demodulation lowpass cutoff, four times over.
  const double cutoff = params.cdm_bandwidth / 2.0;
  const auto settling = static_cast<Eigen::Index>(std::ceil(params.spectral_rate / cutoff));
  return 4 * settling;
}

CdmResult cdm_decompose(const Eigen::VectorXd& x, const FeatureParams& params) {
  params.validate();
  const Eigen::Index n = x.size();
  if (n < cdm_min_length(params)) {
    throw Error(ErrorCode::TooShort, "complex demodulation needs at least " +
                                         std::to_string(cdm_min_length(params)) + " samples");
  }
  const double fs = params.spectral_rate;
  const auto lowpass = design_butterworth(FilterKind::Lowpass, params.cdm_bandwidth / 2.0,
                                          params.cdm_filter_order, fs);
  CdmResult out;
  out.centers.resize(params.cdm_num_bands);
  out.amplitude.resize(n, params.cdm_num_bands);
  for (int b = 0; b < params.cdm_num_bands; ++b) {
    const double fc = (b + 1) * params.cdm_bandwidth;
    out.centers[b] = fc;
    Signal<std::complex<double>> z(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      z[t] = x[t] * std::polar(1.0, -2.0 * std::numbers::pi * fc * static_cast<double>(t) / fs);
    }
    const auto base = zero_phase_filter<std::complex<double>>(lowpass, z);
    out.amplitude.col(b) = 2.0 * base.cwiseAbs();
  }
  return out;
}

TvSymp tvsymp(const Eigen::VectorXd& x, const FeatureParams& params) {
  params.validate();
  if (x.size() < cdm_min_length(params)) {
    throw Error(ErrorCode::TooShort, "TVSymp needs at least " +
                                         std::to_string(cdm_min_length(params)) + " samples");
  }
  TvSymp out;
  const Eigen::ArrayXd centered = x.array() - x.mean();
  const double sd = std::sqrt(centered.square().mean());
  if (!(sd > 0.0)) {
    out.series = Eigen::VectorXd::Zero(x.size());
    return out;
  }
  const auto cdm = cdm_decompose((centered / sd).matrix(), params);
  out.series = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index b = 0; b < cdm.centers.size(); ++b) {
    if (cdm.centers[b] >= params.tvsymp_low && cdm.centers[b] <= params.tvsymp_high) {
      out.series += cdm.amplitude.col(b);
    }
  }
  out.window_mean = out.series.mean();
  return out;
}

Psd welch_psd(const Eigen::VectorXd& x, double sample_rate, int segment_len, int overlap) {
  if (x.size() < segment_len) {
    throw Error(ErrorCode::TooShort, "Welch estimate needs at least one full segment");
  }
  if (overlap < 0 || overlap >= segment_len) {
    throw Error(ErrorCode::InvalidArgument, "overlap must be in [0, segment length)");
  }
  const Eigen::Index len = segment_len;
  Eigen::VectorXd window(len);
  for (Eigen::Index i = 0; i < len; ++i) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len);
    window[i] = 0.42 - 0.5 * std::cos(phase) + 0.08 * std::cos(2.0 * phase);
  }
  const double scale = 1.0 / (sample_rate * window.squaredNorm());
  const Eigen::Index bins = len / 2 + 1;
  const Eigen::Index step = len - overlap;

  Psd psd;
  psd.resolution = sample_rate / static_cast<double>(len);
  psd.freq = Eigen::VectorXd::LinSpaced(bins, 0.0, psd.resolution * static_cast<double>(bins - 1));
  psd.density = Eigen::VectorXd::Zero(bins);

  Eigen::FFT<double> fft;
  std::vector<double> segment(static_cast<std::size_t>(len));
  std::vector<std::complex<double>> spectrum;
  for (Eigen::Index start = 0; start + len <= x.size(); start += step) {
    const double mean = x.segment(start, len).mean();
    for (Eigen::Index i = 0; i < len; ++i) {
      segment[static_cast<std::size_t>(i)] = (x[start + i] - mean) * window[i];
    }
    fft.fwd(spectrum, segment);
    for (Eigen::Index k = 0; k < bins; ++k) {
      double p = std::norm(spectrum[static_cast<std::size_t>(k)]) * scale;
      const bool edge = k == 0 || (len % 2 == 0 && k == bins - 1);
      if (!edge) p *= 2.0;
      psd.density[k] += p;
    }
    ++psd.segments;
  }
  psd.density /= static_cast<double>(psd.segments);
  return psd;
}

EdaSymp edasymp(const Eigen::VectorXd& x, const FeatureParams& params) {
  params.validate();
  const auto psd = welch_psd(x, params.spectral_rate, params.psd_window_len,
                             params.psd_overlap_samples());
  EdaSymp out;
  double total = 0.0;
  for (Eigen::Index k = 0; k < psd.freq.size(); ++k) {
    const double f = psd.freq[k];
    const double p = psd.density[k] * psd.resolution;
    if (f > 0.0 && f <= 1.0 + 1e-12) total += p;
    if (f >= params.edasymp_low - 1e-12 && f <= params.edasymp_high + 1e-12) out.band_power += p;
  }
  out.normalized = total > 0.0 ? std::clamp(out.band_power / total, 0.0, 1.0) : 0.0;
  return out;
}

WindowFeatureRow extract_window_features(const AlignedWindow& window,
                                         const Decomposition& decomposition,
                                         const FeatureParams& params) {
  params.validate();
  const double fs = window.eda.sample_rate;
  const double duration = window.eda.duration_s();
  if (duration < kMinFeatureWindowS - 1e-9) {
    throw Error(ErrorCode::TooShort, "window " + window.event.event_id + " lasts " +
                                         io::format_sig(duration, 4) + " s, need 64 s");
  }
  if (decomposition.phasic.size() != window.eda.samples.size()) {
    throw Error(ErrorCode::LengthMismatch, "decomposition does not match window length");
  }

  WindowFeatureRow row;
  row.window_id = window.event.event_id;
  row.label = window.event.label;
  row.env = window.env_mean;

  const auto scrs = detect_scrs(decomposition.phasic, fs, params);
  row.nsscr = nsscr(scrs, duration);

  Eigen::VectorXd slow = decimate(window.eda.samples, fs, params.spectral_rate);
  const auto highpass = design_butterworth(FilterKind::Highpass, params.detrend_cutoff,
                                           params.detrend_order, params.spectral_rate);
  slow = zero_phase_filter<double>(highpass, slow);
  row.tvsymp = tvsymp(slow, params).window_mean;
  const auto power = edasymp(slow, params);
  row.edasymp = power.band_power;
  row.edasymp_n = power.normalized;
  return row;
}

namespace {

constexpr std::string_view kFeatureHeader =
    "window_id,label,stress,valence,arousal,dominance,tvsymp,edasymp,edasymp_n,nsscr";

double field_real(std::string_view f) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc{} || ptr != f.data() + f.size()) {
    throw Error(ErrorCode::MalformedRow, "bad number '" + std::string(f) + "'");
  }
  return v;
}

int field_int(std::string_view f) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc{} || ptr != f.data() + f.size()) {
    throw Error(ErrorCode::MalformedRow, "bad integer '" + std::string(f) + "'");
  }
  return v;
}

}  // namespace

std::string format_features_csv(const std::vector<WindowFeatureRow>& rows) {
  std::string out(kFeatureHeader);
  for (auto name : kEnvChannelNames) {
    out += ',';
    out += name;
  }
  out += '\n';
  for (const auto& r : rows) {
    out += r.window_id + ',' + std::string(to_string(r.label)) + ',';
    out += r.stress ? std::string(to_string(*r.stress)) : std::string();
    if (r.sam) {
      out += ',' + std::to_string(r.sam->valence) + ',' + std::to_string(r.sam->arousal) + ',' +
             std::to_string(r.sam->dominance);
    } else {
      out += ",,,";
    }
    for (double v : {r.tvsymp, r.edasymp, r.edasymp_n, r.nsscr}) out += ',' + io::format_double(v);
    for (Eigen::Index c = 0; c < r.env.size(); ++c) out += ',' + io::format_double(r.env[c]);
    out += '\n';
  }
  return out;
}

std::vector<WindowFeatureRow> parse_features_csv(std::string_view text) {
  auto lines = io::split_lines(text);
  if (lines.empty()) throw Error(ErrorCode::EmptyFile, "features file has no header");
  const auto header = io::split_fields(lines[0]);
  const std::size_t arity = 10 + kEnvChannelCount;
  if (header.size() != arity || lines[0].substr(0, kFeatureHeader.size()) != kFeatureHeader) {
    throw Error(ErrorCode::MalformedRow, "unexpected features header");
  }
  std::vector<WindowFeatureRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_fields(lines[i]);
    if (f.size() != arity) {
      throw Error(ErrorCode::MalformedRow, "features line " + std::to_string(i + 1));
    }
    WindowFeatureRow r;
    r.window_id = std::string(f[0]);
    auto label = parse_event_label(f[1]);
    if (!label) throw Error(ErrorCode::MalformedRow, "unknown label " + std::string(f[1]));
    r.label = *label;
    if (!f[2].empty()) {
      if (f[2] == "high") r.stress = StressLabel::High;
      else if (f[2] == "low") r.stress = StressLabel::Low;
      else if (f[2] == "unlabeled") r.stress = StressLabel::Unlabeled;
      else throw Error(ErrorCode::MalformedRow, "unknown stress label " + std::string(f[2]));
    }
    if (!f[3].empty()) {
      r.sam = SamResponse{r.window_id, field_int(f[3]), field_int(f[4]), field_int(f[5])};
    }
    r.tvsymp = field_real(f[6]);
    r.edasymp = field_real(f[7]);
    r.edasymp_n = field_real(f[8]);
    r.nsscr = field_real(f[9]);
    for (std::size_t c = 0; c < kEnvChannelCount; ++c) {
      r.env[static_cast<Eigen::Index>(c)] = field_real(f[10 + c]);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace dermalab
