#include "dermalab/dsp.hpp"

#include <cmath>
#include <numbers>

#include "json.hpp"

namespace dermalab {

bool Biquad::stable() const {
  // Jury conditions for z^2 + a1 z + a2.
  return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

std::complex<double> Biquad::response(double omega) const {
  const std::complex<double> z1 = std::polar(1.0, -omega);
  const std::complex<double> z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

double FilterSpec::gain(double freq) const {
  const double omega = 2.0 * std::numbers::pi * freq / sample_rate;
  double g = 1.0;
  for (const auto& s : sections) g *= std::abs(s.response(omega));
  return g;
}

double FilterSpec::gain_db(double freq) const { return 20.0 * std::log10(gain(freq)); }

FilterSpec design_butterworth(FilterKind kind, double cutoff, int order, double sample_rate) {
  if (!(sample_rate > 0.0) || !(cutoff > 0.0) || !(cutoff < sample_rate / 2.0)) {
    throw Error(ErrorCode::InvalidCutoff, "cutoff must lie in (0, fs/2)");
  }
  if (order <= 0 || order % 2 != 0) {
    throw Error(ErrorCode::OddOrder, "order must be a positive even integer");
  }

  FilterSpec spec{kind, cutoff, order, sample_rate, {}};
  // Bilinear transform s/wc = c (1 - z^-1) / (1 + z^-1) with pre-warped cutoff.
  const double c = 1.0 / std::tan(std::numbers::pi * cutoff / sample_rate);
  const double c2 = c * c;
  for (int k = 0; k < order / 2; ++k) {
    // Analog pole pair at angle theta from the negative real axis: s^2 + a s + 1.
    const double theta = std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order);
    const double a = 2.0 * std::sin(theta);
    const double d0 = c2 + a * c + 1.0;
    Biquad q;
    q.a1 = (2.0 - 2.0 * c2) / d0;
    q.a2 = (c2 - a * c + 1.0) / d0;
    if (kind == FilterKind::Lowpass) {
      q.b0 = 1.0 / d0;
      q.b1 = 2.0 / d0;
      q.b2 = 1.0 / d0;
    } else {
      q.b0 = c2 / d0;
      q.b1 = -2.0 * c2 / d0;
      q.b2 = c2 / d0;
    }
    spec.sections.push_back(q);
  }
  return spec;
}

double butterworth_reference_gain(FilterKind kind, double cutoff, int order, double sample_rate,
                                  double freq) {
  const double wc = std::tan(std::numbers::pi * cutoff / sample_rate);
  const double w = std::tan(std::numbers::pi * freq / sample_rate);
  const double ratio = kind == FilterKind::Lowpass ? w / wc : wc / w;
  return 1.0 / std::sqrt(1.0 + std::pow(ratio, 2.0 * order));
}

std::string to_json(const FilterSpec& spec) {
  nlohmann::ordered_json j;
  j["kind"] = spec.kind == FilterKind::Lowpass ? "lowpass" : "highpass";
  j["cutoff_hz"] = spec.cutoff;
  j["order"] = spec.order;
  j["sample_rate_hz"] = spec.sample_rate;
  auto& secs = j["sections"] = nlohmann::ordered_json::array();
  for (const auto& s : spec.sections) {
    secs.push_back({{"b", {s.b0, s.b1, s.b2}}, {"a", {1.0, s.a1, s.a2}}});
  }
  return j.dump(2);
}

CleanResult zscore_clean(const Eigen::VectorXd& x, const CleanParams& params) {
  if (!(params.z_threshold > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "z_threshold must be positive");
  }
  const Eigen::Index n = x.size();
  if (n < 3) throw Error(ErrorCode::TooShort, "z-score cleaning needs at least 3 samples");
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteInput, "input contains NaN or Inf");

  const double mean = x.mean();
  const double sd = std::sqrt((x.array() - mean).square().mean());
  CleanResult result{x, {}};
  if (sd == 0.0) return result;

  std::vector<bool> flagged(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(x[i] - mean) / sd > params.z_threshold) {
      flagged[static_cast<std::size_t>(i)] = true;
      result.outliers.push_back(i);
    }
  }
  if (result.outliers.empty()) return result;

  if (params.replacement == Replacement::Drop) {
    Eigen::VectorXd kept(n - static_cast<Eigen::Index>(result.outliers.size()));
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!flagged[static_cast<std::size_t>(i)]) kept[k++] = x[i];
    }
    result.values = std::move(kept);
    return result;
  }

  // Linear interpolation across each flagged run; edges copy the nearest kept value.
  Eigen::Index prev = -1;
  for (Eigen::Index i = 0; i <= n; ++i) {
    if (i < n && flagged[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index j = prev + 1; j < i; ++j) {
      if (prev < 0 && i < n) {
        result.values[j] = x[i];
      } else if (i >= n && prev >= 0) {
        result.values[j] = x[prev];
      } else if (prev >= 0 && i < n) {
        const double w = static_cast<double>(j - prev) / static_cast<double>(i - prev);
        result.values[j] = (1.0 - w) * x[prev] + w * x[i];
      }
    }
    prev = i;
  }
  return result;
}

Eigen::VectorXd decimate(const Eigen::VectorXd& x, double from_rate, double to_rate) {
  if (!(from_rate > 0.0) || !(to_rate > 0.0) || to_rate > from_rate) {
    throw Error(ErrorCode::RateMismatch, "target rate must be positive and below the source rate");
  }
  const double ratio = from_rate / to_rate;
  const auto factor = static_cast<Eigen::Index>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(factor)) > 1e-9 * ratio) {
    throw Error(ErrorCode::RateMismatch, "source rate is not an integer multiple of target rate");
  }
  if (factor == 1) return x;

  const auto spec =
      design_butterworth(FilterKind::Lowpass, 0.8 * to_rate / 2.0, kDecimateFilterOrder, from_rate);
  // The filter's own 3*order padding leaves an edge transient near -55 dB
  // for tones close to Nyquist; ten more seconds of odd reflection bury it.
  const Eigen::Index n = x.size();
  const Eigen::Index extra =
      n < 2 ? 0 : std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(std::ceil(10.0 * from_rate)));
  Eigen::VectorXd ext(n + 2 * extra);
  for (Eigen::Index i = 0; i < extra; ++i) {
    ext[i] = 2.0 * x[0] - x[extra - i];
    ext[n + extra + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  ext.segment(extra, n) = x;
  const Eigen::VectorXd smooth = zero_phase_filter<double>(spec, ext).segment(extra, n);
  const Eigen::Index m = (n + factor - 1) / factor;
  Eigen::VectorXd out(m);
  for (Eigen::Index i = 0; i < m; ++i) out[i] = smooth[i * factor];
  return out;
}

Eigen::VectorXd standardize(const Eigen::VectorXd& x) {
  if (x.size() == 0) throw Error(ErrorCode::DegenerateInput, "empty input");
  const double mean = x.mean();
  const Eigen::ArrayXd centered = x.array() - mean;
  const double sd = std::sqrt(centered.square().mean());
  if (!(sd > 0.0) || !std::isfinite(sd)) {
    throw Error(ErrorCode::DegenerateInput, "standard deviation is zero");
  }
  Eigen::VectorXd out = (centered / sd).matrix();
  // A second centering pass removes the rounding left by the first.
  out.array() -= out.mean();
  return out;
}

}  // namespace dermalab
