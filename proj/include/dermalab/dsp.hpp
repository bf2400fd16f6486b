#pragma once

#include <array>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dermalab/error.hpp"

namespace dermalab {

template <typename Scalar>
using Signal = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  /// Both poles strictly inside the unit circle.
  bool stable() const;
  std::complex<double> response(double omega) const;
  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

enum class FilterKind { Lowpass, Highpass };

struct FilterSpec {
  FilterKind kind = FilterKind::Lowpass;
  double cutoff = 0.0;
  int order = 0;
  double sample_rate = 0.0;
  std::vector<Biquad> sections;

  /// Magnitude of the cascaded response at `freq` Hz.
  double gain(double freq) const;
  double gain_db(double freq) const;
};

/// Butterworth prototype mapped through the bilinear transform (with
/// cutoff pre-warping) and emitted pole pair by pole pair, so high orders
/// never pass through a direct-form polynomial.
FilterSpec design_butterworth(FilterKind kind, double cutoff, int order, double sample_rate);

/// Analog Butterworth magnitude after frequency pre-warping; the digital
/// cascade should match this exactly up to rounding.
double butterworth_reference_gain(FilterKind kind, double cutoff, int order, double sample_rate,
                                  double freq);

std::string to_json(const FilterSpec& spec);

namespace detail {

/// Direct form II transposed cascade, starting from the supplied states.
template <typename Scalar>
void sos_run(const std::vector<Biquad>& sections, std::vector<std::array<Scalar, 2>>& state,
             Eigen::Ref<Signal<Scalar>> x) {
  for (std::size_t s = 0; s < sections.size(); ++s) {
    const auto& q = sections[s];
    Scalar z1 = state[s][0];
    Scalar z2 = state[s][1];
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const Scalar in = x[i];
      const Scalar out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      x[i] = out;
    }
    state[s] = {z1, z2};
  }
}

/// States that put every section at steady state for a constant input `level`.
template <typename Scalar>
std::vector<std::array<Scalar, 2>> steady_state(const std::vector<Biquad>& sections,
                                                Scalar level) {
  std::vector<std::array<Scalar, 2>> state(sections.size());
  Scalar u = level;
  for (std::size_t s = 0; s < sections.size(); ++s) {
    const auto& q = sections[s];
    const Scalar g = static_cast<Scalar>(q.dc_gain());
    const Scalar y = g * u;
    state[s] = {static_cast<Scalar>(y - q.b0 * u), static_cast<Scalar>(q.b2 * u - q.a2 * y)};
    u = y;
  }
  return state;
}

}  // namespace detail

/// Forward-backward filtering with odd-reflection padding of 3*order
/// samples (capped at n-1) and steady-state initial conditions, so a
/// constant input passes a lowpass untouched.
template <typename Scalar>
Signal<Scalar> zero_phase_filter(const FilterSpec& spec, const Signal<Scalar>& x) {
  const Eigen::Index n = x.size();
  if (n < 3 * spec.order) {
    throw Error(ErrorCode::TooShort, "zero-phase filtering needs at least " +
                                         std::to_string(3 * spec.order) + " samples, got " +
                                         std::to_string(n));
  }
  if (n < 2) throw Error(ErrorCode::TooShort, "need at least two samples");
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteInput, "input contains NaN or Inf");

  const Eigen::Index pad = std::min<Eigen::Index>(3 * spec.order, n - 1);
  Signal<Scalar> ext(n + 2 * pad);
  for (Eigen::Index i = 0; i < pad; ++i) {
    ext[i] = Scalar(2) * x[0] - x[pad - i];
    ext[n + pad + i] = Scalar(2) * x[n - 1] - x[n - 2 - i];
  }
  ext.segment(pad, n) = x;

  auto state = detail::steady_state<Scalar>(spec.sections, ext[0]);
  detail::sos_run<Scalar>(spec.sections, state, ext);
  ext.reverseInPlace();
  state = detail::steady_state<Scalar>(spec.sections, ext[0]);
  detail::sos_run<Scalar>(spec.sections, state, ext);
  ext.reverseInPlace();
  return ext.segment(pad, n);
}

enum class Replacement { Interpolate, Drop };

struct CleanParams {
  double z_threshold = 3.0;
  Replacement replacement = Replacement::Interpolate;
};

struct CleanResult {
  Eigen::VectorXd values;
  std::vector<Eigen::Index> outliers;
};

/// Flags samples whose population z-score exceeds the threshold. A constant
/// input is returned unchanged with no flags.
CleanResult zscore_clean(const Eigen::VectorXd& x, const CleanParams& params = {});

/// Anti-alias lowpass (Butterworth order 8 at 0.8 of the target Nyquist,
/// zero phase) followed by keeping every (from/to)-th sample.
Eigen::VectorXd decimate(const Eigen::VectorXd& x, double from_rate, double to_rate);

inline constexpr int kDecimateFilterOrder = 8;

/// Zero mean, unit population variance.
Eigen::VectorXd standardize(const Eigen::VectorXd& x);

}  // namespace dermalab
