#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "dermalab/error.hpp"

namespace dermalab {

struct CvxEdaParams {
  double tau0 = 2.0;          // slow Bateman time constant, s
  double tau1 = 0.7;          // fast Bateman time constant, s
  double knot_spacing = 10.0; // tonic spline knot spacing, s
  double alpha = 8e-4;        // driver sparsity weight
  double gamma = 1e-2;        // tonic spline coefficient penalty
  double solver_tol = 1e-6;   // bound on every KKT residual
  int max_iters = 50000;

  void validate() const;
};

/// Second-order ARMA realization of h(t) = exp(-t/tau0) - exp(-t/tau1),
/// obtained by impulse invariance: the discrete impulse response equals h
/// sampled at k/fs.
///
///   ar[0] x[k] + ar[1] x[k-1] + ar[2] x[k-2] = ma[0] u[k] + ma[1] u[k-1] + ma[2] u[k-2]
struct BatemanArma {
  double pole_slow = 0.0;  // exp(-dt/tau0)
  double pole_fast = 0.0;  // exp(-dt/tau1)
  std::array<double, 3> ar{};
  std::array<double, 3> ma{};

  Eigen::VectorXd impulse_response(Eigen::Index n) const;
};

BatemanArma bateman_discretization(double tau0, double tau1, double sample_rate);

/// Time of the continuous Bateman maximum.
double bateman_peak_time(double tau0, double tau1);

struct TonicBasis {
  /// Uniform cubic B-splines on knots every knot_spacing seconds, one column
  /// per spline whose support meets the record. Empty when the record spans
  /// less than one knot interval.
  Eigen::SparseMatrix<double> spline;
  /// Constant and linear-ramp drift columns.
  Eigen::MatrixXd drift;

  Eigen::Index spline_count() const { return spline.cols(); }
};

TonicBasis tonic_basis(Eigen::Index n, double sample_rate, double knot_spacing);

struct KktResiduals {
  double stationarity = 0.0;     // gradient of free variables, negative driver multipliers
  double complementarity = 0.0;  // max_i min(driver_i, multiplier_i) over positive pairs
  double primal = 0.0;           // negative driver entries

  double max() const;
};

struct Decomposition {
  Eigen::VectorXd tonic;
  Eigen::VectorXd phasic;
  Eigen::VectorXd driver;
  Eigen::VectorXd residual;
  double objective_value = 0.0;

  Eigen::VectorXd spline_coefficients;
  Eigen::Vector2d drift_coefficients = Eigen::Vector2d::Zero();
  int iterations = 0;
  KktResiduals kkt;
  /// Objective after every accepted iterate, starting with the initial point.
  std::vector<double> objective_log;
};

/// Splits y into tonic + phasic + residual by solving
///
///   min  1/2 |M q + B l + C d - y|^2 + alpha 1'(A q) + 1/2 gamma |l|^2
///   s.t. A q >= 0
///
/// where A q is the sudomotor driver, M A^-1 the Bateman response, B the
/// spline basis and C the drift. The solver is a feasible projected Newton
/// method over (driver, drift, spline) with an Armijo search along the
/// projection arc. Each Newton system is projected onto the free driver
/// coordinates and reduced to a small dense system in the tonic coefficients.
Decomposition decompose(const Eigen::VectorXd& y, double sample_rate,
                        const CvxEdaParams& params = {});

/// Objective of the program above for given driver and tonic coefficients.
double cvxeda_objective(const Eigen::VectorXd& y, double sample_rate, const CvxEdaParams& params,
                        const Eigen::VectorXd& driver, const Eigen::Vector2d& drift,
                        const Eigen::VectorXd& spline_coefficients);

/// Phasic response of a driver sequence under the discretized Bateman model
/// with zero initial state.
Eigen::VectorXd bateman_filter(const BatemanArma& arma, const Eigen::VectorXd& driver);

/// `t_ms,tonic,phasic,driver,residual` rows.
std::string decomposition_csv(const Decomposition& d, double start_ms, double sample_rate);
std::string decomposition_summary_json(const Decomposition& d);

}  // namespace dermalab
