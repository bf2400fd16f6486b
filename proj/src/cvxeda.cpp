#include "dermalab/cvxeda.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/SparseCholesky>

#include "dermalab/io.hpp"
#include "json.hpp"

namespace dermalab {
namespace {

/// Cardinal cubic B-spline supported on [0, 4).
double cubic_bspline(double u) {
  if (u < 0.0 || u >= 4.0) return 0.0;
  if (u < 1.0) return u * u * u / 6.0;
  if (u < 2.0) return (-3.0 * u * u * u + 12.0 * u * u - 12.0 * u + 4.0) / 6.0;
  if (u < 3.0) return (3.0 * u * u * u - 24.0 * u * u + 60.0 * u - 44.0) / 6.0;
  const double v = 4.0 - u;
  return v * v * v / 6.0;
}

/// Linear operators of the program, all O(n) apart from the spline products.
class Program {
 public:
  Program(const Eigen::VectorXd& y, double sample_rate, const CvxEdaParams& params)
      : y_(y),
        params_(params),
        arma_(bateman_discretization(params.tau0, params.tau1, sample_rate)),
        basis_(tonic_basis(y.size(), sample_rate, params.knot_spacing)),
        n_(y.size()),
        m_(basis_.spline_count()) {
    gain_ = arma_.ma[1];
    ar1_ = arma_.ar[1];
    ar2_ = arma_.ar[2];
  }

  Eigen::Index n() const { return n_; }
  Eigen::Index m() const { return m_; }
  const TonicBasis& basis() const { return basis_; }
  const BatemanArma& arma() const { return arma_; }

  /// q = A^-1 p.
  Eigen::VectorXd solve_a(const Eigen::VectorXd& p) const {
    Eigen::VectorXd q(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      double v = p[i];
      if (i >= 1) v -= ar1_ * q[i - 1];
      if (i >= 2) v -= ar2_ * q[i - 2];
      q[i] = v;
    }
    return q;
  }

  /// w = A^-T v.
  Eigen::VectorXd solve_at(const Eigen::VectorXd& v) const {
    Eigen::VectorXd w(n_);
    for (Eigen::Index i = n_ - 1; i >= 0; --i) {
      double s = v[i];
      if (i + 1 < n_) s -= ar1_ * w[i + 1];
      if (i + 2 < n_) s -= ar2_ * w[i + 2];
      w[i] = s;
    }
    return w;
  }

  Eigen::VectorXd apply_a(const Eigen::VectorXd& q) const {
    Eigen::VectorXd p(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      double v = q[i];
      if (i >= 1) v += ar1_ * q[i - 1];
      if (i >= 2) v += ar2_ * q[i - 2];
      p[i] = v;
    }
    return p;
  }

  /// r = M q; M shifts by one sample and scales by the ARMA gain.
  Eigen::VectorXd apply_m(const Eigen::VectorXd& q) const {
    Eigen::VectorXd r(n_);
    r[0] = 0.0;
    for (Eigen::Index i = 1; i < n_; ++i) r[i] = gain_ * q[i - 1];
    return r;
  }

  Eigen::VectorXd apply_mt(const Eigen::VectorXd& e) const {
    Eigen::VectorXd g(n_);
    for (Eigen::Index k = 0; k + 1 < n_; ++k) g[k] = gain_ * e[k + 1];
    g[n_ - 1] = 0.0;
    return g;
  }

  Eigen::VectorXd tonic(const Eigen::Vector2d& d, const Eigen::VectorXd& l) const {
    Eigen::VectorXd t = basis_.drift * d;
    if (m_ > 0) t += basis_.spline * l;
    return t;
  }

  struct State {
    Eigen::VectorXd p;
    Eigen::Vector2d d = Eigen::Vector2d::Zero();
    Eigen::VectorXd l;
  };

  struct Eval {
    double objective = 0.0;
    Eigen::VectorXd residual;  // M q + B l + C d - y
    Eigen::VectorXd phasic;
  };

  Eval evaluate(const State& s) const {
    Eval ev;
    ev.phasic = apply_m(solve_a(s.p));
    ev.residual = ev.phasic + tonic(s.d, s.l) - y_;
    ev.objective = 0.5 * ev.residual.squaredNorm() + params_.alpha * s.p.sum() +
                   0.5 * params_.gamma * s.l.squaredNorm();
    return ev;
  }

  struct Gradient {
    Eigen::VectorXd p;  // gradient w.r.t. the driver
    Eigen::Vector2d d;
    Eigen::VectorXd l;
    Eigen::VectorXd q;  // gradient w.r.t. q, used by the Newton system
  };

  Gradient gradient(const State& s, const Eval& ev) const {
    Gradient g;
    const Eigen::VectorXd mte = apply_mt(ev.residual);
    g.p = solve_at(mte).array() + params_.alpha;
    // A' 1 scaled by alpha, added to M'e.
    Eigen::VectorXd at1(n_);
    for (Eigen::Index k = 0; k < n_; ++k) {
      double v = 1.0;
      if (k + 1 < n_) v += ar1_;
      if (k + 2 < n_) v += ar2_;
      at1[k] = v;
    }
    g.q = mte + params_.alpha * at1;
    g.d = basis_.drift.transpose() * ev.residual;
    g.l = Eigen::VectorXd::Zero(m_);
    if (m_ > 0) g.l = basis_.spline.transpose() * ev.residual + params_.gamma * s.l;
    return g;
  }

  /// Cross block d^2 f / (dq dw) over w = (drift, spline); row n-1 is zero
  /// because the last q never reaches the phasic output.
  Eigen::MatrixXd hessian_qw() const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_ - 1, 2 + m_);
    for (Eigen::Index k = 0; k + 1 < n_; ++k) {
      h(k, 0) = gain_ * basis_.drift(k + 1, 0);
      h(k, 1) = gain_ * basis_.drift(k + 1, 1);
    }
    for (Eigen::Index j = 0; j < m_; ++j) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(basis_.spline, j); it; ++it) {
        if (it.row() >= 1) h(it.row() - 1, 2 + j) = gain_ * it.value();
      }
    }
    return h;
  }

  Eigen::MatrixXd hessian_ww() const {
    Eigen::MatrixXd h(2 + m_, 2 + m_);
    const Eigen::MatrixXd& C = basis_.drift;
    h.topLeftCorner(2, 2) = C.transpose() * C;
    if (m_ > 0) {
      const auto& B = basis_.spline;
      const Eigen::MatrixXd ctb = C.transpose() * B;
      h.topRightCorner(2, m_) = ctb;
      h.bottomLeftCorner(m_, 2) = ctb.transpose();
      h.bottomRightCorner(m_, m_) = Eigen::MatrixXd(B.transpose() * B);
      h.bottomRightCorner(m_, m_).diagonal().array() += params_.gamma;
    }
    return h;
  }

  double gain() const { return gain_; }

  /// Rows of A (restricted to the first n-1 columns) listed in `rows`.
  Eigen::SparseMatrix<double> constraint_rows(const std::vector<Eigen::Index>& rows) const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(rows.size() * 3);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Eigen::Index i = rows[r];
      const auto row = static_cast<Eigen::Index>(r);
      t.emplace_back(row, i, 1.0);
      if (i >= 1) t.emplace_back(row, i - 1, ar1_);
      if (i >= 2) t.emplace_back(row, i - 2, ar2_);
    }
    Eigen::SparseMatrix<double> e(static_cast<Eigen::Index>(rows.size()), n_ - 1);
    e.setFromTriplets(t.begin(), t.end());
    return e;
  }

 private:
  const Eigen::VectorXd& y_;
  CvxEdaParams params_;
  BatemanArma arma_;
  TonicBasis basis_;
  Eigen::Index n_;
  Eigen::Index m_;
  double gain_ = 0.0;
  double ar1_ = 0.0;
  double ar2_ = 0.0;
};

KktResiduals kkt_residuals(const Program::State& s, const Program::Gradient& g) {
  KktResiduals r;
  double stat = g.d.cwiseAbs().maxCoeff();
  if (g.l.size() > 0) stat = std::max(stat, g.l.cwiseAbs().maxCoeff());
  double comp = 0.0;
  double primal = 0.0;
  for (Eigen::Index i = 0; i < s.p.size(); ++i) {
    // The multiplier of p_i >= 0 equals the driver gradient.
    const double lambda = g.p[i];
    stat = std::max(stat, -lambda);
    if (lambda > 0.0) comp = std::max(comp, std::min(s.p[i], lambda));
    primal = std::max(primal, -s.p[i]);
  }
  r.stationarity = std::max(stat, 0.0);
  r.complementarity = comp;
  r.primal = primal;
  return r;
}

}  // namespace

void CvxEdaParams::validate() const {
  if (!(tau1 > 0.0) || !(tau0 > tau1)) {
    throw Error(ErrorCode::InvalidTimeConstants, "need tau0 > tau1 > 0");
  }
  if (!(alpha > 0.0) || !(gamma > 0.0) || !(knot_spacing > 0.0) || !(solver_tol > 0.0) ||
      max_iters < 1) {
    throw Error(ErrorCode::InvalidArgument, "alpha, gamma, knot_spacing, solver_tol must be > 0");
  }
}

double KktResiduals::max() const { return std::max({stationarity, complementarity, primal}); }

BatemanArma bateman_discretization(double tau0, double tau1, double sample_rate) {
  if (!(tau1 > 0.0) || !(tau0 > tau1)) {
    throw Error(ErrorCode::InvalidTimeConstants, "need tau0 > tau1 > 0");
  }
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample rate must be > 0");
  const double dt = 1.0 / sample_rate;
  BatemanArma arma;
  arma.pole_slow = std::exp(-dt / tau0);
  arma.pole_fast = std::exp(-dt / tau1);
  arma.ar = {1.0, -(arma.pole_slow + arma.pole_fast), arma.pole_slow * arma.pole_fast};
  arma.ma = {0.0, arma.pole_slow - arma.pole_fast, 0.0};
  return arma;
}

Eigen::VectorXd BatemanArma::impulse_response(Eigen::Index n) const {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  if (n > 0) u[0] = 1.0;
  return bateman_filter(*this, u);
}

Eigen::VectorXd bateman_filter(const BatemanArma& arma, const Eigen::VectorXd& driver) {
  const Eigen::Index n = driver.size();
  Eigen::VectorXd x(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double v = arma.ma[0] * driver[k];
    if (k >= 1) v += arma.ma[1] * driver[k - 1] - arma.ar[1] * x[k - 1];
    if (k >= 2) v += arma.ma[2] * driver[k - 2] - arma.ar[2] * x[k - 2];
    x[k] = v / arma.ar[0];
  }
  return x;
}

double bateman_peak_time(double tau0, double tau1) {
  return std::log(tau0 / tau1) * tau0 * tau1 / (tau0 - tau1);
}

TonicBasis tonic_basis(Eigen::Index n, double sample_rate, double knot_spacing) {
  if (n < 2) throw Error(ErrorCode::TooShort, "tonic basis needs at least 2 samples");
  if (!(knot_spacing > 0.0) || !(sample_rate > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "knot spacing and sample rate must be > 0");
  }
  TonicBasis basis;
  basis.drift.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    basis.drift(i, 0) = 1.0;
    basis.drift(i, 1) = static_cast<double>(i + 1) / static_cast<double>(n);
  }

  const double span = static_cast<double>(n - 1) / sample_rate;
  if (span < knot_spacing) {
    basis.spline.resize(n, 0);
    return basis;
  }
  // Knots at j*h; splines j = -3 .. K-1 cover [0, K h] with K h >= span.
  const auto intervals = static_cast<Eigen::Index>(std::ceil(span / knot_spacing - 1e-12));
  const Eigen::Index cols = intervals + 3;
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index c = 0; c < cols; ++c) {
    const double origin = static_cast<double>(c - 3) * knot_spacing;
    const auto lo = std::max<Eigen::Index>(
        0, static_cast<Eigen::Index>(std::floor(origin * sample_rate)));
    const auto hi = std::min<Eigen::Index>(
        n - 1, static_cast<Eigen::Index>(std::ceil((origin + 4.0 * knot_spacing) * sample_rate)));
    for (Eigen::Index i = lo; i <= hi; ++i) {
      const double u = (static_cast<double>(i) / sample_rate - origin) / knot_spacing;
      const double v = cubic_bspline(u);
      if (v != 0.0) trip.emplace_back(i, c, v);
    }
  }
  basis.spline.resize(n, cols);
  basis.spline.setFromTriplets(trip.begin(), trip.end());
  basis.spline.makeCompressed();
  return basis;
}

double cvxeda_objective(const Eigen::VectorXd& y, double sample_rate, const CvxEdaParams& params,
                        const Eigen::VectorXd& driver, const Eigen::Vector2d& drift,
                        const Eigen::VectorXd& spline_coefficients) {
  Program prog(y, sample_rate, params);
  Program::State s{driver, drift, spline_coefficients};
  return prog.evaluate(s).objective;
}

Decomposition decompose(const Eigen::VectorXd& y, double sample_rate,
                        const CvxEdaParams& params) {
  params.validate();
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample rate must be > 0");
  if (static_cast<double>(y.size()) < 10.0 * sample_rate) {
    throw Error(ErrorCode::TooShort, "decomposition needs at least 10 s of samples");
  }
  if (!y.allFinite()) throw Error(ErrorCode::NonFiniteInput, "input contains NaN or Inf");

  const Program prog(y, sample_rate, params);
  const Eigen::Index n = prog.n();
  const Eigen::Index m = prog.m();

  // Newton direction on the free set: minimize the quadratic model in
  // z = (q, w) with the driver frozen on `fixed`. The last q only feeds the
  // last driver entry, which is always frozen, so it drops out. The q block
  // of the Hessian is gain^2 I; eliminating q through the projection onto
  // null(E), E = frozen rows of A, leaves a dense Schur system in w whose
  // size is the number of tonic coefficients.
  const Eigen::MatrixXd hqw = prog.hessian_qw();
  const Eigen::MatrixXd hww = prog.hessian_ww();
  const double g2 = prog.gain() * prog.gain();
  auto newton = [&](const Program::Gradient& g, std::vector<Eigen::Index> fixed,
                    Eigen::VectorXd& dq, Eigen::VectorXd& dw) {
    if (!fixed.empty() && fixed.back() == n - 1) fixed.pop_back();
    const Eigen::SparseMatrix<double> e = prog.constraint_rows(fixed);
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> eet;
    if (!fixed.empty()) {
      eet.compute(Eigen::SparseMatrix<double>(e * e.transpose()));
      if (eet.info() != Eigen::Success) return false;
    }
    auto project = [&](Eigen::MatrixXd v) {
      if (!fixed.empty()) v -= e.transpose() * eet.solve(Eigen::MatrixXd(e * v));
      return v;
    };
    // Drop the last row of A from alpha 1'A q: that driver entry stays at zero.
    Eigen::VectorXd gq = g.q.head(n - 1);
    gq[n - 2] -= params.alpha * prog.arma().ar[1];
    if (n >= 3) gq[n - 3] -= params.alpha * prog.arma().ar[2];
    Eigen::VectorXd gw(2 + m);
    gw.head(2) = g.d;
    if (m > 0) gw.tail(m) = g.l;

    const Eigen::MatrixXd ph = project(hqw);
    const Eigen::VectorXd pg = project(gq);
    const Eigen::MatrixXd schur = hww - hqw.transpose() * ph / g2;
    const Eigen::VectorXd rhs = -gw + hqw.transpose() * pg / g2;
    dw = schur.ldlt().solve(rhs);
    dq.resize(n);
    dq.head(n - 1) = -(pg + ph * dw) / g2;
    dq[n - 1] = 0.0;
    return dq.allFinite() && dw.allFinite();
  };

  Program::State s;
  s.p = Eigen::VectorXd::Zero(n);
  s.l = Eigen::VectorXd::Zero(m);
  auto ev = prog.evaluate(s);
  auto g = prog.gradient(s, ev);

  Decomposition out;
  out.objective_log.push_back(ev.objective);

  // Tonic-only start: solve for drift and splines with the driver at zero.
  {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    Eigen::VectorXd dq;
    Eigen::VectorXd dw;
    if (newton(g, all, dq, dw)) {
      Program::State t = s;
      t.d += dw.head(2);
      if (m > 0) t.l += dw.tail(m);
      auto tev = prog.evaluate(t);
      if (tev.objective <= ev.objective) {
        s = std::move(t);
        ev = std::move(tev);
        g = prog.gradient(s, ev);
        out.objective_log.push_back(ev.objective);
      }
    }
  }

  constexpr double kArmijo = 1e-4;
  constexpr double kShrink = 0.5;
  constexpr int kMaxHalvings = 60;

  KktResiduals kkt = kkt_residuals(s, g);
  int iter = 0;
  bool stalled = false;
  while (kkt.max() > params.solver_tol && iter < params.max_iters) {
    ++iter;
    const double width = kkt.max();
    const double eps = std::min(1e-3, width);
    std::vector<Eigen::Index> fixed;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (s.p[i] <= eps && (g.p[i] > 0.0 || i == n - 1)) fixed.push_back(i);
    }

    Eigen::VectorXd dq;
    Eigen::VectorXd dw;
    Eigen::VectorXd dp;
    Eigen::Vector2d dd = Eigen::Vector2d::Zero();
    Eigen::VectorXd dl = Eigen::VectorXd::Zero(m);
    std::vector<bool> is_fixed(static_cast<std::size_t>(n), false);
    for (auto i : fixed) is_fixed[static_cast<std::size_t>(i)] = true;

    if (newton(g, fixed, dq, dw)) {
      dp = prog.apply_a(dq);
      dd = dw.head(2);
      if (m > 0) dl = dw.tail(m);
    } else {
      dp = -g.p;
      dd = -g.d;
      dl = -g.l;
    }
    // Fixed coordinates follow the negative gradient onto the bound.
    for (auto i : fixed) dp[i] = -g.p[i];

    double slope = -(g.d.dot(dd) + g.l.dot(dl));
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!is_fixed[static_cast<std::size_t>(i)]) slope -= g.p[i] * dp[i];
    }
    if (!(slope > 0.0)) {
      // Not a descent direction: fall back to the projected gradient.
      dp = -g.p;
      dd = -g.d;
      dl = -g.l;
      std::fill(is_fixed.begin(), is_fixed.end(), false);
      slope = g.p.squaredNorm() + g.d.squaredNorm() + g.l.squaredNorm();
    }

    double step = 1.0;
    bool accepted = false;
    Program::State trial;
    Program::Eval tev;
    for (int h = 0; h < kMaxHalvings; ++h, step *= kShrink) {
      trial.p = (s.p + step * dp).cwiseMax(0.0);
      trial.d = s.d + step * dd;
      trial.l = s.l + step * dl;
      tev = prog.evaluate(trial);
      double predicted = step * slope;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (is_fixed[static_cast<std::size_t>(i)]) predicted += g.p[i] * (s.p[i] - trial.p[i]);
      }
      if (ev.objective - tev.objective >= kArmijo * predicted &&
          tev.objective <= ev.objective) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      stalled = true;
      break;
    }
    s = std::move(trial);
    ev = std::move(tev);
    g = prog.gradient(s, ev);
    kkt = kkt_residuals(s, g);
    out.objective_log.push_back(ev.objective);
  }

  out.iterations = iter;
  out.kkt = kkt;
  if (kkt.max() > params.solver_tol) {
    throw Error(ErrorCode::SolverDiverged,
                std::string(stalled ? "line search stalled" : "iteration limit reached") +
                    " with KKT residual " + io::format_sig(kkt.max(), 3));
  }

  out.driver = s.p;
  out.phasic = ev.phasic;
  out.tonic = prog.tonic(s.d, s.l);
  out.residual = y - out.tonic - out.phasic;
  out.objective_value = ev.objective;
  out.spline_coefficients = s.l;
  out.drift_coefficients = s.d;
  return out;
}

std::string decomposition_csv(const Decomposition& d, double start_ms, double sample_rate) {
  std::string out = "t_ms,tonic,phasic,driver,residual\n";
  for (Eigen::Index i = 0; i < d.tonic.size(); ++i) {
    out += io::format_double(std::round(start_ms + 1000.0 * i / sample_rate));
    out += ',' + io::format_double(d.tonic[i]);
    out += ',' + io::format_double(d.phasic[i]);
    out += ',' + io::format_double(d.driver[i]);
    out += ',' + io::format_double(d.residual[i]);
    out += '\n';
  }
  return out;
}

std::string decomposition_summary_json(const Decomposition& d) {
  nlohmann::ordered_json j;
  j["objective"] = d.objective_value;
  j["iterations"] = d.iterations;
  j["kkt"] = {{"stationarity", d.kkt.stationarity},
              {"complementarity", d.kkt.complementarity},
              {"primal", d.kkt.primal}};
  j["residual_norm"] = d.residual.norm();
  j["residual_max_abs"] = d.residual.size() ? d.residual.cwiseAbs().maxCoeff() : 0.0;
  j["driver_sum"] = d.driver.sum();
  j["samples"] = d.tonic.size();
  return j.dump(2);
}

}  // namespace dermalab
