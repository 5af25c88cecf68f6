// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ratelqg/errors.hpp"
#include "ratelqg/kalman.hpp"
#include "ratelqg/linalg.hpp"
#include "ratelqg/lqr.hpp"
#include "ratelqg/plant.hpp"

namespace ratelqg {

inline double nats_to_bits(double nats) { return nats / std::numbers::ln2; }

/// Minimum-rate sensing problem at cost budget gamma.
struct TradeoffProgram {
  PlantModel model;
  ControlLaw law;
  double gamma = 0.0;
  double floor = 0.0;  ///< Tr(S W)
  Matrix F;
  Matrix Abar;
  Matrix W;
};

/// gamma must clear the perfect-sensing floor by 1e-8 (1 + |Tr(SW)|).
inline double budget_margin(double floor) { return 1e-8 * (1.0 + std::abs(floor)); }

inline TradeoffProgram make_program(const PlantModel& p, const ControlLaw& law, double gamma) {
  check_dimensions(p);
  TradeoffProgram prog;
  prog.model = p;
  prog.law = law;
  prog.gamma = gamma;
  prog.floor = closed_loop_cost_floor(p, law);
  prog.F = p.m > 0 ? linalg::symmetrize(p.A21.transpose() * linalg::spd_inverse(p.W22, "W22") * p.A21)
                   : Matrix::Zero(p.n, p.n);
  prog.Abar = p.Abar();
  prog.W = p.W();
  return prog;
}

/// Ptilde implied by a steady posterior Phat.
inline Matrix tilde_from_hat(const TradeoffProgram& prog, const Matrix& phat) {
  return prior_from_posterior(phat, prog.F, prog.model);
}

/// W + Abar Phat Abar^T - diag(Phat, 0); PSD iff Ptilde - Phat is PSD.
inline Matrix rate_lmi(const TradeoffProgram& prog, const Matrix& phat) {
  const Eigen::Index n = prog.model.n;
  Matrix m = prog.W + prog.Abar * phat * prog.Abar.transpose();
  m.topLeftCorner(n, n) -= phat;
  return linalg::symmetrize(m);
}

/// [[Phat - Pi, Phat Abar^T], [Abar Phat, W + Abar Phat Abar^T]]; PSD iff Pi <= tight_slack(Phat).
inline Matrix slack_lmi(const TradeoffProgram& prog, const Matrix& phat, const Matrix& pi) {
  const Eigen::Index n = prog.model.n;
  const Eigen::Index d = prog.model.dim();
  Matrix m(n + d, n + d);
  m.topLeftCorner(n, n) = phat - pi;
  m.topRightCorner(n, d) = phat * prog.Abar.transpose();
  m.bottomLeftCorner(d, n) = prog.Abar * phat;
  m.bottomRightCorner(d, d) = prog.W + prog.Abar * phat * prog.Abar.transpose();
  return linalg::symmetrize(m);
}

/// (Phat^{-1} + Abar^T W^{-1} Abar)^{-1}: the slack value at which the epigraph binds.
inline Matrix tight_slack(const TradeoffProgram& prog, const Matrix& phat) {
  const Matrix info = prog.Abar.transpose() * linalg::spd_inverse(prog.W, "W") * prog.Abar;
  return linalg::spd_inverse(linalg::spd_inverse(phat, "Phat") + info, "slack bound");
}

inline Matrix side_info_cov(const TradeoffProgram& prog, const Matrix& phat) {
  const auto& p = prog.model;
  return linalg::symmetrize(p.W22 + p.A21 * phat * p.A21.transpose());
}

/// 1/2 (log det W - log det Pi - log det(W22 + A21 Phat A21^T)), in nats.
inline double convex_objective(const TradeoffProgram& prog, const Matrix& phat, const Matrix& pi) {
  return 0.5 * (linalg::log_det_spd(prog.W) - linalg::log_det_spd(pi) -
                linalg::log_det_spd(side_info_cov(prog, phat)));
}

/// 1/2 (log det Ptilde - log det Phat) with Ptilde implied by Phat, in nats.
inline double finite_objective(const TradeoffProgram& prog, const Matrix& phat) {
  return 0.5 * (linalg::log_det_spd(tilde_from_hat(prog, phat)) - linalg::log_det_spd(phat));
}

/// 1/2 log2(det Ptilde / det Phat).
inline double evaluate_rate(const Matrix& phat, const Matrix& ptilde) {
  if (!linalg::is_positive_definite(phat) || !linalg::is_positive_definite(ptilde)) {
    throw InputError("rate requires positive definite covariances");
  }
  return nats_to_bits(0.5 * (linalg::log_det_spd(ptilde) - linalg::log_det_spd(phat)));
}

/// Tr(Theta Phat) + Tr(S W).
inline double evaluate_control_cost(const Matrix& phat, const ControlLaw& law, const PlantModel& p) {
  return (law.Theta * phat).trace() + closed_loop_cost_floor(p, law);
}

struct ConstraintMargin {
  std::string name;
  double min_eigenvalue = 0.0;
};

struct SdpSolution {
  Matrix Phat;
  Matrix Pi;
  double rate_bits = 0.0;
  double control_cost = 0.0;
  double kkt_residual = 0.0;  ///< duality-gap bound nu / t at termination, in nats
  double newton_decrement = 0.0;
  int newton_iterations = 0;
  std::vector<ConstraintMargin> feasibility_margins;
};

struct SolverOptions {
  double gap_tolerance = 1e-11;
  double barrier_growth = 8.0;
  int max_newton_per_center = 200;
};

namespace detail {

/// -w log det G(x) with G affine in the stacked svec coordinates of (Phat, Pi).
struct BarrierTerm {
  double weight = 1.0;
  std::vector<Matrix> directions;  ///< dG/dx_v; empty matrix when constant in x_v
};

class TradeoffBarrier {
 public:
  explicit TradeoffBarrier(const TradeoffProgram& prog) : prog_(prog) {
    const Eigen::Index n = prog.model.n;
    const Eigen::Index m = prog.model.m;
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i <= j; ++i) {
        Matrix e = Matrix::Zero(n, n);
        e(i, j) = 1.0;
        e(j, i) = 1.0;
        basis_.push_back(e);
      }
    }
    const std::size_t k = basis_.size();
    const Matrix& abar = prog.Abar;
    auto none = [] { return Matrix(); };

    terms_.resize(6);
    for (std::size_t v = 0; v < 2 * k; ++v) {
      const bool on_phat = v < k;
      const Matrix& e = basis_[v % k];
      // 0: Phat > 0
      terms_[0].directions.push_back(on_phat ? e : none());
      // 1: Pi in the objective
      terms_[1].directions.push_back(on_phat ? none() : e);
      // 2: W22 + A21 Phat A21^T in the objective
      terms_[2].directions.push_back(on_phat && m > 0 ? Matrix(prog.model.A21 * e * prog.model.A21.transpose())
                                                      : none());
      // 3: trace budget
      terms_[3].directions.push_back(on_phat ? Matrix::Constant(1, 1, -(prog.law.Theta * e).trace()) : none());
      // 4: rate LMI
      if (on_phat) {
        Matrix d = abar * e * abar.transpose();
        d.topLeftCorner(n, n) -= e;
        terms_[4].directions.push_back(d);
      } else {
        terms_[4].directions.push_back(none());
      }
      // 5: slack LMI
      const Eigen::Index dd = prog.model.dim();
      Matrix d = Matrix::Zero(n + dd, n + dd);
      if (on_phat) {
        d.topLeftCorner(n, n) = e;
        d.topRightCorner(n, dd) = e * abar.transpose();
        d.bottomLeftCorner(dd, n) = abar * e;
        d.bottomRightCorner(dd, dd) = abar * e * abar.transpose();
      } else {
        d.topLeftCorner(n, n) = -e;
      }
      terms_[5].directions.push_back(d);
    }
    nu_ = static_cast<double>(n + 1 + (n + m) + (2 * n + m));
  }

  std::size_t dim() const { return 2 * basis_.size(); }
  double nu() const { return nu_; }

  Matrix phat(const Vector& x) const { return assemble(x, 0); }
  Matrix pi(const Vector& x) const { return assemble(x, basis_.size()); }

  Vector pack(const Matrix& phat, const Matrix& pi) const {
    const std::size_t k = basis_.size();
    Vector x(2 * k);
    std::size_t v = 0;
    const Eigen::Index n = phat.rows();
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i <= j; ++i, ++v) {
        x(v) = phat(i, j);
        x(v + k) = pi(i, j);
      }
    }
    return x;
  }

  /// Term values at x; index 2 is empty when m = 0.
  std::vector<Matrix> values(const Vector& x) const {
    const Matrix ph = phat(x);
    const Matrix p = pi(x);
    std::vector<Matrix> g(6);
    g[0] = ph;
    g[1] = p;
    g[2] = prog_.model.m > 0 ? side_info_cov(prog_, ph) : Matrix();
    g[3] = Matrix::Constant(1, 1, prog_.gamma - prog_.floor - (prog_.law.Theta * ph).trace());
    g[4] = rate_lmi(prog_, ph);
    g[5] = slack_lmi(prog_, ph, p);
    return g;
  }

  void set_t(double t) {
    terms_[0].weight = 1.0;
    terms_[1].weight = 0.5 * t;
    terms_[2].weight = 0.5 * t;
    terms_[3].weight = 1.0;
    terms_[4].weight = 1.0;
    terms_[5].weight = 1.0;
  }

  /// Barrier value; +inf outside the domain.
  double value(const Vector& x) const {
    const auto g = values(x);
    double phi = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i].size() == 0) continue;
      Eigen::LLT<Matrix> llt(g[i]);
      if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
      double ld = 0.0;
      for (Eigen::Index r = 0; r < g[i].rows(); ++r) {
        const double l = llt.matrixLLT()(r, r);
        if (!(l > 0.0)) return std::numeric_limits<double>::infinity();
        ld += std::log(l);
      }
      phi -= terms_[i].weight * 2.0 * ld;
    }
    return phi;
  }

  void derivatives(const Vector& x, Vector& grad, Matrix& hess) const {
    const std::size_t nv = dim();
    grad = Vector::Zero(nv);
    hess = Matrix::Zero(nv, nv);
    const auto g = values(x);
    std::vector<Matrix> y(nv);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i].size() == 0) continue;
      const Matrix ginv = g[i].llt().solve(Matrix::Identity(g[i].rows(), g[i].cols()));
      const double w = terms_[i].weight;
      for (std::size_t v = 0; v < nv; ++v) {
        const Matrix& dv = terms_[i].directions[v];
        y[v] = dv.size() ? Matrix(ginv * dv) : Matrix();
        if (dv.size()) grad(v) -= w * y[v].trace();
      }
      for (std::size_t v = 0; v < nv; ++v) {
        if (!y[v].size()) continue;
        for (std::size_t u = 0; u <= v; ++u) {
          if (!y[u].size()) continue;
          const double h = w * (y[v].cwiseProduct(y[u].transpose())).sum();
          hess(v, u) += h;
          if (u != v) hess(u, v) += h;
        }
      }
    }
  }

 private:
  Matrix assemble(const Vector& x, std::size_t offset) const {
    const Eigen::Index n = prog_.model.n;
    Matrix out = Matrix::Zero(n, n);
    for (std::size_t v = 0; v < basis_.size(); ++v) {
      if (x(offset + v) != 0.0) out += x(offset + v) * basis_[v];
    }
    // Off-diagonal basis elements carry both (i, j) and (j, i).
    return out;
  }

  const TradeoffProgram& prog_;
  std::vector<Matrix> basis_;
  std::vector<BarrierTerm> terms_;
  double nu_ = 0.0;
};

}  // namespace detail

/// Solves
///
///   min_{Phat, Pi}  1/2 (log det W - log det Pi - log det(W22 + A21 Phat A21^T))
///   s.t.  Phat > 0, Pi >= 0, Tr(Theta Phat) + Tr(S W) <= gamma,
///         W + Abar Phat Abar^T - diag(Phat, 0) >= 0,
///         [[Phat - Pi, Phat Abar^T], [Abar Phat, W + Abar Phat Abar^T]] >= 0
///
/// by a log-barrier path-following method with damped Newton centering.
inline SdpSolution solve_tradeoff(const TradeoffProgram& prog, const SolverOptions& opts = {}) {
  const auto& p = prog.model;
  if (!(prog.gamma > prog.floor + budget_margin(prog.floor))) {
    throw InfeasibleError("budget below perfect-sensing floor (gamma = " + std::to_string(prog.gamma) +
                          ", Tr(SW) = " + std::to_string(prog.floor) + ")");
  }
  detail::TradeoffBarrier barrier(prog);

  // Strictly feasible start: a small scaled identity for Phat and half its slack bound for Pi.
  const double theta_tr = std::max(prog.law.Theta.trace(), 0.0);
  double eps = linalg::min_eigenvalue(p.W11);
  if (theta_tr > 0.0) eps = std::min(eps, (prog.gamma - prog.floor) / theta_tr);
  Vector x;
  barrier.set_t(1.0);
  for (int tries = 0;; ++tries) {
    const Matrix ph = eps * Matrix::Identity(p.n, p.n);
    x = barrier.pack(ph, 0.5 * tight_slack(prog, ph));
    if (std::isfinite(barrier.value(x))) break;
    eps *= 0.5;
    if (tries > 200) throw NumericalError("could not find a strictly feasible starting point");
  }

  SdpSolution sol;
  double t = 1.0;
  Vector grad;
  Matrix hess;
  double decrement = 0.0;
  for (;;) {
    barrier.set_t(t);
    double phi = barrier.value(x);
    bool stalled = false;
    for (int it = 0; it < opts.max_newton_per_center; ++it) {
      barrier.derivatives(x, grad, hess);
      Eigen::LDLT<Matrix> ldlt(hess);
      Vector step = ldlt.solve(-grad);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) {
        Matrix reg = hess;
        reg.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
        step = reg.ldlt().solve(-grad);
      }
      const double lambda2 = -grad.dot(step);
      decrement = std::sqrt(std::max(lambda2, 0.0));
      ++sol.newton_iterations;
      if (lambda2 / 2.0 <= 1e-12) break;
      double s = 1.0;
      double trial = barrier.value(x + step);
      while (!(trial <= phi + 0.25 * s * grad.dot(step))) {
        s *= 0.5;
        if (s < 1e-16) break;
        trial = barrier.value(x + s * step);
      }
      if (s < 1e-16) {
        stalled = true;
        break;
      }
      x += s * step;
      phi = trial;
    }
    const double gap = barrier.nu() / t;
    if (gap <= opts.gap_tolerance) break;
    if (stalled) {
      if (gap <= 1e-8) break;
      throw NumericalError("solver stall: duality gap estimate " + std::to_string(gap));
    }
    t *= opts.barrier_growth;
  }

  sol.Phat = linalg::symmetrize(barrier.phat(x));
  sol.Pi = linalg::symmetrize(barrier.pi(x));
  sol.kkt_residual = barrier.nu() / t;
  sol.newton_decrement = decrement;
  sol.rate_bits = std::max(0.0, nats_to_bits(convex_objective(prog, sol.Phat, sol.Pi)));
  sol.control_cost = evaluate_control_cost(sol.Phat, prog.law, p);
  sol.feasibility_margins = {
      {"Phat", linalg::min_eigenvalue(sol.Phat)},
      {"Pi", linalg::min_eigenvalue(sol.Pi)},
      {"trace budget", prog.gamma - sol.control_cost},
      {"rate LMI", linalg::min_eigenvalue(rate_lmi(prog, sol.Phat))},
      {"slack LMI", linalg::min_eigenvalue(slack_lmi(prog, sol.Phat, sol.Pi))},
  };
  return sol;
}

/// Sensor y = C1 x1 + v with V = I realizing a steady posterior Phat.
struct SensorDesign {
  Matrix C1;
  Matrix V;
  Matrix Phat;
  Matrix Ptilde;
  double rate_bits = 0.0;
  double control_cost = 0.0;
};

inline constexpr double kSensorClip = 1e-10;

/// C1 = (Phat^{-1} - Ptilde^{-1})^{1/2}, the symmetric square root; V = I, C2 = 0.
inline SensorDesign recover_sensor(const SdpSolution& sol, const TradeoffProgram& prog) {
  if (!linalg::is_positive_definite(sol.Phat)) throw NumericalError("Phat is not positive definite");
  SensorDesign d;
  d.Phat = sol.Phat;
  d.Ptilde = tilde_from_hat(prog, sol.Phat);
  const Matrix delta_info = linalg::spd_inverse(d.Phat, "Phat") - linalg::spd_inverse(d.Ptilde, "Ptilde");
  const double clip = kSensorClip * (1.0 + linalg::max_abs_entry(delta_info));
  try {
    d.C1 = linalg::psd_sqrt(delta_info, clip);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("numerical inconsistency recovering the sensor: ") + e.what());
  }
  d.V = Matrix::Identity(prog.model.n, prog.model.n);
  d.rate_bits = evaluate_rate(d.Phat, d.Ptilde);
  d.control_cost = evaluate_control_cost(d.Phat, prog.law, prog.model);
  return d;
}

struct TradeoffPoint {
  double gamma = 0.0;
  double rate_bits = std::numeric_limits<double>::quiet_NaN();
  double control_cost = std::numeric_limits<double>::quiet_NaN();
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string error;
};

/// Solves the program at every gamma; failures are recorded per row and the sweep continues.
inline std::vector<TradeoffPoint> sweep_tradeoff(const TradeoffProgram& base,
                                                 const std::vector<double>& gammas,
                                                 const SolverOptions& opts = {}) {
  std::vector<TradeoffPoint> out;
  out.reserve(gammas.size());
  for (double g : gammas) {
    TradeoffPoint pt;
    pt.gamma = g;
    try {
      TradeoffProgram prog = base;
      prog.gamma = g;
      const auto sol = solve_tradeoff(prog, opts);
      pt.rate_bits = sol.rate_bits;
      pt.control_cost = sol.control_cost;
      pt.kkt_residual = sol.kkt_residual;
      pt.ok = true;
    } catch (const Error& e) {
      pt.error = e.what();
    }
    out.push_back(std::move(pt));
  }
  return out;
}

/// `points` values from lo to hi, evenly spaced in log; a single point is lo.
inline std::vector<double> log_spaced(double lo, double hi, int points) {
  if (points < 1) throw InputError("points must be at least 1");
  if (!(lo > 0.0) || hi < lo) throw InputError("gamma range must satisfy 0 < gamma_min <= gamma_max");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    g[static_cast<std::size_t>(i)] =
        points == 1 ? lo : std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (points - 1));
  }
  if (points > 1) g.back() = hi;
  return g;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with header gamma,rate_bits,control_cost,kkt_residual; failed rows carry nan.
inline void write_curve_csv(std::ostream& os, const std::vector<TradeoffPoint>& curve) {
  os << "gamma,rate_bits,control_cost,kkt_residual\n";
  for (const auto& pt : curve) {
    os << format_double(pt.gamma) << ',' << format_double(pt.rate_bits) << ','
       << format_double(pt.control_cost) << ',' << format_double(pt.kkt_residual) << '\n';
  }
}

}  // namespace ratelqg
