// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "ratelqg/errors.hpp"
#include "ratelqg/linalg.hpp"
#include "ratelqg/plant.hpp"

namespace ratelqg {

/// Sensor y = C1 x1 + v, v ~ N(0, V), plus the plant-derived matrices the
/// covariance recursion needs. The sensor never looks at x2 (C2 = 0).
struct FilterDesign {
  Matrix C1;
  Matrix V;
  Matrix F;     ///< A21^T W22^{-1} A21
  Matrix Abar;  ///< [A11; A21]
  Matrix info;  ///< C1^T V^{-1} C1, cached
};

inline FilterDesign make_filter_design(const PlantModel& p, const Matrix& c1,
                                       const Matrix& v = Matrix()) {
  check_dimensions(p);
  if (c1.rows() != p.n || c1.cols() != p.n) throw InputError("C1 must be n x n");
  FilterDesign d;
  d.C1 = c1;
  d.V = v.size() ? v : Matrix::Identity(p.n, p.n);
  if (d.V.rows() != p.n || d.V.cols() != p.n) throw InputError("V must be n x n");
  if (!linalg::is_positive_definite(d.V)) throw InputError("V not positive definite");
  d.F = p.m > 0 ? linalg::symmetrize(p.A21.transpose() *
                                     linalg::spd_inverse(p.W22, "W22") * p.A21)
                : Matrix::Zero(p.n, p.n);
  d.Abar = p.Abar();
  d.info = linalg::symmetrize(c1.transpose() * linalg::spd_inverse(d.V, "V") * c1);
  return d;
}

/// P_{t|t-1} = Abar Phat Abar^T + W.
inline Matrix time_update_cov(const PlantModel& p, const Matrix& phat_prev) {
  const Matrix abar = p.Abar();
  return linalg::symmetrize(abar * phat_prev * abar.transpose() + p.W());
}

/// Conditioning on exact x2: the Schur complement of the lower-right block.
inline Matrix si_update_cov(const Matrix& prior, Eigen::Index n) {
  const Eigen::Index m = prior.rows() - n;
  const Matrix p11 = prior.topLeftCorner(n, n);
  if (m == 0) return linalg::symmetrize(p11);
  const Matrix p12 = prior.topRightCorner(n, m);
  const Matrix p22 = prior.bottomRightCorner(m, m);
  Eigen::LLT<Matrix> llt(linalg::symmetrize(p22));
  if (llt.info() != Eigen::Success || !linalg::is_positive_definite(p22)) {
    throw NumericalError("singular side-information prediction covariance");
  }
  return linalg::symmetrize(p11 - p12 * llt.solve(p12.transpose()));
}

/// Phat^{-1} = Ptilde^{-1} + C1^T V^{-1} C1.
inline Matrix measurement_update_cov(const Matrix& ptilde, const FilterDesign& d) {
  const Matrix ptilde_inv = linalg::spd_inverse(ptilde, "Ptilde");
  return linalg::spd_inverse(ptilde_inv + d.info, "posterior information");
}

/// Ptilde_{t+1} = W11 + A11 (Ptilde^{-1} + C1^T V^{-1} C1 + F)^{-1} A11^T.
inline Matrix riccati_step(const Matrix& ptilde, const FilterDesign& d, const PlantModel& p) {
  const Matrix inner =
      linalg::spd_inverse(linalg::spd_inverse(ptilde, "Ptilde") + d.info + d.F, "information sum");
  return linalg::symmetrize(p.W11 + p.A11 * inner * p.A11.transpose());
}

/// The same step through the covariance form: measurement, time update, then SI conditioning.
inline Matrix riccati_step_two_stage(const Matrix& ptilde, const FilterDesign& d,
                                     const PlantModel& p) {
  return si_update_cov(time_update_cov(p, measurement_update_cov(ptilde, d)), p.n);
}

/// Ptilde = W11 + A11 (Phat^{-1} + F)^{-1} A11^T for a given posterior Phat.
inline Matrix prior_from_posterior(const Matrix& phat, const Matrix& f, const PlantModel& p) {
  const Matrix inner = linalg::spd_inverse(linalg::spd_inverse(phat, "Phat") + f, "Phat^{-1} + F");
  return linalg::symmetrize(p.W11 + p.A11 * inner * p.A11.transpose());
}

struct SteadyCovariances {
  Matrix Phat_inf;
  Matrix Ptilde_inf;
  double dare_residual = 0.0;
  int iterations = 0;
};

inline constexpr int kFilterIterationCap = 100000;

/// Iterates riccati_step from p0 (default W11) to the unique positive definite fixed point.
/// Requires ([C1; A21], A11) detectable.
inline SteadyCovariances solve_filter_dare(const FilterDesign& d, const PlantModel& p,
                                           const Matrix& p0 = Matrix()) {
  Matrix obs(d.C1.rows() + p.m, p.n);
  obs << d.C1, p.A21;
  const auto pbh = linalg::pbh_detectable(obs, p.A11);
  if (!pbh.passed) {
    throw InfeasibleError("([C1; A21], A11) not detectable: PBH rank deficiency " +
                          std::to_string(pbh.worst_rank_deficiency) + " at |lambda| = " +
                          std::to_string(std::abs(pbh.witness_eigenvalue)));
  }
  Matrix pt = p0.size() ? p0 : p.W11;
  if (!linalg::is_positive_definite(pt)) throw InputError("initial covariance must be positive definite");
  int k = 0;
  bool converged = false;
  for (; k < kFilterIterationCap; ++k) {
    Matrix next = riccati_step(pt, d, p);
    const double change = (next - pt).norm() / (1.0 + next.norm());
    pt = std::move(next);
    if (!pt.allFinite()) break;
    if (change <= 1e-12) {
      converged = true;
      ++k;
      break;
    }
  }
  if (!converged) throw NumericalError("filter Riccati iteration diverged");
  SteadyCovariances out;
  out.Ptilde_inf = pt;
  out.Phat_inf = measurement_update_cov(pt, d);
  out.dare_residual = (pt - riccati_step(pt, d, p)).norm() / (1.0 + pt.norm());
  out.iterations = k;
  return out;
}

/// Posterior of the two-stage filter after step t.
struct FilterState {
  Vector xhat1;     ///< E[x1_t | x2_{1:t}, y_{1:t}]
  Vector x2;        ///< side information at t
  Matrix Phat;
  Matrix Ptilde;    ///< covariance after the SI update, before the measurement
  long long t = 0;
};

/// Estimate after the time and side-information updates, before the measurement.
struct PredictedState {
  Vector xtilde1;  ///< E[x1_t | x2_{1:t}, y_{1:t-1}]
  Vector x2;
  Matrix Ptilde;
  long long t = 0;
};

/// Conditions a Gaussian prior N(mean, cov) on [x1; x2] on exact x2.
inline PredictedState condition_on_side_info(const PlantModel& p, const Vector& mean,
                                             const Matrix& cov, const Vector& x2, long long t) {
  if (x2.size() != p.m) throw InputError("side information dimension mismatch");
  PredictedState out;
  out.t = t;
  out.x2 = x2;
  out.Ptilde = si_update_cov(cov, p.n);
  out.xtilde1 = mean.head(p.n);
  if (p.m > 0) {
    const Matrix p12 = cov.topRightCorner(p.n, p.m);
    const Matrix p22 = linalg::symmetrize(cov.bottomRightCorner(p.m, p.m));
    out.xtilde1 += p12 * p22.llt().solve(x2 - mean.tail(p.m));
  }
  return out;
}

/// First prediction from the initial state law.
inline PredictedState predict_initial(const PlantModel& p, const Vector& x2) {
  return condition_on_side_info(p, p.initial_mean(), p.initial_cov(), x2, 1);
}

/// Time update with the known input u_prev, then conditioning on the new x2.
inline PredictedState predict(const PlantModel& p, const FilterState& s, const Vector& u_prev,
                              const Vector& x2) {
  if (u_prev.size() != p.u) throw InputError("input dimension mismatch");
  Vector xprev(p.dim());
  xprev << s.xhat1, s.x2;
  Vector mean = p.A() * xprev;
  if (p.u > 0) mean += p.B * u_prev;
  return condition_on_side_info(p, mean, time_update_cov(p, s.Phat), x2, s.t + 1);
}

/// Measurement update in information form with y = C1 x1 + v.
inline FilterState measure(const PredictedState& pr, const Vector& y, const FilterDesign& d) {
  if (y.size() != d.C1.rows()) throw InputError("measurement dimension mismatch");
  FilterState s;
  s.t = pr.t;
  s.x2 = pr.x2;
  s.Ptilde = pr.Ptilde;
  s.Phat = measurement_update_cov(pr.Ptilde, d);
  const Matrix gain = s.Phat * d.C1.transpose() * linalg::spd_inverse(d.V, "V");
  s.xhat1 = pr.xtilde1 + gain * (y - d.C1 * pr.xtilde1);
  return s;
}

/// One full step of the two-stage filter.
inline FilterState filter_step(const FilterState& s, const Vector& y, const Vector& x2,
                               const Vector& u_prev, const FilterDesign& d, const PlantModel& p) {
  return measure(predict(p, s, u_prev, x2), y, d);
}

}  // namespace ratelqg
