// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "ratelqg/errors.hpp"
#include "ratelqg/linalg.hpp"
#include "ratelqg/plant.hpp"

namespace ratelqg {

/// Certainty-equivalence controller u = K x built from the stabilizing Riccati solution S.
struct ControlLaw {
  Matrix S;
  Matrix K;
  Matrix Theta;  ///< upper-left n x n block of K^T (B^T S B + R) K
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

inline Matrix riccati_rhs(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                          const Matrix& s) {
  if (b.cols() == 0) return linalg::symmetrize(a.transpose() * s * a + q);
  const Matrix bts = b.transpose() * s;
  const Matrix gain_core = (bts * b + r).ldlt().solve(bts * a);
  return linalg::symmetrize(a.transpose() * s * a - a.transpose() * bts.transpose() * gain_core + q);
}

inline double relative_change(const Matrix& next, const Matrix& prev) {
  return (next - prev).norm() / (1.0 + next.norm());
}

}  // namespace detail

inline constexpr int kRiccatiIterationCap = 100000;

/// S = A'SA - A'SB(B'SB + R)^{-1}B'SA + Q, K = -(B'SB + R)^{-1}B'SA.
///
/// Value iteration from S = Q; when it has not converged after a short budget
/// the structured doubling algorithm takes over, which squares the
/// contraction each step. Iterations of both phases count against the cap.
inline ControlLaw solve_control_riccati(const PlantModel& p) {
  check_dimensions(p);
  const Matrix a = p.A();
  const Matrix& b = p.B;
  const Eigen::Index d = p.dim();
  constexpr double kTol = 1e-12;
  constexpr int kValueIterationBudget = 2000;

  Matrix s = p.Q;
  int iters = 0;
  bool converged = false;
  for (; iters < kValueIterationBudget; ++iters) {
    Matrix next = detail::riccati_rhs(a, b, p.Q, p.R, s);
    const double change = detail::relative_change(next, s);
    s = std::move(next);
    if (change <= kTol) {
      converged = true;
      ++iters;
      break;
    }
  }

  if (!converged && p.u > 0) {
    // Doubling on X = A'X(I + G X)^{-1}A + Q with G = B R^{-1} B'.
    Matrix ak = a;
    Matrix gk = b * p.R.ldlt().solve(b.transpose());
    Matrix hk = p.Q;
    const Matrix eye = Matrix::Identity(d, d);
    for (; iters < kRiccatiIterationCap; ++iters) {
      const auto lu = (eye + gk * hk).partialPivLu();
      const Matrix a_next = ak * lu.solve(ak);
      const Matrix g_next = linalg::symmetrize(gk + ak * lu.solve(gk) * ak.transpose());
      const Matrix h_next = linalg::symmetrize(hk + ak.transpose() * hk * lu.solve(ak));
      const double change = detail::relative_change(h_next, hk);
      ak = a_next;
      gk = g_next;
      hk = h_next;
      if (!hk.allFinite()) break;
      if (change <= kTol) {
        converged = true;
        ++iters;
        break;
      }
    }
    if (converged) {
      // Polish with a few fixed-point sweeps so the residual reflects the equation itself.
      s = hk;
      for (int k = 0; k < 3; ++k) s = detail::riccati_rhs(a, b, p.Q, p.R, s);
    }
  }

  const double residual = (s - detail::riccati_rhs(a, b, p.Q, p.R, s)).norm();
  if (!converged || !s.allFinite() || residual > 1e-9 * (1.0 + s.norm())) {
    throw NumericalError("Riccati divergence: plant/cost pathology (last residual " +
                         std::to_string(residual) + ")");
  }

  ControlLaw law;
  law.S = s;
  law.residual = residual;
  law.iterations = iters;
  if (p.u > 0) {
    const Matrix core = b.transpose() * s * b + p.R;
    law.K = -core.ldlt().solve(b.transpose() * s * a);
    law.Theta = linalg::symmetrize((law.K.transpose() * core * law.K).topLeftCorner(p.n, p.n));
  } else {
    law.K = Matrix::Zero(0, d);
    law.Theta = Matrix::Zero(p.n, p.n);
  }
  const double rho = linalg::spectral_radius(a + b * law.K);
  if (!(rho < 1.0)) {
    throw NumericalError("Riccati solution is not stabilizing: spectral radius of A + BK is " +
                         std::to_string(rho));
  }
  return law;
}

/// Tr(S W): the control cost as sensing becomes perfect.
inline double closed_loop_cost_floor(const PlantModel& p, const ControlLaw& law) {
  return (law.S * p.W()).trace();
}

}  // namespace ratelqg
