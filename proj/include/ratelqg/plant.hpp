// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ratelqg/errors.hpp"
#include "ratelqg/linalg.hpp"
#include "ratelqg/rng.hpp"

namespace ratelqg {

/// Partitioned linear-Gaussian plant
///
///   [x1; x2]_{t+1} = [A11 A12; A21 A22] [x1; x2]_t + B u_t + w_t,
///   w_t ~ N(0, diag(W11, W22)),
///
/// where x1 (dimension n) is seen only by the encoder and x2 (dimension m)
/// is side information available to both ends. Q and R weight the
/// quadratic cost ||x_{t+1}||_Q^2 + ||u_t||_R^2.
struct PlantModel {
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  Eigen::Index u = 0;
  Matrix A11, A12, A21, A22;
  Matrix B;
  Matrix W11, W22;
  Matrix Q, R;

  /// Initial state law x_1 ~ N(x0_mean, x0_cov). Unset means N(0, W).
  std::optional<Vector> x0_mean;
  std::optional<Matrix> x0_cov;

  Eigen::Index dim() const noexcept { return n + m; }

  Matrix A() const {
    Matrix a(dim(), dim());
    a << A11, A12, A21, A22;
    return a;
  }

  /// [A11; A21], the columns of A acting on x1.
  Matrix Abar() const {
    Matrix a(dim(), n);
    a << A11, A21;
    return a;
  }

  Matrix W() const { return linalg::block_diag(W11, W22); }

  Vector initial_mean() const { return x0_mean.value_or(Vector::Zero(dim())); }
  Matrix initial_cov() const { return x0_cov.value_or(W()); }
};

/// Throws InputError naming the first block whose shape disagrees with (n, m, u).
inline void check_dimensions(const PlantModel& p) {
  if (p.n <= 0) throw InputError("n must be positive: nothing to encode");
  if (p.m < 0 || p.u < 0) throw InputError("dimensions m and u must be nonnegative");
  auto expect = [](const Matrix& mat, Eigen::Index r, Eigen::Index c, const char* name) {
    if (mat.rows() != r || mat.cols() != c) {
      std::ostringstream os;
      os << "block " << name << " has shape " << mat.rows() << "x" << mat.cols() << ", expected "
         << r << "x" << c;
      throw InputError(os.str());
    }
  };
  expect(p.A11, p.n, p.n, "A11");
  expect(p.A12, p.n, p.m, "A12");
  expect(p.A21, p.m, p.n, "A21");
  expect(p.A22, p.m, p.m, "A22");
  expect(p.B, p.dim(), p.u, "B");
  expect(p.W11, p.n, p.n, "W11");
  expect(p.W22, p.m, p.m, "W22");
  expect(p.Q, p.dim(), p.dim(), "Q");
  expect(p.R, p.u, p.u, "R");
  if (p.x0_mean && p.x0_mean->size() != p.dim()) throw InputError("initial_state.mean has wrong length");
  if (p.x0_cov) expect(*p.x0_cov, p.dim(), p.dim(), "initial_state.covariance");
}

struct ValidationCheck {
  std::string name;
  bool passed = false;
  double witness = 0.0;  ///< min eigenvalue, or PBH rank deficiency
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool ok() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
  const ValidationCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// Checks the standing assumptions: W11, W22, Q, R positive definite and (A, B) stabilizable.
inline ValidationReport validate_plant(const PlantModel& p) {
  check_dimensions(p);
  ValidationReport rep;
  auto pd = [&](const Matrix& mat, const std::string& name) {
    ValidationCheck c;
    c.name = name + " positive definite";
    c.witness = mat.size() ? linalg::min_eigenvalue(mat) : 0.0;
    c.passed = mat.size() == 0 || c.witness > linalg::pd_tolerance(mat);
    c.detail = c.passed ? "min eigenvalue " + std::to_string(c.witness)
                        : name + " not positive definite (min eigenvalue " +
                              std::to_string(c.witness) + ")";
    rep.checks.push_back(c);
  };
  pd(p.W11, "W11");
  if (p.m > 0) pd(p.W22, "W22");
  pd(p.Q, "Q");
  if (p.u > 0) pd(p.R, "R");

  const auto pbh = linalg::pbh_stabilizable(p.A(), p.B);
  ValidationCheck st;
  st.name = "(A, B) stabilizable";
  st.passed = pbh.passed;
  st.witness = static_cast<double>(pbh.worst_rank_deficiency);
  if (pbh.passed) {
    st.detail = "PBH rank full at every eigenvalue with |lambda| >= 1";
  } else {
    std::ostringstream os;
    os << "PBH rank deficiency " << pbh.worst_rank_deficiency << " at lambda = "
       << pbh.witness_eigenvalue.real();
    if (pbh.witness_eigenvalue.imag() != 0.0) os << (pbh.witness_eigenvalue.imag() > 0 ? "+" : "") << pbh.witness_eigenvalue.imag() << "i";
    st.detail = os.str();
  }
  rep.checks.push_back(st);
  return rep;
}

/// Throws InfeasibleError with the first failing check's detail.
inline void require_valid(const PlantModel& p) {
  const auto rep = validate_plant(p);
  for (const auto& c : rep.checks)
    if (!c.passed) throw InfeasibleError(c.detail);
}

struct StateSample {
  Vector x1;
  Vector x2;
  long long t = 0;

  Vector stacked() const {
    Vector x(x1.size() + x2.size());
    x << x1, x2;
    return x;
  }
};

inline StateSample split_state(const PlantModel& p, const Vector& x, long long t) {
  return {x.head(p.n), x.tail(p.m), t};
}

/// x_{t+1} = A x_t + B u_t + w_t.
inline StateSample step_plant(const PlantModel& p, const StateSample& s, const Vector& u,
                              const Vector& w) {
  if (s.x1.size() != p.n || s.x2.size() != p.m) throw InputError("state dimension mismatch");
  if (u.size() != p.u) throw InputError("input dimension mismatch");
  if (w.size() != p.dim()) throw InputError("disturbance dimension mismatch");
  Vector next = w;
  next.head(p.n).noalias() += p.A11 * s.x1 + p.A12 * s.x2;
  next.tail(p.m).noalias() += p.A21 * s.x1 + p.A22 * s.x2;
  if (p.u > 0) next.noalias() += p.B * u;
  return split_state(p, next, s.t + 1);
}

/// Lower Cholesky factor of diag(W11, W22).
inline Matrix disturbance_factor(const PlantModel& p) {
  auto chol = [](const Matrix& w) -> Matrix {
    if (w.size() == 0) return w;
    Eigen::LLT<Matrix> llt(linalg::symmetrize(w));
    if (llt.info() != Eigen::Success) throw NumericalError("W not positive definite");
    return llt.matrixL();
  };
  return linalg::block_diag(chol(p.W11), chol(p.W22));
}

inline Vector sample_gaussian(const Matrix& factor, CounterRng& rng) {
  Vector g(factor.cols());
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rng.normal();
  return factor * g;
}

/// w ~ N(0, diag(W11, W22)); deterministic given the generator state.
inline Vector sample_disturbance(const PlantModel& p, CounterRng& rng) {
  return sample_gaussian(disturbance_factor(p), rng);
}

/// x_1 drawn from the configured initial law.
inline StateSample sample_initial_state(const PlantModel& p, CounterRng& rng) {
  const Matrix cov = p.initial_cov();
  Vector x = p.initial_mean() + sample_gaussian(linalg::psd_sqrt(cov, linalg::pd_tolerance(cov)), rng);
  return split_state(p, x, 1);
}

}  // namespace ratelqg
