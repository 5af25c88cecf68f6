// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>

#include "ratelqg/errors.hpp"

namespace ratelqg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline double max_abs_entry(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Smallest eigenvalue of the symmetric part; +inf for an empty matrix.
inline double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Scale-relative positive-definiteness threshold.
inline double pd_tolerance(const Matrix& m) { return 1e-10 * (1.0 + max_abs_entry(m)); }

inline bool is_positive_definite(const Matrix& m) {
  return min_eigenvalue(m) > pd_tolerance(m);
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
inline Matrix spd_inverse(const Matrix& m, const char* what) {
  if (m.size() == 0) return m;
  Eigen::LLT<Matrix> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string(what) + " is not positive definite");
  }
  return symmetrize(llt.solve(Matrix::Identity(m.rows(), m.cols())));
}

/// log det of a symmetric positive definite matrix (natural log). Empty -> 0.
inline double log_det_spd(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::LLT<Matrix> llt(symmetrize(m));
  if (llt.info() != Eigen::Success) {
    throw NumericalError("log det of a matrix that is not positive definite");
  }
  const auto& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

inline double spectral_radius(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Symmetric square root of a PSD matrix with eigenvalues in [-clip, 0) set to zero.
/// Throws if some eigenvalue is below -clip.
inline Matrix psd_sqrt(const Matrix& m, double clip) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  Vector ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -clip) {
      throw NumericalError("matrix is indefinite: eigenvalue " + std::to_string(ev(i)));
    }
    ev(i) = ev(i) < 0.0 ? 0.0 : std::sqrt(ev(i));
  }
  return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

/// Relative singular-value threshold below which a direction counts as rank deficient.
inline constexpr double kRankTolerance = 1e-9;

/// Numerical rank of a complex matrix by singular values relative to the largest.
inline Eigen::Index numerical_rank(const Eigen::MatrixXcd& m) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
  const auto& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  if (!(smax > 0.0)) return 0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) / smax >= kRankTolerance) ++r;
  }
  return r;
}

/// Result of a Popov-Belevitch-Hautus test over the eigenvalues with |lambda| >= 1.
struct PbhResult {
  bool passed = true;
  Eigen::Index worst_rank_deficiency = 0;
  std::complex<double> witness_eigenvalue{0.0, 0.0};
};

/// Stabilizability of (a, b): rank [a - lambda I, b] = n for every unstable lambda.
inline PbhResult pbh_stabilizable(const Matrix& a, const Matrix& b) {
  PbhResult out;
  const Eigen::Index n = a.rows();
  if (n == 0) return out;
  Eigen::EigenSolver<Matrix> es(a, false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::complex<double> lambda = es.eigenvalues()(k);
    if (std::abs(lambda) < 1.0) continue;
    Eigen::MatrixXcd pencil(n, n + b.cols());
    pencil.leftCols(n) = a.cast<std::complex<double>>() -
                         lambda * Eigen::MatrixXcd::Identity(n, n);
    pencil.rightCols(b.cols()) = b.cast<std::complex<double>>();
    const Eigen::Index deficiency = n - numerical_rank(pencil);
    if (deficiency > out.worst_rank_deficiency) {
      out.passed = false;
      out.worst_rank_deficiency = deficiency;
      out.witness_eigenvalue = lambda;
    }
  }
  return out;
}

/// Detectability of (c, a): the dual of stabilizability of (a^T, c^T).
inline PbhResult pbh_detectable(const Matrix& c, const Matrix& a) {
  return pbh_stabilizable(a.transpose(), c.transpose());
}

/// Block diagonal matrix diag(a, b); either block may be empty.
inline Matrix block_diag(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace linalg
}  // namespace ratelqg
