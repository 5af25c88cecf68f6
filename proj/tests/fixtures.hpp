// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "ratelqg/linalg.hpp"
#include "ratelqg/plant.hpp"

namespace ratelqg::fx {

inline Matrix m1(double v) { return Matrix::Constant(1, 1, v); }

/// n = m = u = 1 with W = I, Q = I, R = 1; A21 sets the SI coupling.
inline PlantModel scalar_si_plant(double a11 = 0.9, double a21 = 0.0, double a12 = 0.2, double a22 = 0.8) {
  PlantModel p;
  p.n = p.m = p.u = 1;
  p.A11 = m1(a11);
  p.A12 = m1(a12);
  p.A21 = m1(a21);
  p.A22 = m1(a22);
  p.B = Matrix::Ones(2, 1);
  p.W11 = m1(1.0);
  p.W22 = m1(1.0);
  p.Q = Matrix::Identity(2, 2);
  p.R = m1(1.0);
  return p;
}

/// Scalar plant without side information (m = 0).
inline PlantModel scalar_plant(double a, double b = 1.0, double q = 1.0, double r = 1.0, double w = 1.0) {
  PlantModel p;
  p.n = 1;
  p.m = 0;
  p.u = 1;
  p.A11 = m1(a);
  p.A12 = Matrix(1, 0);
  p.A21 = Matrix(0, 1);
  p.A22 = Matrix(0, 0);
  p.B = m1(b);
  p.W11 = m1(w);
  p.W22 = Matrix(0, 0);
  p.Q = m1(q);
  p.R = m1(r);
  return p;
}

/// n = 2, m = 1, u = 1 plant with nontrivial coupling.
inline PlantModel two_dim_plant() {
  PlantModel p;
  p.n = 2;
  p.m = 1;
  p.u = 1;
  p.A11 = (Matrix(2, 2) << 1.05, 0.3, -0.2, 0.7).finished();
  p.A12 = (Matrix(2, 1) << 0.1, 0.0).finished();
  p.A21 = (Matrix(1, 2) << 0.4, 0.2).finished();
  p.A22 = m1(0.5);
  p.B = (Matrix(3, 1) << 1.0, 0.5, 0.2).finished();
  p.W11 = (Matrix(2, 2) << 1.0, 0.2, 0.2, 0.8).finished();
  p.W22 = m1(0.5);
  p.Q = Matrix::Identity(3, 3);
  p.R = m1(0.5);
  return p;
}

/// Positive root of a x^2 + b x + c = 0 (a > 0, c < 0).
inline double positive_root(double a, double b, double c) {
  return (-b + std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
}

}  // namespace ratelqg::fx
