// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "ratelqg/linalg.hpp"
#include "ratelqg/rng.hpp"

using namespace ratelqg;

TEST(Philox, KnownAnswerZeroCounterZeroKey) {
  const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPiDigits) {
  const auto out = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out[0], 0xd16cfe09u);
  EXPECT_EQ(out[1], 0x94fdccebu);
  EXPECT_EQ(out[2], 0x5001e420u);
  EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(CounterRng, SameSeedSameSequence) {
  CounterRng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(CounterRng, SplitStreamsAreDistinctAndStable) {
  const CounterRng root(7);
  CounterRng s1 = root.split(1), s2 = root.split(2), s1_again = root.split(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = s1.next_u64();
    EXPECT_EQ(v, s1_again.next_u64());
    seen.insert(v);
    seen.insert(s2.next_u64());
  }
  EXPECT_EQ(seen.size(), 2000u);
}

TEST(CounterRng, NormalMoments) {
  CounterRng rng(3);
  const int n = 200000;
  double s = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
  EXPECT_NEAR(s4 / n, 3.0, 0.08);
}

TEST(Linalg, PsdSqrtSquaresBack) {
  Matrix a(3, 3);
  a << 4, 1, 0, 1, 3, 1, 0, 1, 2;
  const Matrix r = linalg::psd_sqrt(a, 1e-12);
  EXPECT_LT((r * r - a).norm(), 1e-12);
  EXPECT_LT((r - r.transpose()).norm(), 1e-14);
}

TEST(Linalg, PsdSqrtRejectsIndefinite) {
  Matrix a(2, 2);
  a << 1, 0, 0, -0.1;
  EXPECT_THROW(linalg::psd_sqrt(a, 1e-10), NumericalError);
}

TEST(Linalg, PbhDetectsUncontrollableUnstableMode) {
  const Matrix a = 2.0 * Matrix::Identity(2, 2);
  const Matrix b = Matrix::Zero(2, 1);
  const auto r = linalg::pbh_stabilizable(a, b);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst_rank_deficiency, 2);
  EXPECT_DOUBLE_EQ(r.witness_eigenvalue.real(), 2.0);
}

TEST(Linalg, PbhIgnoresStableModes) {
  Matrix a(2, 2);
  a << 0.5, 0, 0, 1.2;
  Matrix b(2, 1);
  b << 0, 1;
  EXPECT_TRUE(linalg::pbh_stabilizable(a, b).passed);
  b << 1, 0;
  EXPECT_FALSE(linalg::pbh_stabilizable(a, b).passed);
}

TEST(Linalg, LogDetMatchesDeterminant) {
  Matrix a(2, 2);
  a << 2, 0.5, 0.5, 1;
  EXPECT_NEAR(linalg::log_det_spd(a), std::log(a.determinant()), 1e-14);
}
