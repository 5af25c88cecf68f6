// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "ratelqg/coding.hpp"
#include "ratelqg/errors.hpp"
#include "ratelqg/kalman.hpp"
#include "ratelqg/lqr.hpp"
#include "ratelqg/plant.hpp"
#include "ratelqg/ratedist.hpp"
#include "ratelqg/rng.hpp"

namespace ratelqg {

/// Entropy-coding overhead of the dithered scheme over the directed-information rate:
/// k = 2 + (n/2) log2(4 pi e / 12) bits per step.
inline double rate_gap_k(Eigen::Index n) {
  return 2.0 + 0.5 * static_cast<double>(n) * std::log2(4.0 * std::numbers::pi * std::numbers::e / 12.0);
}

struct SimConfig {
  PlantModel model;
  ControlLaw law;
  SensorDesign design;
  DitherQuantizer quantizer;
  long long horizon = 200000;
  long long warmup = 1000;
  std::uint64_t seed = 1;
  int replicas = 1;
  double slack_bits = -1.0;  ///< negative means the default 0.1 n
  double gamma_design = std::numeric_limits<double>::quiet_NaN();

  double slack() const { return slack_bits >= 0.0 ? slack_bits : 0.1 * static_cast<double>(model.n); }
};

/// Quadruple of pass/fail verdicts; each margin is >= 0 exactly when the verdict passes.
struct BoundVerdicts {
  bool converse_ok = false;
  bool achievability_ok = false;
  bool cost_ok = false;
  bool lemma1_ok = false;
  double converse_margin = 0.0;
  double achievability_margin = 0.0;
  double cost_margin = 0.0;
  double lemma1_margin = 0.0;
  double converse_rate = std::numeric_limits<double>::quiet_NaN();  ///< R(gamma_achieved)
  double slack_used = 0.0;
  std::string note;

  bool all() const { return converse_ok && achievability_ok && cost_ok && lemma1_ok; }
};

inline constexpr int kBatches = 50;

struct SimReport {
  double avg_bits_per_step = 0.0;
  double avg_control_cost = 0.0;
  Matrix empirical_Phat;
  double theoretical_rate = 0.0;         ///< 1/2 log2(det Ptilde / det Phat) of the design
  double predicted_control_cost = 0.0;   ///< Tr(Theta Phat) + Tr(S W)
  double rate_gap_k = 0.0;
  double avg_model_entropy_bits = 0.0;   ///< mean entropy of the per-step coding model
  double max_codec_deviation = 0.0;      ///< encoder vs decoder posterior, max abs
  long long steps_averaged = 0;
  double bits_std_error = 0.0;
  double cost_std_error = 0.0;
  int replicas = 1;
  std::vector<std::string> warnings;
  BoundVerdicts verdicts;

  // Batch means over the post-warmup window, used for standard errors.
  std::vector<double> bits_batches;
  std::vector<double> cost_batches;
};

struct StepRecord {
  long long t = 0;
  Vector x;
  Vector xtilde1;  ///< encoder prediction
  Vector xhat1;    ///< decoder posterior
  Matrix Phat;     ///< decoder posterior covariance
  LatticeSymbol symbol;
  std::size_t codeword_bits = 0;
  Vector u;
  std::uint64_t dither_hash = 0;
};

struct SimSinks {
  std::vector<StepRecord>* trace = nullptr;
  std::vector<Codeword>* frames = nullptr;
};

inline std::uint64_t hash_vector(const Vector& v) {
  std::uint64_t h = 0x84222325cbf29ce4ull;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint64_t bits = 0;
    const double x = v(i);
    std::memcpy(&bits, &x, sizeof bits);
    h = mix64(h ^ bits);
  }
  return h;
}

namespace detail {

inline std::pair<double, double> mean_and_std_error(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

}  // namespace detail

/// Bit-true closed loop: plant, encoder-side predictive filter, dithered
/// quantizer, entropy coder, decoder-side two-stage filter, and the
/// certainty-equivalence controller u_t = K [xhat1_t; x2_t].
inline SimReport run_closed_loop(const SimConfig& cfg, SimSinks sinks = {}) {
  const PlantModel& p = cfg.model;
  check_dimensions(p);
  if (cfg.horizon <= cfg.warmup) throw InputError("horizon must exceed warmup");
  if (cfg.quantizer.dim != p.n) throw InputError("quantizer dimension must equal n");

  const FilterDesign fd = make_filter_design(p, cfg.design.C1, cfg.design.V);
  const DitherQuantizer& q = cfg.quantizer;
  const Matrix& model_ptilde = cfg.design.Ptilde;
  const Matrix noise_factor = disturbance_factor(p);
  const Matrix steady_phat = cfg.design.Phat;
  const double blowup = 1e6 * std::max(steady_phat.trace(), std::numeric_limits<double>::min());

  CounterRng root(cfg.seed);
  CounterRng init_rng = root.split(1);
  CounterRng noise_rng = root.split(2);
  const DitherStream encoder_dither{root.split(3).next_u64()};
  const DitherStream decoder_dither = encoder_dither;  // same seed on both ends

  SimReport rep;
  rep.rate_gap_k = rate_gap_k(p.n);
  rep.theoretical_rate = evaluate_rate(cfg.design.Phat, cfg.design.Ptilde);
  rep.predicted_control_cost = evaluate_control_cost(cfg.design.Phat, cfg.law, p);
  rep.empirical_Phat = Matrix::Zero(p.n, p.n);

  const long long window = cfg.horizon - cfg.warmup;
  const long long batch_len = std::max<long long>(1, window / kBatches);
  double batch_bits = 0.0, batch_cost = 0.0;
  long long in_batch = 0;
  double sum_bits = 0.0, sum_cost = 0.0, sum_entropy = 0.0;

  StateSample x = sample_initial_state(p, init_rng);
  FilterState enc_post, dec_post;
  Vector u_prev = Vector::Zero(p.u);
  Vector xu(p.dim());

  for (long long t = 1; t <= cfg.horizon; ++t) {
    // Both ends know x2_t and their own past, so their predictions coincide.
    const PredictedState enc_pred = t == 1 ? predict_initial(p, x.x2) : predict(p, enc_post, u_prev, x.x2);
    const PredictedState dec_pred = t == 1 ? predict_initial(p, x.x2) : predict(p, dec_post, u_prev, x.x2);

    // Encoder.
    const Vector z = fd.C1 * (x.x1 - enc_pred.xtilde1);
    const Vector d_enc = gen_dither(encoder_dither, t, q);
    const DitheredSample qs = subtractive_dither_quantize(q, z, d_enc);
    const InnovationModel enc_model = build_model_pmf(model_ptilde, fd.C1, q, d_enc);
    const Codeword cw = encode_symbol(qs.symbol, enc_model);
    enc_post = measure(enc_pred, qs.reconstruction + fd.C1 * enc_pred.xtilde1, fd);

    // Decoder.
    const Vector d_dec = gen_dither(decoder_dither, t, q);
    const InnovationModel dec_model = build_model_pmf(model_ptilde, fd.C1, q, d_dec);
    const DecodedSymbol decoded = decode_symbol(cw, dec_model);
    if (decoded.consumed != cw.size() || !(decoded.symbol == qs.symbol)) {
      throw NumericalError("codec mismatch at step " + std::to_string(t));
    }
    const Vector y_centered = lattice_point(q, decoded.symbol) - d_dec + fd.C1 * dec_pred.xtilde1;
    dec_post = measure(dec_pred, y_centered, fd);
    if (p.n > 0) {
      rep.max_codec_deviation =
          std::max(rep.max_codec_deviation, (enc_post.xhat1 - dec_post.xhat1).cwiseAbs().maxCoeff());
    }

    // Controller and plant.
    xu << dec_post.xhat1, x.x2;
    const Vector u = p.u > 0 ? Vector(cfg.law.K * xu) : Vector::Zero(0);
    const Vector w = sample_gaussian(noise_factor, noise_rng);
    const StateSample next = step_plant(p, x, u, w);
    const Vector xn = next.stacked();
    double cost = xn.dot(p.Q * xn);
    if (p.u > 0) cost += u.dot(p.R * u);

    const Vector err = x.x1 - dec_post.xhat1;
    if (!(err.squaredNorm() <= blowup)) {
      throw NumericalError("unstable loop: estimation error exceeded 1e6 x steady covariance at step " +
                           std::to_string(t));
    }

    if (t > cfg.warmup) {
      const auto bits = static_cast<double>(cw.size());
      sum_bits += bits;
      sum_cost += cost;
      rep.empirical_Phat.noalias() += err * err.transpose();
      sum_entropy += path_entropy_bits(decoded.symbol, dec_model);
      batch_bits += bits;
      batch_cost += cost;
      if (++in_batch == batch_len) {
        rep.bits_batches.push_back(batch_bits / static_cast<double>(batch_len));
        rep.cost_batches.push_back(batch_cost / static_cast<double>(batch_len));
        batch_bits = batch_cost = 0.0;
        in_batch = 0;
      }
    }

    if (sinks.trace) {
      sinks.trace->push_back({t, x.stacked(), enc_pred.xtilde1, dec_post.xhat1, dec_post.Phat, qs.symbol,
                              cw.size(), u, hash_vector(d_enc)});
    }
    if (sinks.frames) sinks.frames->push_back(cw);

    x = next;
    u_prev = u;
  }

  const auto count = static_cast<double>(window);
  rep.steps_averaged = window;
  rep.avg_bits_per_step = sum_bits / count;
  rep.avg_control_cost = sum_cost / count;
  rep.avg_model_entropy_bits = sum_entropy / count;
  rep.empirical_Phat = linalg::symmetrize(rep.empirical_Phat / count);
  rep.bits_std_error = detail::mean_and_std_error(rep.bits_batches).second;
  rep.cost_std_error = detail::mean_and_std_error(rep.cost_batches).second;
  return rep;
}

inline constexpr double kLemma1Tolerance = 0.05;
inline constexpr double kCostTolerance = 0.03;

/// Converse and achievability sandwich plus the second-moment checks.
///
/// achievability: bits <= theoretical_rate + k + slack
/// converse:      bits >= R(gamma_achieved) - slack, R from solve_tradeoff
inline BoundVerdicts check_bounds(const SimReport& rep, const TradeoffProgram& base, const Matrix& design_phat,
                                  double slack) {
  if (!std::isfinite(rep.theoretical_rate) || !std::isfinite(rep.predicted_control_cost) || design_phat.size() == 0) {
    throw InputError("missing theoretical reference values");
  }
  BoundVerdicts v;
  v.slack_used = slack;
  v.achievability_margin = rep.theoretical_rate + rep.rate_gap_k + slack - rep.avg_bits_per_step;
  v.achievability_ok = v.achievability_margin >= 0.0;

  TradeoffProgram prog = base;
  prog.gamma = rep.avg_control_cost;
  if (prog.gamma > prog.floor + budget_margin(prog.floor)) {
    try {
      v.converse_rate = solve_tradeoff(prog).rate_bits;
      v.converse_margin = rep.avg_bits_per_step - (v.converse_rate - slack);
      v.converse_ok = v.converse_margin >= 0.0;
    } catch (const Error& e) {
      v.note = std::string("converse reference failed: ") + e.what();
    }
  } else {
    v.note = "measured cost does not exceed the perfect-sensing floor";
    v.converse_margin = -std::numeric_limits<double>::infinity();
  }

  const double rel_p = (rep.empirical_Phat - design_phat).norm() / design_phat.norm();
  v.lemma1_margin = kLemma1Tolerance - rel_p;
  v.lemma1_ok = v.lemma1_margin >= 0.0;
  const double rel_c = std::abs(rep.avg_control_cost - rep.predicted_control_cost) / rep.predicted_control_cost;
  v.cost_margin = kCostTolerance - rel_c;
  v.cost_ok = v.cost_margin >= 0.0;
  return v;
}

/// Seed of replica r: the master seed itself for r = 0, then split streams.
inline std::uint64_t replica_seed(std::uint64_t master, int r) {
  return r == 0 ? master : CounterRng(master).split(0x5eed0000u + static_cast<std::uint64_t>(r)).next_u64();
}

/// Runs independent replicas (up to `threads` at a time) and aggregates them
/// in replica order. Scalars are averaged; standard errors come from the
/// pooled batch means. Sinks, if any, receive replica 0 only.
inline SimReport run_replicas(const SimConfig& cfg, int replicas, int threads = 1, SimSinks first_replica = {}) {
  if (replicas < 1) throw InputError("replicas must be at least 1");
  std::vector<std::optional<SimReport>> runs(static_cast<std::size_t>(replicas));
  std::vector<std::string> errors(static_cast<std::size_t>(replicas));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < replicas; r = next++) {
      SimConfig c = cfg;
      c.seed = replica_seed(cfg.seed, r);
      try {
        runs[static_cast<std::size_t>(r)] = run_closed_loop(c, r == 0 ? first_replica : SimSinks{});
      } catch (const Error& e) {
        errors[static_cast<std::size_t>(r)] = e.what();
      }
    }
  };
  const int nthreads = std::clamp(threads, 1, replicas);
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SimReport agg;
  int ok = 0;
  for (int r = 0; r < replicas; ++r) {
    const auto& run = runs[static_cast<std::size_t>(r)];
    if (!run) {
      agg.warnings.push_back("replica " + std::to_string(r) + " failed: " + errors[static_cast<std::size_t>(r)]);
      continue;
    }
    if (ok == 0) {
      agg = *run;
      agg.warnings.clear();
      agg.bits_batches.clear();
      agg.cost_batches.clear();
      agg.avg_bits_per_step = agg.avg_control_cost = agg.avg_model_entropy_bits = 0.0;
      agg.empirical_Phat.setZero();
      agg.steps_averaged = 0;
      agg.max_codec_deviation = 0.0;
      for (int k = 0; k < r; ++k) {
        agg.warnings.push_back("replica " + std::to_string(k) + " failed: " + errors[static_cast<std::size_t>(k)]);
      }
    }
    ++ok;
    agg.avg_bits_per_step += run->avg_bits_per_step;
    agg.avg_control_cost += run->avg_control_cost;
    agg.avg_model_entropy_bits += run->avg_model_entropy_bits;
    agg.empirical_Phat += run->empirical_Phat;
    agg.steps_averaged += run->steps_averaged;
    agg.max_codec_deviation = std::max(agg.max_codec_deviation, run->max_codec_deviation);
    agg.bits_batches.insert(agg.bits_batches.end(), run->bits_batches.begin(), run->bits_batches.end());
    agg.cost_batches.insert(agg.cost_batches.end(), run->cost_batches.begin(), run->cost_batches.end());
  }
  if (ok == 0) throw NumericalError("all replicas failed: " + errors.front());
  agg.replicas = ok;
  if (ok > 1) {
    agg.avg_bits_per_step /= ok;
    agg.avg_control_cost /= ok;
    agg.avg_model_entropy_bits /= ok;
    agg.empirical_Phat /= ok;
  }
  agg.bits_std_error = detail::mean_and_std_error(agg.bits_batches).second;
  agg.cost_std_error = detail::mean_and_std_error(agg.cost_batches).second;
  return agg;
}

/// Verdicts on an aggregate, with twice the standard error of the bit rate added to the slack.
inline BoundVerdicts check_aggregate(const SimReport& agg, const TradeoffProgram& base, const Matrix& design_phat,
                                     double slack) {
  return check_bounds(agg, base, design_phat, slack + 2.0 * agg.bits_std_error);
}

inline void write_trace_csv(std::ostream& os, const std::vector<StepRecord>& trace, const PlantModel& p) {
  os << "t";
  for (Eigen::Index i = 0; i < p.n; ++i) os << ",x1_" << i;
  for (Eigen::Index i = 0; i < p.m; ++i) os << ",x2_" << i;
  for (Eigen::Index i = 0; i < p.n; ++i) os << ",xtilde1_" << i;
  for (Eigen::Index i = 0; i < p.n; ++i) os << ",xhat1_" << i;
  for (Eigen::Index i = 0; i < p.n; ++i) os << ",symbol_" << i;
  os << ",codeword_bits";
  for (Eigen::Index i = 0; i < p.u; ++i) os << ",u_" << i;
  os << ",dither_hash\n";
  char hex[20];
  for (const auto& r : trace) {
    os << r.t;
    for (Eigen::Index i = 0; i < r.x.size(); ++i) os << ',' << format_double(r.x(i));
    for (Eigen::Index i = 0; i < r.xtilde1.size(); ++i) os << ',' << format_double(r.xtilde1(i));
    for (Eigen::Index i = 0; i < r.xhat1.size(); ++i) os << ',' << format_double(r.xhat1(i));
    for (auto m : r.symbol.index) os << ',' << m;
    os << ',' << r.codeword_bits;
    for (Eigen::Index i = 0; i < r.u.size(); ++i) os << ',' << format_double(r.u(i));
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(r.dither_hash));
    os << ',' << hex << '\n';
  }
}

}  // namespace ratelqg
