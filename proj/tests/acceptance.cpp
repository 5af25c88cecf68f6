// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0

// Prints one PASS/FAIL line per acceptance criterion; exit status is the number of failures.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "sim_fixture.hpp"
#include "ratelqg/serialize.hpp"

using namespace ratelqg;
using fx::m1;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

int failures = 0;

void criterion(int id, const char* title, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s  %2d  %-44s  %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", id, title, secs, o.detail.c_str());
  std::fflush(stdout);
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

TradeoffProgram program_at(const PlantModel& p, double gap) {
  const auto law = solve_control_riccati(p);
  auto prog = make_program(p, law, 0.0);
  prog.gamma = prog.floor + gap;
  return prog;
}

Outcome filter_dare_oracle() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  for (double a21 : {0.0, 0.5}) {
    const auto p = fx::scalar_si_plant(0.9, a21);
    const double f = a21 * a21;  // A21' W22^-1 A21 with W22 = 1
    // Fixed point of P = 1 + 0.81 / (1/P + 1 + f): (1+f) P^2 - (0.81+f) P - 1 = 0.
    const double want = fx::positive_root(1.0 + f, -(0.81 + f), -1.0);
    const auto ss = solve_filter_dare(make_filter_design(p, m1(1.0)), p);
    const double got = ss.Ptilde_inf(0, 0);
    o.require(std::abs(got - want) <= 1e-9, fmt("F=%.2f got %.10f want %.10f", f, got, want));
  }
  const double secs = elapsed_since(t0);
  o.require(secs < 1.0, fmt("runtime %.3fs", secs));
  if (o.pass) o.detail = "Ptilde(F=0) and Ptilde(F=0.25) match the quadratic roots to 1e-9";
  return o;
}

Outcome convexification_identity() {
  Outcome o;
  CounterRng rng(2026);
  int checked = 0;
  double worst = 0.0;
  for (const auto& p : {fx::scalar_si_plant(0.9, 0.5), fx::two_dim_plant()}) {
    const auto prog = program_at(p, 1.0);
    for (int k = 0; k < 100; ++k) {
      Matrix ph = oracle::random_spd(p.n, rng, 0.05, 3.0);
      while (linalg::min_eigenvalue(rate_lmi(prog, ph)) <= 1e-9) ph *= 0.7;
      const Matrix pt = tilde_from_hat(prog, ph);
      const double lhs = convex_objective(prog, ph, tight_slack(prog, ph));
      const double rhs = 0.5 * (linalg::log_det_spd(pt) - linalg::log_det_spd(ph));
      worst = std::max(worst, std::abs(lhs - rhs));
      ++checked;
    }
  }
  o.require(worst <= 1e-8, fmt("worst deviation %.3g", worst));
  o.detail = std::to_string(checked) + " points (1-D and 2-D), worst |diff| " + fmt("%.2e", worst);
  return o;
}

Outcome solver_vs_grid() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto p = fx::scalar_si_plant(0.9, 0.5);
  const auto base = program_at(p, 0.0);
  double worst = 0.0;
  for (double gap : {0.02, 0.1, 0.5, 2.0, 20.0}) {
    auto prog = base;
    prog.gamma = base.floor + gap;
    const double got = solve_tradeoff(prog).rate_bits;
    const double want = oracle::scalar_tradeoff(p, base.law.Theta(0, 0), base.floor, prog.gamma).grid_minimum_bits(1000000);
    const double rel = std::abs(got - want) / std::max(want, 1e-2);
    worst = std::max(worst, rel);
    o.require(rel <= 1e-4, fmt("gap %.2f: solver %.8f grid %.8f", gap, got, want));
  }
  const double secs = elapsed_since(t0);
  o.require(secs < 10.0, fmt("runtime %.2fs", secs));
  if (o.pass) o.detail = "5 budgets, worst relative deviation " + fmt("%.2e", worst);
  return o;
}

Outcome sensor_round_trip() {
  Outcome o;
  int solved = 0;
  double worst = 0.0;
  for (const auto& p : {fx::scalar_si_plant(0.9, 0.5), fx::scalar_si_plant(0.9, 0.0), fx::scalar_si_plant(1.2, 0.6),
                        fx::two_dim_plant()}) {
    const auto base = program_at(p, 0.0);
    for (double gap : {0.02, 0.1, 0.5, 2.0, 20.0}) {
      auto prog = base;
      prog.gamma = base.floor + gap;
      const auto d = recover_sensor(solve_tradeoff(prog), prog);
      const auto ss = solve_filter_dare(make_filter_design(p, d.C1, d.V), p);
      const double dev = std::max((ss.Phat_inf - d.Phat).norm(), (ss.Ptilde_inf - d.Ptilde).norm());
      worst = std::max(worst, dev);
      o.require(dev <= 1e-6, "n=" + std::to_string(p.n) + fmt(" gap %.2f deviation %.3g", gap, dev));
      ++solved;
    }
  }
  if (o.pass) o.detail = std::to_string(solved) + " instances, worst deviation " + fmt("%.2e", worst);
  return o;
}

Outcome dither_statistics() {
  Outcome o;
  const DitherQuantizer q{DitherQuantizer::design_delta(), 1};
  const int n = 100000;
  const DitherStream stream{0xd17e};
  CounterRng rng(11);
  std::vector<double> z(n), e(n);
  for (int t = 0; t < n; ++t) {
    z[t] = 3.0 * rng.normal();
    e[t] = subtractive_dither_quantize(q, m1(z[t]), gen_dither(stream, t, q)).reconstruction(0) - z[t];
  }
  double me = 0, mz = 0;
  for (int t = 0; t < n; ++t) me += e[t], mz += z[t];
  me /= n;
  mz /= n;
  double ve = 0, vz = 0, cze = 0, lag = 0;
  for (int t = 0; t < n; ++t) {
    ve += (e[t] - me) * (e[t] - me);
    vz += (z[t] - mz) * (z[t] - mz);
    cze += (z[t] - mz) * (e[t] - me);
    if (t > 0) lag += (e[t] - me) * (e[t - 1] - me);
  }
  const double var = ve / n, corr = cze / std::sqrt(ve * vz), ac = lag / ve;
  o.require(std::abs(me) <= 0.02 * q.delta, fmt("mean %.4f", me));
  o.require(var >= 0.95 && var <= 1.05, fmt("variance %.4f", var));
  o.require(std::abs(corr) < 0.02, fmt("input correlation %.4f", corr));
  o.require(std::abs(ac) < 0.02, fmt("lag-1 autocorrelation %.4f", ac));
  if (o.pass) o.detail = fmt("mean %.4f var %.4f corr %.4f", me, var, corr) + fmt(" lag1 %.4f", ac);
  return o;
}

Outcome coding_contracts() {
  Outcome o;
  const DitherQuantizer q{DitherQuantizer::design_delta(), 1};
  const double ptilde = fx::positive_root(1.0, -0.81, -1.0);
  const DitherStream ds{606};
  CounterRng rng(607);
  const int n = 100000;
  BitString stream;
  std::vector<LatticeSymbol> sent;
  std::vector<Vector> dithers;
  double bits = 0, entropy = 0, worst_kraft = 0;
  for (int t = 0; t < n; ++t) {
    const Vector d = gen_dither(ds, t, q);
    const auto model = build_model_pmf(m1(ptilde), m1(1.0), q, d);
    const auto& pmf = model.element_pmf(0, Vector());
    worst_kraft = std::max(worst_kraft, pmf.kraft_sum());
    const auto s = subtractive_dither_quantize(q, m1(std::sqrt(ptilde) * rng.normal()), d);
    const auto cw = encode_symbol(s.symbol, model);
    bits += static_cast<double>(cw.size());
    entropy += pmf.entropy_bits();
    if (t < 10000) {
      stream.append(cw);
      sent.push_back(s.symbol);
      dithers.push_back(d);
    }
  }
  std::size_t offset = 0;
  int mismatches = 0;
  for (std::size_t t = 0; t < sent.size(); ++t) {
    const auto got = decode_symbol(stream, build_model_pmf(m1(ptilde), m1(1.0), q, dithers[t]), offset);
    mismatches += !(got.symbol == sent[t]);
    offset += got.consumed;
  }
  o.require(worst_kraft <= 1.0, fmt("Kraft sum %.17g", worst_kraft));
  o.require(mismatches == 0 && offset == stream.size(), std::to_string(mismatches) + " round-trip mismatches");
  o.require(bits / n <= entropy / n + 2.0, fmt("length %.4f entropy %.4f", bits / n, entropy / n));
  if (o.pass) {
    o.detail = fmt("max Kraft %.6f, 10^4 lossless, L %.4f H %.4f bits", worst_kraft, bits / n, entropy / n);
  }
  return o;
}

struct EndToEnd {
  fx::SimSetup setup;
  SimReport report;
  BoundVerdicts verdicts;
  double seconds = 0.0;
};

const EndToEnd& end_to_end() {
  static const EndToEnd run = [] {
    EndToEnd r;
    const auto p = fx::scalar_si_plant();
    r.setup = fx::design_at(p, fx::unit_sensor_budget(p), 200000);
    r.setup.config.warmup = 1000;
    const auto t0 = std::chrono::steady_clock::now();
    r.report = run_replicas(r.setup.config, 4, 4);
    r.seconds = elapsed_since(t0);
    r.verdicts = check_bounds(r.report, r.setup.program, r.setup.design.Phat, 0.1);
    return r;
  }();
  return run;
}

Outcome sandwich() {
  Outcome o;
  const auto& r = end_to_end();
  const double lo = r.verdicts.converse_rate - 0.1;
  const double hi = r.report.theoretical_rate + rate_gap_k(1) + 0.1;
  const double b = r.report.avg_bits_per_step;
  o.require(std::isfinite(lo), "converse reference unavailable: " + r.verdicts.note);
  o.require(b >= lo && b <= hi, fmt("bits %.4f outside [%.4f, %.4f]", b, lo, hi));
  o.require(r.seconds < 60.0, fmt("runtime %.1fs", r.seconds));
  o.detail += fmt("%.4f bits/step in [%.4f, %.4f]", b, lo, hi) + fmt(", SE %.4f, sim %.1fs", r.report.bits_std_error, r.seconds);
  return o;
}

Outcome covariance_and_cost() {
  Outcome o;
  const auto& r = end_to_end();
  const double rel_p = (r.report.empirical_Phat - r.setup.design.Phat).norm() / r.setup.design.Phat.norm();
  const double rel_c = std::abs(r.report.avg_control_cost - r.report.predicted_control_cost) / r.report.predicted_control_cost;
  o.require(rel_p <= 0.05, fmt("posterior covariance off by %.2f%%", 100 * rel_p));
  o.require(rel_c <= 0.03, fmt("cost off by %.2f%%", 100 * rel_c));
  o.detail += fmt("Phat %.4f vs %.4f", r.report.empirical_Phat(0, 0), r.setup.design.Phat(0, 0)) +
              fmt(", cost %.4f vs %.4f", r.report.avg_control_cost, r.report.predicted_control_cost);
  return o;
}

Outcome monotone_sweep() {
  Outcome o;
  const auto p = fx::scalar_si_plant(0.9, 0.5);
  o.require(linalg::pbh_detectable(p.A21, p.A11).passed, "fixture is not SI-detectable");
  const auto base = program_at(p, 0.0);
  // Zero-sensor reference: side information alone.
  const auto zero = solve_filter_dare(make_filter_design(p, Matrix::Zero(1, 1)), p);
  const double zero_rate = evaluate_rate(zero.Phat_inf, zero.Ptilde_inf);
  const double zero_cost = evaluate_control_cost(zero.Phat_inf, base.law, p);
  const auto curve = sweep_tradeoff(base, log_spaced(base.floor * 1.01, 2.0 * zero_cost, 20));
  o.require(curve.size() == 20, "sweep length " + std::to_string(curve.size()));
  for (std::size_t i = 0; i < curve.size(); ++i) {
    o.require(curve[i].ok, "row " + std::to_string(i) + ": " + curve[i].error);
    if (i == 0 || !curve[i].ok || !curve[i - 1].ok) continue;
    const double tol = nats_to_bits(curve[i].kkt_residual + curve[i - 1].kkt_residual);
    o.require(curve[i].rate_bits <= curve[i - 1].rate_bits + tol, "rate increases at row " + std::to_string(i));
  }
  const double end = curve.back().rate_bits;
  o.require(std::abs(end - zero_rate) <= 1e-6, fmt("endpoint %.3g vs zero-sensor %.3g", end, zero_rate));
  if (o.pass) {
    o.detail = fmt("rate %.4f -> %.2e bits, zero-sensor value %.1e", curve.front().rate_bits, end, zero_rate);
  }
  return o;
}

Outcome reproducibility() {
  Outcome o;
  const auto p = fx::two_dim_plant();
  const auto base = program_at(p, 0.0);
  auto s = fx::design_at(p, base.floor + 1.0, 20000, 314159);
  auto render = [&](int threads) {
    std::vector<StepRecord> trace;
    std::vector<Codeword> frames;
    const auto rep = run_replicas(s.config, 3, threads, {&trace, &frames});
    std::ostringstream csv;
    write_trace_csv(csv, trace, p);
    std::string bits;
    for (const auto& f : frames) bits += f.to_string();
    return std::make_pair(csv.str() + bits, dump(report_to_json(rep)));
  };
  const auto a = render(1), b = render(1), c = render(3);
  o.require(a.first == b.first && a.first == c.first, "trace or codeword bytes differ between reruns");
  o.require(a.second == b.second && a.second == c.second, "report bytes differ between reruns");
  s.config.seed += 1;
  o.require(render(1).second != a.second, "a different seed produced the same report");
  if (o.pass) o.detail = std::to_string(a.first.size() + a.second.size()) + " bytes identical across 3 reruns";
  return o;
}

}  // namespace

int main() {
  criterion(1, "filter DARE matches closed-form roots", filter_dare_oracle);
  criterion(2, "convexification identity", convexification_identity);
  criterion(3, "solver within 1e-4 of grid oracle", solver_vs_grid);
  criterion(4, "sensor round trip through filter DARE", sensor_round_trip);
  criterion(5, "subtractive dither statistics", dither_statistics);
  criterion(6, "coding contracts", coding_contracts);
  criterion(7, "rate sandwich on end-to-end fixture", sandwich);
  criterion(8, "posterior covariance and cost match", covariance_and_cost);
  criterion(9, "monotone sweep reaching zero-sensor rate", monotone_sweep);
  criterion(10, "byte-identical reruns", reproducibility);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
