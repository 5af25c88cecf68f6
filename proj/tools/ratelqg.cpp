// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: design, tradeoff, simulate, verify, rerun.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "ratelqg/bitstream.hpp"
#include "ratelqg/kalman.hpp"
#include "ratelqg/lqr.hpp"
#include "ratelqg/plant.hpp"
#include "ratelqg/ratedist.hpp"
#include "ratelqg/serialize.hpp"
#include "ratelqg/simloop.hpp"

namespace {

using namespace ratelqg;

enum ExitCode : int { kOk = 0, kInput = 1, kInfeasible = 2, kVerdict = 3, kNumerical = 4 };

struct Options {
  std::string command;
  std::string config;
  std::string out;
  std::string trace;
  std::string bitstream;
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double gamma_min = std::numeric_limits<double>::quiet_NaN();
  double gamma_max = std::numeric_limits<double>::quiet_NaN();
  int points = 20;
  long long steps = 200000;
  long long warmup = 1000;
  std::uint64_t seed = 1;
  int replicas = 1;
  double slack_bits = -1.0;
  double delta = std::numeric_limits<double>::quiet_NaN();
};

json options_to_json(const Options& o) {
  json p;
  p["config"] = o.config;
  p["out"] = o.out;
  if (o.command == "design") p["gamma"] = o.gamma;
  if (o.command == "tradeoff") {
    p["gamma_min"] = o.gamma_min;
    p["gamma_max"] = o.gamma_max;
    p["points"] = o.points;
  }
  if (o.command == "simulate") {
    p["steps"] = o.steps;
    p["warmup"] = o.warmup;
    p["seed"] = o.seed;
    p["replicas"] = o.replicas;
    p["slack_bits"] = o.slack_bits;
    if (std::isfinite(o.delta)) p["delta"] = o.delta;
    if (!o.trace.empty()) p["trace"] = o.trace;
    if (!o.bitstream.empty()) p["bitstream"] = o.bitstream;
  }
  return p;
}

Options options_from_manifest(const json& m) {
  Options o;
  o.command = m.at("command").get<std::string>();
  const json& p = m.at("parameters");
  auto get = [&](const char* key, auto& field) {
    if (p.contains(key)) p.at(key).get_to(field);
  };
  get("config", o.config);
  get("out", o.out);
  get("trace", o.trace);
  get("bitstream", o.bitstream);
  get("gamma", o.gamma);
  get("gamma_min", o.gamma_min);
  get("gamma_max", o.gamma_max);
  get("points", o.points);
  get("steps", o.steps);
  get("warmup", o.warmup);
  get("seed", o.seed);
  get("replicas", o.replicas);
  get("slack_bits", o.slack_bits);
  get("delta", o.delta);
  return o;
}

void write_manifest(const Options& o, const std::vector<std::string>& outputs) {
  json m;
  m["command"] = o.command;
  m["config"] = o.config;
  m["parameters"] = options_to_json(o);
  m["tool_version"] = kToolVersion;
  m["seed"] = o.seed;
  m["outputs"] = outputs;
  write_text_file(o.out + ".manifest.json", dump(m));
}

int thread_cap() {
  if (const char* env = std::getenv("RATELQG_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) return v;
    } catch (const std::exception&) {
    }
    throw InputError("RATELQG_THREADS must be a positive integer");
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

PlantModel load_valid_plant(const std::string& path) {
  PlantModel p = plant_from_json(read_json_file(path));
  require_valid(p);
  return p;
}

int cmd_design(const Options& o) {
  const PlantModel p = load_valid_plant(o.config);
  const ControlLaw law = solve_control_riccati(p);
  const TradeoffProgram prog = make_program(p, law, o.gamma);
  const SolverOptions opts;
  const SdpSolution sol = solve_tradeoff(prog, opts);
  DesignFile d;
  d.model = p;
  d.law = law;
  d.sensor = recover_sensor(sol, prog);
  d.gamma = o.gamma;
  d.provenance = {{"floor", prog.floor},
                  {"gap_tolerance", opts.gap_tolerance},
                  {"kkt_residual", sol.kkt_residual},
                  {"newton_iterations", sol.newton_iterations},
                  {"objective_bits", sol.rate_bits},
                  {"tool_version", kToolVersion}};
  json margins = json::object();
  for (const auto& m : sol.feasibility_margins) margins[m.name] = m.min_eigenvalue;
  d.provenance["feasibility_margins"] = margins;
  write_text_file(o.out, dump(design_to_json(d)));
  write_manifest(o, {o.out});
  std::printf("rate_bits %.17g\ncontrol_cost %.17g\nfloor %.17g\n", d.sensor.rate_bits, d.sensor.control_cost,
              prog.floor);
  return kOk;
}

int cmd_tradeoff(const Options& o) {
  if (o.points < 1) throw InputError("--points must be at least 1");
  double hi = o.gamma_max;
  if (std::isnan(hi)) {
    if (o.points != 1) throw InputError("--gamma-max is required when --points > 1");
    hi = o.gamma_min;
  }
  if (hi < o.gamma_min) throw InputError("--gamma-max must not be below --gamma-min");
  const PlantModel p = load_valid_plant(o.config);
  const ControlLaw law = solve_control_riccati(p);
  const TradeoffProgram base = make_program(p, law, o.gamma_min);
  if (!(o.gamma_min > base.floor + budget_margin(base.floor))) {
    throw InfeasibleError("budget below perfect-sensing floor (gamma_min " + format_double(o.gamma_min) +
                          ", Tr(SW) " + format_double(base.floor) + ")");
  }
  const auto curve = sweep_tradeoff(base, log_spaced(o.gamma_min, hi, o.points));
  std::ofstream csv(o.out, std::ios::binary);
  if (!csv) throw InputError("cannot write " + o.out);
  write_curve_csv(csv, curve);
  csv.close();
  write_manifest(o, {o.out});
  int failures = 0;
  for (const auto& pt : curve) {
    if (!pt.ok) {
      ++failures;
      std::fprintf(stderr, "gamma %.17g: %s\n", pt.gamma, pt.error.c_str());
    }
  }
  return failures == 0 ? kOk : kNumerical;
}

const char* first_failing(const BoundVerdicts& v, double& margin) {
  if (!v.converse_ok) return margin = v.converse_margin, "converse";
  if (!v.achievability_ok) return margin = v.achievability_margin, "achievability";
  if (!v.lemma1_ok) return margin = v.lemma1_margin, "lemma1";
  if (!v.cost_ok) return margin = v.cost_margin, "cost";
  return nullptr;
}

int cmd_simulate(const Options& o) {
  if (o.replicas < 1) throw InputError("--replicas must be at least 1");
  if (o.steps <= o.warmup) throw InputError("horizon must exceed warmup");
  const DesignFile d = design_from_json(read_json_file(o.config));

  SimConfig cfg;
  cfg.model = d.model;
  cfg.law = d.law;
  cfg.design = d.sensor;
  cfg.quantizer = DitherQuantizer{DitherQuantizer::design_delta(), d.model.n};
  if (std::isfinite(o.delta)) {
    if (!(o.delta > 0.0)) throw InputError("--delta must be positive");
    cfg.quantizer.delta = o.delta;
  }
  cfg.horizon = o.steps;
  cfg.warmup = o.warmup;
  cfg.seed = o.seed;
  cfg.replicas = o.replicas;
  cfg.slack_bits = o.slack_bits;
  cfg.gamma_design = d.gamma;

  std::vector<StepRecord> trace;
  std::vector<Codeword> frames;
  SimSinks sinks;
  if (!o.trace.empty()) sinks.trace = &trace;
  if (!o.bitstream.empty()) sinks.frames = &frames;

  SimReport rep = run_replicas(cfg, o.replicas, thread_cap(), sinks);
  const TradeoffProgram prog = make_program(d.model, d.law, d.gamma);
  rep.verdicts = check_aggregate(rep, prog, d.sensor.Phat, cfg.slack());

  json out;
  out["format"] = "ratelqg-report";
  out["report"] = report_to_json(rep);
  out["config"] = {{"design", o.config},
                   {"steps", o.steps},
                   {"warmup", o.warmup},
                   {"seed", o.seed},
                   {"replicas", o.replicas},
                   {"slack_bits", cfg.slack()},
                   {"delta", cfg.quantizer.delta},
                   {"gamma_design", d.gamma},
                   {"tool_version", kToolVersion}};
  write_text_file(o.out, dump(out));
  std::vector<std::string> outputs{o.out};
  if (!o.trace.empty()) {
    std::ofstream csv(o.trace, std::ios::binary);
    if (!csv) throw InputError("cannot write " + o.trace);
    write_trace_csv(csv, trace, d.model);
    outputs.push_back(o.trace);
  }
  if (!o.bitstream.empty()) {
    std::ofstream bs(o.bitstream, std::ios::binary);
    if (!bs) throw InputError("cannot write " + o.bitstream);
    write_bitstream(bs, frames);
    outputs.push_back(o.bitstream);
  }
  write_manifest(o, outputs);

  for (const auto& w : rep.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("avg_bits_per_step %.17g\navg_control_cost %.17g\n", rep.avg_bits_per_step, rep.avg_control_cost);
  double margin = 0.0;
  if (const char* which = first_failing(rep.verdicts, margin)) {
    std::fprintf(stderr, "verdict failed: %s margin %.17g%s%s\n", which, margin,
                 rep.verdicts.note.empty() ? "" : "; ", rep.verdicts.note.c_str());
    return kVerdict;
  }
  return kOk;
}

struct Row {
  std::string name;
  std::string status;  // PASS, FAIL or INFO
  std::string witness;
};

int cmd_verify(const Options& o) {
  const PlantModel p = plant_from_json(read_json_file(o.config));
  std::vector<Row> rows;
  const ValidationReport vr = validate_plant(p);
  for (const auto& c : vr.checks) {
    rows.push_back({c.name, c.passed ? "PASS" : "FAIL", format_double(c.witness) + (c.detail.empty() ? "" : " " + c.detail)});
  }
  if (vr.ok()) {
    try {
      const ControlLaw law = solve_control_riccati(p);
      rows.push_back({"control Riccati converged", "PASS", "residual " + format_double(law.residual)});
      Matrix acl = p.A();
      if (p.u > 0) acl += p.B * law.K;
      rows.push_back({"closed loop stable", "PASS", "spectral radius " + format_double(linalg::spectral_radius(acl))});
      rows.push_back({"perfect-sensing floor Tr(SW)", "INFO", format_double(closed_loop_cost_floor(p, law))});
    } catch (const Error& e) {
      rows.push_back({"control Riccati converged", "FAIL", e.what()});
    }
  }
  if (p.m > 0) {
    const auto si = linalg::pbh_detectable(p.A21, p.A11);
    rows.push_back({"(A21, A11) detectable from side information alone", "INFO",
                    si.passed ? "yes" : "no, rank deficiency " + std::to_string(si.worst_rank_deficiency)});
  }
  bool ok = true;
  for (const auto& r : rows) {
    std::printf("%-4s  %-52s  %s\n", r.status.c_str(), r.name.c_str(), r.witness.c_str());
    ok = ok && r.status != "FAIL";
  }
  return ok ? kOk : kInfeasible;
}

int dispatch(const Options& o) {
  if (o.command == "design") return cmd_design(o);
  if (o.command == "tradeoff") return cmd_tradeoff(o);
  if (o.command == "simulate") return cmd_simulate(o);
  if (o.command == "verify") return cmd_verify(o);
  throw InputError("unknown command '" + o.command + "'");
}

int run_guarded(const Options& o) {
  try {
    return dispatch(o);
  } catch (const InfeasibleError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInfeasible;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumerical;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInput;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInput;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ratelqg: minimum-bitrate sensing design for LQG control with decoder side information"};
  app.require_subcommand(1);
  Options o;

  auto* design = app.add_subcommand("design", "solve the rate/cost program at one budget and write a design file");
  design->add_option("--config", o.config, "plant config (JSON)")->required();
  design->add_option("--gamma", o.gamma, "control cost budget")->required();
  design->add_option("--out", o.out, "design file to write")->required();

  auto* tradeoff = app.add_subcommand("tradeoff", "tabulate the rate/cost curve over a log-spaced budget grid");
  tradeoff->add_option("--config", o.config, "plant config (JSON)")->required();
  tradeoff->add_option("--gamma-min", o.gamma_min, "smallest budget")->required();
  tradeoff->add_option("--gamma-max", o.gamma_max, "largest budget");
  tradeoff->add_option("--points", o.points, "grid size")->capture_default_str();
  tradeoff->add_option("--out", o.out, "CSV to write")->required();

  auto* simulate = app.add_subcommand("simulate", "bit-true closed-loop simulation of a design");
  simulate->add_option("--config", o.config, "design file from `design`")->required();
  simulate->add_option("--steps", o.steps, "horizon T")->capture_default_str();
  simulate->add_option("--warmup", o.warmup, "steps excluded from averages")->capture_default_str();
  simulate->add_option("--seed", o.seed, "master seed")->capture_default_str();
  simulate->add_option("--replicas", o.replicas, "independent replicas")->capture_default_str();
  simulate->add_option("--slack-bits", o.slack_bits, "bound slack in bits (default 0.1 n)");
  simulate->add_option("--delta", o.delta, "quantizer step (default 2 sqrt 3)");
  simulate->add_option("--out", o.out, "report to write")->required();
  simulate->add_option("--trace", o.trace, "per-step CSV trace of replica 0");
  simulate->add_option("--bitstream", o.bitstream, "bitstream file of replica 0");

  auto* verify = app.add_subcommand("verify", "check plant assumptions and print a diagnostic table");
  verify->add_option("--config", o.config, "plant config (JSON)")->required();

  std::string manifest;
  auto* rerun = app.add_subcommand("rerun", "replay a run from its manifest");
  rerun->add_option("--manifest", manifest, "manifest written next to a previous output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }

  if (rerun->parsed()) {
    try {
      o = options_from_manifest(read_json_file(manifest));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: bad manifest: %s\n", e.what());
      return kInput;
    }
  } else {
    o.command = app.get_subcommands().front()->get_name();
  }
  return run_guarded(o);
}
