// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "ratelqg/errors.hpp"
#include "ratelqg/kalman.hpp"
#include "ratelqg/linalg.hpp"
#include "ratelqg/lqr.hpp"
#include "ratelqg/plant.hpp"
#include "ratelqg/ratedist.hpp"
#include "ratelqg/simloop.hpp"

namespace ratelqg {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.3.0";

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

/// Row-major nested array to a rows x cols matrix. `rows` or `cols` of zero
/// accepts an absent or empty array.
inline Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  Matrix m(rows, cols);
  if (rows == 0 || cols == 0) {
    if (!j.is_null() && !(j.is_array() && (j.empty() || (j.size() == static_cast<std::size_t>(rows))))) {
      throw InputError("block " + name + " must be empty");
    }
    return m;
  }
  if (!j.is_array() || j.size() != static_cast<std::size_t>(rows)) {
    throw InputError("block " + name + " must have " + std::to_string(rows) + " rows");
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || row.size() != static_cast<std::size_t>(cols)) {
      throw InputError("block " + name + " row " + std::to_string(i) + " must have " + std::to_string(cols) +
                       " entries");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw InputError("block " + name + " has a non-numeric entry");
      m(i, c) = v.get<double>();
    }
  }
  return m;
}

inline Vector vector_from_json(const json& j, Eigen::Index size, const std::string& name) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(size)) {
    throw InputError(name + " must have " + std::to_string(size) + " entries");
  }
  Vector v(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    const json& e = j[static_cast<std::size_t>(i)];
    if (!e.is_number()) throw InputError(name + " has a non-numeric entry");
    v(i) = e.get<double>();
  }
  return v;
}

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw InputError("unknown key '" + key + "' in " + where);
  }
}

inline Eigen::Index read_dim(const json& j, const char* key) {
  if (!j.contains(key)) throw InputError(std::string("missing key '") + key + "'");
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw InputError(std::string(key) + " must be a non-negative integer");
  }
  return static_cast<Eigen::Index>(v.get<long long>());
}

inline const json& block(const json& j, const char* key, bool required) {
  static const json kNull;
  if (j.contains(key)) return j.at(key);
  if (required) throw InputError(std::string("missing block '") + key + "'");
  return kNull;
}

}  // namespace detail

inline PlantModel plant_from_json(const json& j) {
  detail::reject_unknown_keys(
      j, {"n", "m", "u", "A11", "A12", "A21", "A22", "B", "W11", "W22", "Q", "R", "x0_mean", "x0_cov"}, "plant");
  PlantModel p;
  p.n = detail::read_dim(j, "n");
  p.m = detail::read_dim(j, "m");
  p.u = detail::read_dim(j, "u");
  if (p.n == 0) throw InputError("n must be positive: nothing to encode");
  const bool has_m = p.m > 0;
  const Eigen::Index d = p.n + p.m;
  p.A11 = matrix_from_json(detail::block(j, "A11", true), p.n, p.n, "A11");
  p.A12 = matrix_from_json(detail::block(j, "A12", has_m), p.n, p.m, "A12");
  p.A21 = matrix_from_json(detail::block(j, "A21", has_m), p.m, p.n, "A21");
  p.A22 = matrix_from_json(detail::block(j, "A22", has_m), p.m, p.m, "A22");
  p.B = matrix_from_json(detail::block(j, "B", p.u > 0), d, p.u, "B");
  p.W11 = matrix_from_json(detail::block(j, "W11", true), p.n, p.n, "W11");
  p.W22 = matrix_from_json(detail::block(j, "W22", has_m), p.m, p.m, "W22");
  p.Q = matrix_from_json(detail::block(j, "Q", true), d, d, "Q");
  p.R = matrix_from_json(detail::block(j, "R", p.u > 0), p.u, p.u, "R");
  if (j.contains("x0_mean")) p.x0_mean = vector_from_json(j.at("x0_mean"), d, "x0_mean");
  if (j.contains("x0_cov")) p.x0_cov = matrix_from_json(j.at("x0_cov"), d, d, "x0_cov");
  check_dimensions(p);
  return p;
}

inline json plant_to_json(const PlantModel& p) {
  json j;
  j["n"] = p.n;
  j["m"] = p.m;
  j["u"] = p.u;
  j["A11"] = matrix_to_json(p.A11);
  j["A12"] = matrix_to_json(p.A12);
  j["A21"] = matrix_to_json(p.A21);
  j["A22"] = matrix_to_json(p.A22);
  j["B"] = matrix_to_json(p.B);
  j["W11"] = matrix_to_json(p.W11);
  j["W22"] = matrix_to_json(p.W22);
  j["Q"] = matrix_to_json(p.Q);
  j["R"] = matrix_to_json(p.R);
  if (p.x0_mean) j["x0_mean"] = vector_to_json(*p.x0_mean);
  if (p.x0_cov) j["x0_cov"] = matrix_to_json(*p.x0_cov);
  return j;
}

inline json law_to_json(const ControlLaw& law) {
  return {{"S", matrix_to_json(law.S)},
          {"K", matrix_to_json(law.K)},
          {"Theta", matrix_to_json(law.Theta)},
          {"residual", law.residual},
          {"iterations", law.iterations}};
}

inline ControlLaw law_from_json(const json& j, const PlantModel& p) {
  detail::reject_unknown_keys(j, {"S", "K", "Theta", "residual", "iterations"}, "control_law");
  ControlLaw law;
  law.S = matrix_from_json(detail::block(j, "S", true), p.dim(), p.dim(), "S");
  law.K = matrix_from_json(detail::block(j, "K", p.u > 0), p.u, p.dim(), "K");
  law.Theta = matrix_from_json(detail::block(j, "Theta", true), p.n, p.n, "Theta");
  if (j.contains("residual")) law.residual = j.at("residual").get<double>();
  if (j.contains("iterations")) law.iterations = j.at("iterations").get<int>();
  return law;
}

/// Parses text, mapping syntax errors to InputError with the byte offset.
inline json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(source + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
  if (!out) throw InputError("write failed: " + path);
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Everything needed to simulate a design without re-solving.
struct DesignFile {
  PlantModel model;
  ControlLaw law;
  SensorDesign sensor;
  double gamma = std::numeric_limits<double>::quiet_NaN();
  json provenance = json::object();
};

inline json design_to_json(const DesignFile& d) {
  json sensor = {{"C1", matrix_to_json(d.sensor.C1)},
                 {"V", matrix_to_json(d.sensor.V)},
                 {"Phat", matrix_to_json(d.sensor.Phat)},
                 {"Ptilde", matrix_to_json(d.sensor.Ptilde)},
                 {"rate_bits", d.sensor.rate_bits},
                 {"control_cost", d.sensor.control_cost}};
  json prov = d.provenance;
  prov["gamma"] = d.gamma;
  return {{"format", "ratelqg-design"},
          {"plant", plant_to_json(d.model)},
          {"control_law", law_to_json(d.law)},
          {"sensor", sensor},
          {"provenance", prov}};
}

/// Reads a design. The control law is recomputed when absent; Phat and Ptilde
/// are recomputed from C1 through the filter DARE when absent.
inline DesignFile design_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"format", "plant", "control_law", "sensor", "provenance"}, "design");
  if (j.contains("format") && j.at("format") != "ratelqg-design") throw InputError("not a design file");
  DesignFile d;
  d.model = plant_from_json(detail::block(j, "plant", true));
  require_valid(d.model);
  d.law = j.contains("control_law") ? law_from_json(j.at("control_law"), d.model) : solve_control_riccati(d.model);

  const json& s = detail::block(j, "sensor", true);
  detail::reject_unknown_keys(s, {"C1", "V", "Phat", "Ptilde", "rate_bits", "control_cost"}, "sensor");
  const Eigen::Index n = d.model.n;
  d.sensor.C1 = matrix_from_json(detail::block(s, "C1", true), n, n, "C1");
  d.sensor.V = s.contains("V") ? matrix_from_json(s.at("V"), n, n, "V") : Matrix::Identity(n, n);
  if (s.contains("Phat") && s.contains("Ptilde")) {
    d.sensor.Phat = matrix_from_json(s.at("Phat"), n, n, "Phat");
    d.sensor.Ptilde = matrix_from_json(s.at("Ptilde"), n, n, "Ptilde");
  } else {
    const auto ss = solve_filter_dare(make_filter_design(d.model, d.sensor.C1, d.sensor.V), d.model);
    d.sensor.Phat = ss.Phat_inf;
    d.sensor.Ptilde = ss.Ptilde_inf;
  }
  d.sensor.rate_bits = evaluate_rate(d.sensor.Phat, d.sensor.Ptilde);
  d.sensor.control_cost = evaluate_control_cost(d.sensor.Phat, d.law, d.model);
  if (j.contains("provenance")) {
    d.provenance = j.at("provenance");
    if (d.provenance.contains("gamma") && d.provenance.at("gamma").is_number()) {
      d.gamma = d.provenance.at("gamma").get<double>();
    }
  }
  if (!std::isfinite(d.gamma)) d.gamma = d.sensor.control_cost;
  return d;
}

inline json verdicts_to_json(const BoundVerdicts& v) {
  json j = {{"converse_ok", v.converse_ok},
            {"achievability_ok", v.achievability_ok},
            {"cost_ok", v.cost_ok},
            {"lemma1_ok", v.lemma1_ok},
            {"converse_margin", v.converse_margin},
            {"achievability_margin", v.achievability_margin},
            {"cost_margin", v.cost_margin},
            {"lemma1_margin", v.lemma1_margin},
            {"converse_rate_bits", v.converse_rate},
            {"slack_bits", v.slack_used}};
  if (!v.note.empty()) j["note"] = v.note;
  return j;
}

inline json report_to_json(const SimReport& r) {
  return {{"avg_bits_per_step", r.avg_bits_per_step},
          {"bits_std_error", r.bits_std_error},
          {"avg_control_cost", r.avg_control_cost},
          {"cost_std_error", r.cost_std_error},
          {"empirical_Phat", matrix_to_json(r.empirical_Phat)},
          {"theoretical_rate_bits", r.theoretical_rate},
          {"predicted_control_cost", r.predicted_control_cost},
          {"rate_gap_k", r.rate_gap_k},
          {"avg_model_entropy_bits", r.avg_model_entropy_bits},
          {"max_codec_deviation", r.max_codec_deviation},
          {"steps_averaged", r.steps_averaged},
          {"replicas", r.replicas},
          {"warnings", r.warnings},
          {"verdicts", verdicts_to_json(r.verdicts)},
          {"tolerances", {{"lemma1_relative", kLemma1Tolerance}, {"cost_relative", kCostTolerance}}}};
}

}  // namespace ratelqg
