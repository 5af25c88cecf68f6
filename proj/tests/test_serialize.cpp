// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "sim_fixture.hpp"
#include "ratelqg/serialize.hpp"

using namespace ratelqg;

TEST(PlantJson, RoundTrip) {
  auto p = fx::two_dim_plant();
  p.x0_mean = Vector::Constant(3, 0.5);
  const PlantModel q = plant_from_json(plant_to_json(p));
  EXPECT_EQ(q.n, 2);
  EXPECT_EQ(q.A11, p.A11);
  EXPECT_EQ(q.B, p.B);
  EXPECT_EQ(q.W11, p.W11);
  ASSERT_TRUE(q.x0_mean.has_value());
  EXPECT_EQ(*q.x0_mean, *p.x0_mean);
  EXPECT_FALSE(q.x0_cov.has_value());
  EXPECT_EQ(dump(plant_to_json(q)), dump(plant_to_json(p)));
}

TEST(PlantJson, RejectsUnknownKeys) {
  json j = plant_to_json(fx::scalar_si_plant());
  j["A13"] = json::array();
  try {
    plant_from_json(j);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown key 'A13'"), std::string::npos);
  }
}

TEST(PlantJson, RejectsBadShapesAndMissingBlocks) {
  json j = plant_to_json(fx::scalar_si_plant());
  j["B"] = {{1.0}};
  EXPECT_THROW(plant_from_json(j), InputError);
  j = plant_to_json(fx::scalar_si_plant());
  j.erase("W22");
  EXPECT_THROW(plant_from_json(j), InputError);
  j = plant_to_json(fx::scalar_si_plant());
  j["Q"][0][0] = "one";
  EXPECT_THROW(plant_from_json(j), InputError);
  j = plant_to_json(fx::scalar_si_plant());
  j["n"] = 0;
  try {
    plant_from_json(j);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("nothing to encode"), std::string::npos);
  }
}

TEST(PlantJson, NoSideInformationMayOmitEmptyBlocks) {
  const json j = json::parse(R"({"n":1,"m":0,"u":1,"A11":[[0.5]],"B":[[1]],"W11":[[1]],"Q":[[1]],"R":[[1]]})");
  const auto p = plant_from_json(j);
  EXPECT_EQ(p.m, 0);
  EXPECT_EQ(p.A12.cols(), 0);
  EXPECT_TRUE(validate_plant(p).ok());
}

TEST(PlantJson, ParseErrorsCarryLocation) {
  try {
    parse_json_text("{\"n\": 1,,}", "cfg.json");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.json: parse error at byte"), std::string::npos);
  }
}

TEST(DesignJson, RoundTripPreservesEverything) {
  const auto p = fx::scalar_si_plant(0.9, 0.5);
  const auto s = fx::design_at(p, fx::cost_floor(p) * 1.5, 0);
  DesignFile d;
  d.model = p;
  d.law = s.program.law;
  d.sensor = s.design;
  d.gamma = s.program.gamma;
  const DesignFile e = design_from_json(json::parse(dump(design_to_json(d))));
  EXPECT_EQ(e.sensor.C1, d.sensor.C1);
  EXPECT_EQ(e.sensor.Phat, d.sensor.Phat);
  EXPECT_EQ(e.law.K, d.law.K);
  EXPECT_EQ(e.gamma, d.gamma);
  EXPECT_EQ(dump(design_to_json(e)), dump(design_to_json(d)));
}

TEST(DesignJson, HandWrittenSensorIsCompleted) {
  const auto p = fx::scalar_si_plant();
  json j;
  j["plant"] = plant_to_json(p);
  j["sensor"] = {{"C1", {{1.0}}}};
  const DesignFile d = design_from_json(j);
  EXPECT_NEAR(d.sensor.Ptilde(0, 0), fx::positive_root(1.0, -0.81, -1.0), 1e-9);
  EXPECT_NEAR(d.gamma, d.sensor.control_cost, 1e-15);
  EXPECT_EQ(d.law.S, solve_control_riccati(p).S);
}
