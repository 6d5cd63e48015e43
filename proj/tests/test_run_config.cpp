#include <filesystem>
#include <fstream>
#include <functional>

#include <gtest/gtest.h>

#include "telemanip/run_config.hpp"

namespace telemanip {
namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "no error";
}

std::filesystem::path temp_file(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

TEST(RunConfig, DefaultsAreValid) {
  const RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_TRUE(c.input_is_generator());
  EXPECT_EQ(c.controller.preset_name, "P1");
  EXPECT_EQ(c.controller.horizon.N, 30);
  EXPECT_DOUBLE_EQ(c.controller.horizon.dt, 1.0 / 30.0);
  EXPECT_EQ(c.controller.robot.L1, 0.425);
  EXPECT_EQ(c.controller.liquid.l, 0.02);
  EXPECT_EQ(c.controller.liquid.h, 0.08);
  EXPECT_EQ(c.controller.liquid.d, 0.005);
  EXPECT_EQ(c.sim.control_rate, 30.0);
}

TEST(RunConfig, SerializeParseSerializeIsIdentity) {
  RunConfig c;
  c.controller.use_preset("P2");
  c.controller.horizon.N = 17;
  c.controller.liquid.d = 0.1 + 0.2;
  c.controller.solver.kernels = KernelMode::parallel;
  c.sim.seed = 18446744073709551615ull;
  c.sim.plant = PlantIntegrator::euler;
  c.sim.q_initial = Vec3(-1.1, 2.2, 1.0 / 3.0);
  c.input = "step";
  c.port = 0;
  const std::string once = serialize_config(c);
  const RunConfig back = parse_config(once);
  EXPECT_EQ(serialize_config(back), once);
  EXPECT_EQ(back.controller.liquid.d, c.controller.liquid.d);
  EXPECT_EQ(back.sim.seed, c.sim.seed);
  EXPECT_EQ(back.sim.q_initial, c.sim.q_initial);
  EXPECT_EQ(back.controller.solver.kernels, KernelMode::parallel);
  EXPECT_EQ(serialize_config(parse_config(serialize_config(RunConfig{}))),
            serialize_config(RunConfig{}));
}

TEST(RunConfig, PartialDocumentKeepsDefaults) {
  const RunConfig c = parse_config(R"({"horizon.N": 12, "weights.Q2": 3.5})");
  EXPECT_EQ(c.controller.horizon.N, 12);
  EXPECT_EQ(c.controller.weights.Q2, 3.5);
  EXPECT_EQ(c.controller.weights.Q1, RunConfig{}.controller.weights.Q1);
  EXPECT_EQ(c.sim.duration, 10.0);
}

TEST(RunConfig, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_NE(error_of([] { parse_config(R"({"horizon.M": 3})"); }).find("horizon.M"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_config(R"({"horizon.N": 2.5})"); }).find("integer"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_config(R"({"weights.R": [1, 2]})"); }).find("3 numbers"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_config(R"({"sim.seed": -1})"); }).find("sim.seed"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_config(R"({"solver.kernels": "gpu"})"); }).find("serial"),
            std::string::npos);
  EXPECT_NE(error_of([] { parse_config("[1, 2]"); }).find("object"), std::string::npos);
  EXPECT_NE(error_of([] { parse_config("{"); }).find("config"), std::string::npos);
}

TEST(RunConfig, ValidationNamesMissingInputFile) {
  RunConfig c;
  c.input = "/nonexistent/replay.csv";
  EXPECT_FALSE(c.input_is_generator());
  EXPECT_EQ(error_of([&] { c.validate(); }), "input file not found: /nonexistent/replay.csv");
  c = {};
  c.controller.horizon.N = 0;
  EXPECT_NE(error_of([&] { c.validate(); }), "no error");
  c = {};
  c.port = 70000;
  EXPECT_NE(error_of([&] { c.validate(); }).find("port"), std::string::npos);
}

TEST(RunConfig, LoadsFileAndReplay) {
  const auto replay = temp_file("telemanip_cfg_replay.csv",
                                "t,device_x,device_z,clutch\n0,0,0,1\n1,0.1,0,1\n");
  const auto cfg = temp_file("telemanip_cfg.json",
                             "{\"input\": \"" + replay.string() + "\", \"sim.duration\": 1.0}");
  const RunConfig c = load_config(cfg);
  EXPECT_NO_THROW(c.validate());
  const auto samples = load_input(c);
  ASSERT_EQ(samples.size(), 31u);
  EXPECT_EQ(samples.back().device_x, 0.1);
  EXPECT_NE(error_of([] { load_config("/nonexistent/cfg.json"); }).find("cannot open"),
            std::string::npos);
}

TEST(RunConfig, WeightsFile) {
  const auto good = temp_file("telemanip_w.json", R"({"Q1": [1, 2, 3], "Q2": 4, "R": [0.1, 0.1, 0.1]})");
  const Weights w = load_weights(good);
  EXPECT_EQ(w.Q1, Vec3(1, 2, 3));
  EXPECT_EQ(w.Q2, 4.0);
  const auto missing = temp_file("telemanip_w2.json", R"({"Q1": [1, 2, 3], "Q2": 4})");
  EXPECT_NE(error_of([&] { load_weights(missing); }).find("Q1, Q2 and R"), std::string::npos);
  const auto negative = temp_file("telemanip_w3.json", R"({"Q1": [1, 2, 3], "Q2": -4, "R": [0, 0, 0]})");
  EXPECT_NE(error_of([&] { load_weights(negative); }).find("non-negative"), std::string::npos);
}

TEST(RunConfig, GeneratorInputHonoursDuration) {
  RunConfig c;
  c.sim.duration = 2.0;
  c.input = "ramp";
  EXPECT_EQ(load_input(c).size(), 60u);
  EXPECT_EQ(generator_names().size(), 4u);
}

}  // namespace
}  // namespace telemanip
