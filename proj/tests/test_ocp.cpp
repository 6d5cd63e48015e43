#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "telemanip/ocp.hpp"
#include "test_support.hpp"

namespace telemanip {
namespace {

using testing::make_problem;
using testing::random_decision;

TEST(Presets, TableValues) {
  const Weights p1 = preset("P1");
  EXPECT_EQ(p1.Q1, Vec3(500.0, 500.0, 100.0));
  EXPECT_EQ(p1.Q2, 0.1);
  EXPECT_EQ(p1.R, Vec3::Constant(0.01));
  const Weights p2 = preset("p2");
  EXPECT_EQ(p2.Q1, Vec3(100.0, 100.0, 1.0));
  EXPECT_EQ(p2.Q2, 1000.0);
  EXPECT_EQ(p2.R, Vec3::Constant(0.01));
  EXPECT_THROW(preset("P3"), std::invalid_argument);
}

TEST(Presets, WeightValidation) {
  Weights w = preset("P1");
  w.R[1] = -1.0;
  EXPECT_THROW(w.validate(), std::invalid_argument);
  w = Weights{};
  EXPECT_THROW(w.validate(), std::invalid_argument);
  w.Q2 = 1.0;
  EXPECT_NO_THROW(w.validate());
}

TEST(Bounds, DefaultsAndValidation) {
  Bounds b = Bounds::defaults();
  EXPECT_NO_THROW(b.validate());
  EXPECT_DOUBLE_EQ(b.u_max[0], 8.0);
  EXPECT_DOUBLE_EQ(b.qdot_min[2], -M_PI);
  b.u_min[1] = 9.0;
  EXPECT_THROW(b.validate(), std::invalid_argument);
}

TEST(Layout, OffsetsAndDimension) {
  const DecisionLayout lay(30);
  EXPECT_EQ(lay.size(), 11 * 30);
  EXPECT_EQ(lay.control(0), 0);
  EXPECT_EQ(lay.control(29), 87);
  EXPECT_EQ(lay.state(1), 90);
  EXPECT_EQ(lay.state(30), 90 + 8 * 29);
}

TEST(Problem, BoundsVectorsLeaveSloshFree) {
  const OcpProblem p = make_problem(4);
  const Eigen::VectorXd lo = p.lower_bounds();
  const Eigen::VectorXd hi = p.upper_bounds();
  const DecisionLayout lay = p.layout();
  for (int k = 1; k <= 4; ++k) {
    EXPECT_TRUE(std::isinf(lo[lay.state(k) + 6]));
    EXPECT_TRUE(std::isinf(hi[lay.state(k) + 7]));
    EXPECT_EQ(lo[lay.state(k) + 3], -M_PI);
    EXPECT_EQ(hi[lay.state(k)], 2.0 * M_PI);
  }
  EXPECT_EQ(lo[lay.control(2) + 1], -8.0);
}

TEST(Problem, RejectsBadInput) {
  StateVec xi0 = StateVec::Zero();
  HorizonConfig h;
  h.N = 3;
  ReferenceTrajectory refs{std::vector<Pose2D>(2)};
  EXPECT_THROW(build_problem(xi0, refs, preset("P1"), Bounds::defaults(), h, {}, {}),
               std::invalid_argument);
  refs.poses.resize(3);
  xi0[0] = NAN;
  EXPECT_THROW(build_problem(xi0, refs, preset("P1"), Bounds::defaults(), h, {}, {}),
               std::invalid_argument);
  h.N = 0;
  EXPECT_THROW(h.validate(), std::invalid_argument);
}

TEST(Problem, ClampsInitialStateIntoBounds) {
  StateVec xi0 = StateVec::Zero();
  xi0[3] = 5.0;
  HorizonConfig h;
  h.N = 2;
  const OcpProblem p = build_problem(xi0, ReferenceTrajectory{std::vector<Pose2D>(2)},
                                     preset("P1"), Bounds::defaults(), h, {}, {});
  EXPECT_TRUE(p.xi0_clamped);
  EXPECT_DOUBLE_EQ(p.xi0[3], M_PI);
}

TEST(Objective, HandComputedStage) {
  const Weights w{Vec3(2.0, 3.0, 5.0), 7.0, Vec3(0.5, 0.25, 0.125)};
  StateVec xi = StateVec::Zero();
  xi[6] = 0.1;
  const Pose2D p0 = forward_kinematics(Vec3::Zero(), RobotParams{});
  const ReferenceTrajectory refs{{{p0.x - 0.1, p0.z + 0.2, 0.3}}};
  const std::vector<StateVec> states{xi};
  const std::vector<ControlInput> controls{Vec3(1.0, 2.0, 4.0)};
  const double expected = 2.0 * 0.01 + 3.0 * 0.04 + 5.0 * 0.09 + 7.0 * 0.01 +
                          0.5 * 1.0 + 0.25 * 4.0 + 0.125 * 16.0;
  EXPECT_NEAR(objective(states, controls, refs, w, RobotParams{}), expected, 1e-12);
  EXPECT_THROW(objective(states, {}, refs, w, RobotParams{}), std::invalid_argument);
}

TEST(Rollout, HasZeroDefects) {
  const OcpProblem p = make_problem(6);
  std::mt19937_64 rng(21);
  std::vector<ControlInput> u;
  for (int k = 0; k < 6; ++k) u.push_back(testing::random_vec3(rng, -8.0, 8.0));
  const Eigen::VectorXd z = rollout(p, u);
  EXPECT_EQ(dynamics_defects(p, z).lpNorm<Eigen::Infinity>(), 0.0);
  const OcpSolution s = unpack_solution(p, z);
  EXPECT_EQ(s.decision(), z);
  EXPECT_EQ(s.controls[3], u[3]);
}

TEST(Defects, MatchEulerResiduals) {
  const OcpProblem p = make_problem(3);
  std::mt19937_64 rng(22);
  const Eigen::VectorXd z = random_decision(p, rng);
  const Eigen::VectorXd c = dynamics_defects(p, z);
  const DecisionLayout lay = p.layout();
  const StateVec x1 = z.segment<8>(lay.state(1));
  const StateVec x2 = z.segment<8>(lay.state(2));
  const StateVec expected =
      x2 - euler_step(x1, z.segment<3>(lay.control(1)), p.horizon.dt, p.robot, p.liquid);
  EXPECT_LT((c.segment<8>(8) - expected).norm(), 1e-14);
  EXPECT_THROW(dynamics_defects(p, Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST(WarmStart, ShiftsControlsAndMultipliers) {
  const OcpProblem p = make_problem(4);
  OcpSolution prev;
  for (int k = 0; k < 4; ++k) prev.controls.push_back(Vec3::Constant(k + 1.0));
  prev.states.assign(4, StateVec::Zero());
  prev.multipliers = Eigen::VectorXd::LinSpaced(32, 0.0, 31.0);
  const InitialGuess g = shift_warm_start(prev, p);
  const OcpSolution s = unpack_solution(p, g.z);
  EXPECT_EQ(s.controls[0], Vec3::Constant(2.0));
  EXPECT_EQ(s.controls[2], Vec3::Constant(4.0));
  EXPECT_EQ(s.controls[3], Vec3::Constant(4.0));
  EXPECT_EQ(g.multipliers[0], 8.0);
  EXPECT_EQ(g.multipliers[31], 31.0);
  EXPECT_EQ(dynamics_defects(p, g.z).lpNorm<Eigen::Infinity>(), 0.0);

  const InitialGuess cold = shift_warm_start(std::nullopt, p);
  EXPECT_EQ(unpack_solution(p, cold.z).controls[1], Vec3::Zero());
  EXPECT_EQ(cold.multipliers.norm(), 0.0);
}

}  // namespace
}  // namespace telemanip
