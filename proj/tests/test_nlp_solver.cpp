#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <Eigen/Dense>

#include "telemanip/nlp_solver.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace telemanip {
namespace {

using testing::make_problem;

// 0.5 z^T A z - b^T z with a dense Newton model.
class Quadratic : public BoxObjective {
 public:
  Quadratic(Eigen::MatrixXd A, Eigen::VectorXd b) : A_(std::move(A)), b_(std::move(b)) {}

  double value(const Eigen::VectorXd& z) override { return 0.5 * z.dot(A_ * z) - b_.dot(z); }

  double linearize(const Eigen::VectorXd& z, Eigen::VectorXd& grad) override {
    grad = A_ * z - b_;
    return value(z);
  }

  void newton_direction(const std::vector<char>& active, const Eigen::VectorXd& grad,
                        Eigen::VectorXd& dir) override {
    std::vector<int> free;
    for (int i = 0; i < grad.size(); ++i) {
      if (!active[i]) free.push_back(i);
    }
    dir = Eigen::VectorXd::Zero(grad.size());
    if (free.empty()) return;
    const Eigen::MatrixXd Aff = A_(free, free);
    const Eigen::VectorXd gf = grad(free);
    const Eigen::VectorXd step = Aff.llt().solve(-gf);
    dir(free) = step;
  }

 private:
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
};

TEST(BoxSolver, ScalarMinimumOutsideBoxLandsOnBound) {
  // (z - 1)^2 on [0, 0.5]
  Quadratic f(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Constant(1, 2.0));
  Eigen::VectorXd z = Eigen::VectorXd::Constant(1, 0.1);
  const BoxResult r = minimize_in_box(f, z, Eigen::VectorXd::Zero(1),
                                      Eigen::VectorXd::Constant(1, 0.5), BoxOptions{});
  EXPECT_TRUE(r.converged);
  EXPECT_DOUBLE_EQ(z[0], 0.5);
  EXPECT_NEAR(r.value + 1.0, 0.25, 1e-14);
}

TEST(BoxSolver, CoupledQuadraticSatisfiesKkt) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n(0.0, 1.0);
  const int dim = 12;
  Eigen::MatrixXd M(dim, dim);
  for (int i = 0; i < dim * dim; ++i) M.data()[i] = n(rng);
  const Eigen::MatrixXd A = M * M.transpose() + Eigen::MatrixXd::Identity(dim, dim);
  Eigen::VectorXd b(dim);
  for (int i = 0; i < dim; ++i) b[i] = 5.0 * n(rng);
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim, -0.5);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(dim, 0.5);

  Quadratic f(A, b);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(dim);
  const BoxResult r = minimize_in_box(f, z, lo, hi, BoxOptions{});
  ASSERT_TRUE(r.converged);
  const Eigen::VectorXd g = A * z - b;
  EXPECT_LT(projected_gradient_norm(z, g, lo, hi), 1e-8);
  int on_bound = 0;
  for (int i = 0; i < dim; ++i) {
    ASSERT_GE(z[i], lo[i]);
    ASSERT_LE(z[i], hi[i]);
    if (z[i] == lo[i]) {
      EXPECT_GE(g[i], 0.0);
      ++on_bound;
    } else if (z[i] == hi[i]) {
      EXPECT_LE(g[i], 0.0);
      ++on_bound;
    }
  }
  EXPECT_GT(on_bound, 0);
}

TEST(BoxSolver, ProjectedGradientNorm) {
  const Eigen::Vector3d z(0.0, 0.5, 1.0);
  const Eigen::Vector3d g(1.0, -2.0, -3.0);
  const Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  const Eigen::Vector3d hi = Eigen::Vector3d::Ones();
  // P(z - g) - z = (0, 0.5, 0)
  EXPECT_DOUBLE_EQ(projected_gradient_norm(z, g, lo, hi), 0.5);
}

SolverOptions untimed() {
  SolverOptions o;
  o.time_budget = std::numeric_limits<double>::infinity();
  return o;
}

TEST(Solver, ConvergedSolutionsAreFeasible) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> off(-0.1, 0.1);
  for (const char* name : {"P1", "P2"}) {
    for (int trial = 0; trial < 4; ++trial) {
      const OcpProblem p = make_problem(30, name, off(rng), off(rng));
      const OcpSolution s = solve(p, shift_warm_start(std::nullopt, p), untimed());
      ASSERT_EQ(s.status, SolveStatus::converged) << name << " trial " << trial;
      const KktReport k = kkt_report(p, s);
      EXPECT_LE(k.defect_norm, 1e-6);
      EXPECT_LE(k.bound_violation, 1e-8);
      EXPECT_LE(k.stationarity, 1e-4);
      EXPECT_NEAR(s.objective, objective(p, s.decision()), 1e-9 * (1.0 + s.objective));
    }
  }
}

TEST(Solver, KktReportShapesAndSigns) {
  const OcpProblem p = make_problem(10, "P1", 0.3, 0.0);
  const OcpSolution s = solve(p, shift_warm_start(std::nullopt, p), untimed());
  ASSERT_EQ(s.status, SolveStatus::converged);
  const KktReport k = kkt_report(p, s);
  ASSERT_EQ(k.bound_multipliers.size(), p.dimension());
  const Eigen::VectorXd z = s.decision();
  const Eigen::VectorXd lo = p.lower_bounds();
  const Eigen::VectorXd hi = p.upper_bounds();
  int active = 0;
  for (int i = 0; i < z.size(); ++i) {
    if (z[i] - lo[i] <= 1e-8) {
      EXPECT_GE(k.bound_multipliers[i], -1e-4);
      ++active;
    } else if (hi[i] - z[i] <= 1e-8) {
      EXPECT_LE(k.bound_multipliers[i], 1e-4);
      ++active;
    } else {
      EXPECT_EQ(k.bound_multipliers[i], 0.0);
    }
  }
  // A 0.3 m jump within a third of a second saturates the accelerations.
  EXPECT_GT(active, 0);
}

TEST(Solver, WarmStartFromOwnSolutionIsImmediate) {
  const OcpProblem p = make_problem(30, "P2");
  const OcpSolution first = solve(p, shift_warm_start(std::nullopt, p), untimed());
  ASSERT_EQ(first.status, SolveStatus::converged);
  const OcpSolution again = solve(p, InitialGuess{first.decision(), first.multipliers}, untimed());
  EXPECT_EQ(again.status, SolveStatus::converged);
  EXPECT_LE(again.iterations, 3);
  EXPECT_LE(again.objective, first.objective * (1.0 + 1e-6));
}

TEST(Solver, ShiftedWarmStartConvergesQuickly) {
  const OcpProblem p = make_problem(30, "P1");
  const OcpSolution first = solve(p, shift_warm_start(std::nullopt, p), untimed());
  ASSERT_EQ(first.status, SolveStatus::converged);
  OcpProblem next = p;
  next.xi0 = first.states[0];
  next.refs.poses.erase(next.refs.poses.begin());
  next.refs.poses.push_back(next.refs.poses.back());
  const OcpSolution cold = solve(next, shift_warm_start(std::nullopt, next), untimed());
  const OcpSolution warm = solve(next, shift_warm_start(first, next), untimed());
  ASSERT_EQ(warm.status, SolveStatus::converged);
  EXPECT_LE(warm.inner_iterations, cold.inner_iterations);
  EXPECT_NEAR(warm.objective, cold.objective, 1e-4 * cold.objective);
}

TEST(Solver, RejectsBadGuess) {
  const OcpProblem p = make_problem(4);
  EXPECT_THROW(solve(p, InitialGuess{Eigen::VectorXd::Zero(3), {}}), std::invalid_argument);
  InitialGuess g = shift_warm_start(std::nullopt, p);
  g.z[5] = NAN;
  EXPECT_THROW(solve(p, g), std::invalid_argument);
}

TEST(Solver, ExhaustedBudgetStillReturnsBoxFeasibleControls) {
  const OcpProblem p = make_problem(30, "P1", 0.2, 0.0);
  SolverOptions o;
  o.time_budget = 1e-9;
  const OcpSolution s = solve(p, shift_warm_start(std::nullopt, p), o);
  EXPECT_NE(s.status, SolveStatus::converged);
  for (const Vec3& u : s.controls) {
    EXPECT_TRUE(u.allFinite());
    EXPECT_LE(u.cwiseAbs().maxCoeff(), 8.0);
  }
}

TEST(Solver, TwoStageObjectiveMatchesLatticeOracle) {
  for (const char* name : {"P1", "P2"}) {
    const OcpProblem p = testing::two_stage_problem(name);
    const OcpSolution s = solve(p, shift_warm_start(std::nullopt, p), untimed());
    ASSERT_EQ(s.status, SolveStatus::converged);
    const double oracle = testing::lattice_oracle(p);
    EXPECT_NEAR(s.objective, oracle, 0.01 * oracle) << name;
  }
}

}  // namespace
}  // namespace telemanip
