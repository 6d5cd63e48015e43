// Serial against OpenMP stage kernels, and full horizon solves in both modes.

#include <random>

#include <benchmark/benchmark.h>

#include "telemanip/nlp_solver.hpp"
#include "telemanip/stage_kernels.hpp"

namespace {

using namespace telemanip;

OcpProblem problem(int N) {
  StateVec xi0 = StateVec::Zero();
  xi0.head<3>() = Vec3(-1.0, 2.0, -1.0);
  const Pose2D p0 = forward_kinematics(xi0.head<3>(), RobotParams{});
  ReferenceTrajectory refs;
  for (int k = 1; k <= N; ++k) refs.poses.push_back({p0.x + 0.05 * k / N, p0.z, p0.theta});
  HorizonConfig h;
  h.N = N;
  return build_problem(xi0, refs, preset("P1"), Bounds::defaults(), h, RobotParams{},
                       LiquidParams{});
}

Eigen::VectorXd decision(const OcpProblem& p) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  Eigen::VectorXd z = shift_warm_start(std::nullopt, p).z;
  for (int i = 0; i < z.size(); ++i) z[i] += d(rng);
  return z;
}

KernelMode mode_of(const benchmark::State& state) {
  return state.range(1) ? KernelMode::parallel : KernelMode::serial;
}

void BM_EvaluateHorizon(benchmark::State& state) {
  const OcpProblem p = problem(static_cast<int>(state.range(0)));
  const Eigen::VectorXd z = decision(p);
  HorizonEval eval;
  for (auto _ : state) {
    evaluate_horizon(p, z, true, eval, mode_of(state));
    benchmark::DoNotOptimize(eval.stages.data());
  }
}

void BM_AssembleGradient(benchmark::State& state) {
  const OcpProblem p = problem(static_cast<int>(state.range(0)));
  const Eigen::VectorXd z = decision(p);
  HorizonEval eval;
  evaluate_horizon(p, z, true, eval, KernelMode::serial);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(kStateDim * p.horizon.N, 0.1);
  Eigen::VectorXd g;
  for (auto _ : state) {
    assemble_gradient(p, eval, y, g, mode_of(state));
    benchmark::DoNotOptimize(g.data());
  }
}

void BM_AssembleHessian(benchmark::State& state) {
  const OcpProblem p = problem(static_cast<int>(state.range(0)));
  const Eigen::VectorXd z = decision(p);
  HorizonEval eval;
  evaluate_horizon(p, z, true, eval, KernelMode::serial);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(kStateDim * p.horizon.N, 0.1);
  BandedSymmetric H(p.dimension(), kHessianBandwidth);
  for (auto _ : state) {
    assemble_hessian(p, eval, 10.0, &y, H, mode_of(state));
    benchmark::ClobberMemory();
  }
}

void BM_Solve(benchmark::State& state) {
  const OcpProblem p = problem(static_cast<int>(state.range(0)));
  const InitialGuess guess = shift_warm_start(std::nullopt, p);
  SolverOptions o;
  o.kernels = mode_of(state);
  for (auto _ : state) {
    const OcpSolution s = solve(p, guess, o);
    benchmark::DoNotOptimize(s.objective);
  }
}

void horizons(benchmark::internal::Benchmark* b) {
  b->ArgNames({"N", "parallel"});
  for (int N : {10, 30, 60}) {
    b->Args({N, 0});
    b->Args({N, 1});
  }
}

BENCHMARK(BM_EvaluateHorizon)->Apply(horizons);
BENCHMARK(BM_AssembleGradient)->Apply(horizons);
BENCHMARK(BM_AssembleHessian)->Apply(horizons);
BENCHMARK(BM_Solve)->Args({30, 0})->Args({30, 1})->ArgNames({"N", "parallel"})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
