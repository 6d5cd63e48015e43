#include "telemanip/ocp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace telemanip {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

void check_ordered(const Vec3& lo, const Vec3& hi, const char* what) {
  for (int i = 0; i < 3; ++i) {
    if (!(lo[i] < hi[i])) {
      throw std::invalid_argument(std::string("inverted bounds on ") + what);
    }
  }
}

}  // namespace

void Weights::validate() const {
  if ((Q1.array() < 0.0).any() || Q2 < 0.0 || (R.array() < 0.0).any()) {
    throw std::invalid_argument("weights must be non-negative");
  }
  if (!((Q1.array() > 0.0).any() || Q2 > 0.0)) {
    throw std::invalid_argument("at least one of Q1, Q2 must be positive");
  }
}

Weights preset(std::string_view name) {
  const std::string key = upper(name);
  if (key == "P1") return {Vec3(500.0, 500.0, 100.0), 0.1, Vec3::Constant(0.01)};
  if (key == "P2") return {Vec3(100.0, 100.0, 1.0), 1000.0, Vec3::Constant(0.01)};
  throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

Bounds Bounds::defaults() {
  constexpr double pi = std::numbers::pi;
  Bounds b;
  b.q_min = Vec3::Constant(-2.0 * pi);
  b.q_max = Vec3::Constant(2.0 * pi);
  b.qdot_min = Vec3::Constant(-pi);
  b.qdot_max = Vec3::Constant(pi);
  b.u_min = Vec3::Constant(-8.0);
  b.u_max = Vec3::Constant(8.0);
  return b;
}

void Bounds::validate() const {
  check_ordered(q_min, q_max, "q");
  check_ordered(qdot_min, qdot_max, "qdot");
  check_ordered(u_min, u_max, "u");
}

void HorizonConfig::validate() const {
  if (N < 1) throw std::invalid_argument("horizon needs at least one stage");
  if (!(dt > 0.0)) throw std::invalid_argument("horizon step must be positive");
}

Eigen::VectorXd OcpProblem::lower_bounds() const {
  const DecisionLayout lay = layout();
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd lo(lay.size());
  for (int k = 0; k < horizon.N; ++k) {
    lo.segment<3>(lay.control(k)) = bounds.u_min;
    const int s = lay.state(k + 1);
    lo.segment<3>(s) = bounds.q_min;
    lo.segment<3>(s + 3) = bounds.qdot_min;
    lo[s + 6] = -inf;
    lo[s + 7] = -inf;
  }
  return lo;
}

Eigen::VectorXd OcpProblem::upper_bounds() const {
  const DecisionLayout lay = layout();
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd hi(lay.size());
  for (int k = 0; k < horizon.N; ++k) {
    hi.segment<3>(lay.control(k)) = bounds.u_max;
    const int s = lay.state(k + 1);
    hi.segment<3>(s) = bounds.q_max;
    hi.segment<3>(s + 3) = bounds.qdot_max;
    hi[s + 6] = inf;
    hi[s + 7] = inf;
  }
  return hi;
}

OcpProblem build_problem(const StateVec& xi0, ReferenceTrajectory refs, const Weights& weights,
                         const Bounds& bounds, const HorizonConfig& horizon,
                         const RobotParams& robot, const LiquidParams& liquid) {
  horizon.validate();
  bounds.validate();
  weights.validate();
  robot.validate();
  liquid.validate();
  if (static_cast<int>(refs.poses.size()) != horizon.N) {
    throw std::invalid_argument("reference trajectory length " +
                                std::to_string(refs.poses.size()) +
                                " does not match horizon " + std::to_string(horizon.N));
  }
  if (!xi0.allFinite()) throw std::invalid_argument("initial state is not finite");

  OcpProblem p;
  p.refs = std::move(refs);
  p.weights = weights;
  p.bounds = bounds;
  p.horizon = horizon;
  p.robot = robot;
  p.liquid = liquid;
  p.xi0 = xi0;
  const Vec3 q = xi0.segment<3>(0).cwiseMax(bounds.q_min).cwiseMin(bounds.q_max);
  const Vec3 qd = xi0.segment<3>(3).cwiseMax(bounds.qdot_min).cwiseMin(bounds.qdot_max);
  p.xi0_clamped = q != xi0.segment<3>(0) || qd != xi0.segment<3>(3);
  p.xi0.segment<3>(0) = q;
  p.xi0.segment<3>(3) = qd;
  return p;
}

Vec3 tracking_error(const Pose2D& pose, const Pose2D& ref) {
  return {pose.x - ref.x, pose.z - ref.z, pose.theta - ref.theta};
}

double objective(std::span<const StateVec> states, std::span<const ControlInput> controls,
                 const ReferenceTrajectory& refs, const Weights& weights,
                 const RobotParams& robot) {
  if (states.size() != controls.size() || states.size() != refs.poses.size()) {
    throw std::invalid_argument("objective: states, controls and references differ in length");
  }
  double J = 0.0;
  for (std::size_t k = 0; k < states.size(); ++k) {
    const StateVec& xi = states[k];
    const Vec3 e = tracking_error(forward_kinematics(xi.segment<3>(0), robot), refs.poses[k]);
    J += e.dot(weights.Q1.cwiseProduct(e));
    J += weights.Q2 * xi[6] * xi[6];
    J += controls[k].dot(weights.R.cwiseProduct(controls[k]));
  }
  return J;
}

double objective(const OcpProblem& problem, const Eigen::VectorXd& z) {
  const OcpSolution s = unpack_solution(problem, z);
  return objective(s.states, s.controls, problem.refs, problem.weights, problem.robot);
}

Eigen::VectorXd dynamics_defects(const OcpProblem& problem, const Eigen::VectorXd& z) {
  const DecisionLayout lay = problem.layout();
  if (z.size() != lay.size()) {
    throw std::invalid_argument("decision vector has dimension " + std::to_string(z.size()) +
                                ", expected " + std::to_string(lay.size()));
  }
  const int N = problem.horizon.N;
  Eigen::VectorXd c(kStateDim * N);
  StateVec prev = problem.xi0;
  for (int k = 0; k < N; ++k) {
    const ControlInput u = z.segment<3>(lay.control(k));
    const StateVec next = z.segment<kStateDim>(lay.state(k + 1));
    c.segment<kStateDim>(kStateDim * k) =
        next - euler_step(prev, u, problem.horizon.dt, problem.robot, problem.liquid);
    prev = next;
  }
  return c;
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible_bounds: return "infeasible_bounds";
  }
  return "unknown";
}

Eigen::VectorXd OcpSolution::decision() const {
  const int N = static_cast<int>(controls.size());
  const DecisionLayout lay(N);
  Eigen::VectorXd z(lay.size());
  for (int k = 0; k < N; ++k) {
    z.segment<3>(lay.control(k)) = controls[k];
    z.segment<kStateDim>(lay.state(k + 1)) = states[k];
  }
  return z;
}

OcpSolution unpack_solution(const OcpProblem& problem, const Eigen::VectorXd& z) {
  const DecisionLayout lay = problem.layout();
  if (z.size() != lay.size()) {
    throw std::invalid_argument("decision vector dimension mismatch");
  }
  OcpSolution s;
  s.controls.reserve(lay.stages());
  s.states.reserve(lay.stages());
  for (int k = 0; k < lay.stages(); ++k) {
    s.controls.emplace_back(z.segment<3>(lay.control(k)));
    s.states.emplace_back(z.segment<kStateDim>(lay.state(k + 1)));
  }
  return s;
}

Eigen::VectorXd rollout(const OcpProblem& problem, std::span<const ControlInput> controls) {
  const DecisionLayout lay = problem.layout();
  if (static_cast<int>(controls.size()) != lay.stages()) {
    throw std::invalid_argument("rollout: control count does not match horizon");
  }
  Eigen::VectorXd z(lay.size());
  StateVec xi = problem.xi0;
  for (int k = 0; k < lay.stages(); ++k) {
    z.segment<3>(lay.control(k)) = controls[k];
    xi = euler_step(xi, controls[k], problem.horizon.dt, problem.robot, problem.liquid);
    z.segment<kStateDim>(lay.state(k + 1)) = xi;
  }
  return z;
}

InitialGuess shift_warm_start(const std::optional<OcpSolution>& previous,
                              const OcpProblem& problem) {
  const int N = problem.horizon.N;
  std::vector<ControlInput> u(N, ControlInput::Zero());
  InitialGuess guess;
  guess.multipliers = Eigen::VectorXd::Zero(kStateDim * N);

  if (previous && static_cast<int>(previous->controls.size()) == N) {
    for (int k = 0; k < N; ++k) u[k] = previous->controls[std::min(k + 1, N - 1)];
    if (previous->multipliers.size() == kStateDim * N) {
      const Eigen::VectorXd& lam = previous->multipliers;
      for (int k = 0; k < N; ++k) {
        guess.multipliers.segment<kStateDim>(kStateDim * k) =
            lam.segment<kStateDim>(kStateDim * std::min(k + 1, N - 1));
      }
    }
  }
  guess.z = rollout(problem, u);
  return guess;
}

}  // namespace telemanip
