#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "telemanip/dynamics.hpp"
#include "telemanip/kinematics.hpp"

namespace telemanip {

/// Stage-cost weights: Q1 on the (x, z, theta) tracking error, Q2 on the
/// slosh angle, R on the joint accelerations.
struct Weights {
  Vec3 Q1 = Vec3::Zero();
  double Q2 = 0.0;
  Vec3 R = Vec3::Zero();

  void validate() const;
};

/// "P1" (tracking) or "P2" (anti-slosh); case-insensitive. Throws
/// std::invalid_argument for anything else.
Weights preset(std::string_view name);

struct Bounds {
  Vec3 q_min, q_max;
  Vec3 qdot_min, qdot_max;
  Vec3 u_min, u_max;

  /// q in [-2pi, 2pi], qdot in [-pi, pi], u in [-8, 8].
  static Bounds defaults();
  void validate() const;
};

struct HorizonConfig {
  int N = 30;
  double dt = 1.0 / 30.0;

  void validate() const;
  double length() const { return N * dt; }
};

/// One reference pose per stage k = 1..N.
struct ReferenceTrajectory {
  std::vector<Pose2D> poses;
};

/// Index map of the decision vector [u_0 .. u_{N-1}, xi_1 .. xi_N].
class DecisionLayout {
 public:
  explicit DecisionLayout(int N) : N_(N) {}

  int stages() const { return N_; }
  int size() const { return (kControlDim + kStateDim) * N_; }
  int control(int k) const { return kControlDim * k; }
  /// Offset of xi_k for k = 1..N.
  int state(int k) const { return kControlDim * N_ + kStateDim * (k - 1); }

 private:
  int N_;
};

struct OcpProblem {
  StateVec xi0 = StateVec::Zero();
  ReferenceTrajectory refs;
  Weights weights;
  Bounds bounds = Bounds::defaults();
  HorizonConfig horizon;
  RobotParams robot;
  LiquidParams liquid;
  /// Set when xi0 had to be clamped into the state bounds.
  bool xi0_clamped = false;

  DecisionLayout layout() const { return DecisionLayout(horizon.N); }
  int dimension() const { return layout().size(); }
  /// Box bounds on the full decision vector; slosh states are unbounded.
  Eigen::VectorXd lower_bounds() const;
  Eigen::VectorXd upper_bounds() const;
};

/// Throws std::invalid_argument on inconsistent lengths or inverted bounds.
OcpProblem build_problem(const StateVec& xi0, ReferenceTrajectory refs, const Weights& weights,
                         const Bounds& bounds, const HorizonConfig& horizon,
                         const RobotParams& robot, const LiquidParams& liquid);

Vec3 tracking_error(const Pose2D& pose, const Pose2D& ref);

/// Finite-horizon cost over states xi_1..xi_N and controls u_0..u_{N-1}.
/// Throws std::invalid_argument on length mismatch.
double objective(std::span<const StateVec> states, std::span<const ControlInput> controls,
                 const ReferenceTrajectory& refs, const Weights& weights,
                 const RobotParams& robot);
double objective(const OcpProblem& problem, const Eigen::VectorXd& z);

/// Stacked xi_{k+1} - euler_step(xi_k, u_k), k = 0..N-1, with xi_0 the fixed
/// initial state.
Eigen::VectorXd dynamics_defects(const OcpProblem& problem, const Eigen::VectorXd& z);

enum class SolveStatus { converged, max_iter, infeasible_bounds };

std::string_view to_string(SolveStatus status);

struct OcpSolution {
  std::vector<ControlInput> controls;
  std::vector<StateVec> states;
  /// Defect multipliers, one per residual row.
  Eigen::VectorXd multipliers;
  double objective = 0.0;
  SolveStatus status = SolveStatus::max_iter;
  int iterations = 0;
  int inner_iterations = 0;
  double max_defect = 0.0;
  double solve_ms = 0.0;

  Eigen::VectorXd decision() const;
};

OcpSolution unpack_solution(const OcpProblem& problem, const Eigen::VectorXd& z);

/// Starting point for a solve: primal decision vector plus optional
/// multiplier estimate.
struct InitialGuess {
  Eigen::VectorXd z;
  Eigen::VectorXd multipliers;
};

/// Receding-horizon warm start: controls shifted one stage left with the last
/// one held, multipliers shifted likewise, and states rolled out from the new
/// initial state so the guess has zero defects. Without a previous solution
/// the controls are zero.
InitialGuess shift_warm_start(const std::optional<OcpSolution>& previous,
                              const OcpProblem& problem);

/// Euler rollout of the given controls from problem.xi0 as a decision vector.
Eigen::VectorXd rollout(const OcpProblem& problem, std::span<const ControlInput> controls);

}  // namespace telemanip
