#pragma once

#include <numbers>

#include <Eigen/Core>

#include "telemanip/kinematics.hpp"

namespace telemanip {

/// Pendulum model of the liquid. Defaults are a small glass of water.
struct LiquidParams {
  double l = 0.02;    ///< virtual pendulum length, m
  double h = 0.08;    ///< filling level (pivot height), m
  double m = 1.0;     ///< pendulum mass, kg
  double d = 0.005;   ///< damping coefficient
  double g = 9.81;    ///< gravity, m/s^2

  void validate() const;
};

struct SloshState {
  double beta = 0.0;
  double betadot = 0.0;

  /// The flat-surface assumption breaks down past a quarter turn.
  bool valid() const { return beta <= std::numbers::pi / 2 && beta >= -std::numbers::pi / 2; }
};

inline constexpr int kStateDim = 8;
inline constexpr int kControlDim = 3;

/// Packed combined state (q1..q3, qd1..qd3, beta, betadot).
using StateVec = Eigen::Matrix<double, kStateDim, 1>;
/// Joint accelerations.
using ControlInput = Vec3;

struct CombinedState {
  Vec3 q = Vec3::Zero();
  Vec3 qdot = Vec3::Zero();
  SloshState slosh;

  StateVec pack() const;
  static CombinedState unpack(const StateVec& xi);
};

double natural_frequency(const LiquidParams& params);

/// Angular acceleration of the slosh pendulum for a container moving with
/// orientation theta, rate thetadot and task acceleration accel.
double slosh_acceleration(const SloshState& slosh, double theta, double thetadot,
                          const TaskAccel& accel, const LiquidParams& params);

StateVec combined_derivative(const StateVec& xi, const ControlInput& u,
                             const RobotParams& robot, const LiquidParams& liquid);
CombinedState combined_derivative(const CombinedState& xi, const ControlInput& u,
                                  const RobotParams& robot, const LiquidParams& liquid);

/// One forward-Euler step under zero-order-hold u. Throws if dt <= 0.
StateVec euler_step(const StateVec& xi, const ControlInput& u, double dt,
                    const RobotParams& robot, const LiquidParams& liquid);

/// Classical RK4 step under zero-order-hold u. Throws if dt <= 0.
StateVec rk4_step(const StateVec& xi, const ControlInput& u, double dt,
                  const RobotParams& robot, const LiquidParams& liquid);

/// Sensitivities of combined_derivative().
struct DerivativeJacobian {
  Eigen::Matrix<double, kStateDim, kStateDim> d_xi;
  Eigen::Matrix<double, kStateDim, kControlDim> d_u;
};

DerivativeJacobian combined_derivative_jacobian(const StateVec& xi, const ControlInput& u,
                                                const RobotParams& robot,
                                                const LiquidParams& liquid);

/// Hessian of the slosh acceleration with respect to (xi, u), ordered as
/// (q, qdot, beta, betadot, u). The betadot row and column are zero.
using SloshHessian = Eigen::Matrix<double, kStateDim + kControlDim, kStateDim + kControlDim>;

SloshHessian slosh_acceleration_hessian(const StateVec& xi, const ControlInput& u,
                                        const RobotParams& robot, const LiquidParams& liquid);

/// Sensitivities of euler_step(): A = I + dt df/dxi, B = dt df/du.
struct StepJacobian {
  Eigen::Matrix<double, kStateDim, kStateDim> A;
  Eigen::Matrix<double, kStateDim, kControlDim> B;
};

StepJacobian euler_step_jacobian(const StateVec& xi, const ControlInput& u, double dt,
                                 const RobotParams& robot, const LiquidParams& liquid);

}  // namespace telemanip
