#include "telemanip/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace telemanip {

namespace {

void require_positive_step(double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("integration step must be positive");
}

}  // namespace

void LiquidParams::validate() const {
  if (!(l > 0.0)) throw std::invalid_argument("pendulum length l must be positive");
  if (!(h >= 0.0)) throw std::invalid_argument("filling level h must be non-negative");
  if (!(m > 0.0)) throw std::invalid_argument("pendulum mass m must be positive");
  if (!(d >= 0.0)) throw std::invalid_argument("damping d must be non-negative");
  if (!(g > 0.0)) throw std::invalid_argument("gravity g must be positive");
}

StateVec CombinedState::pack() const {
  StateVec xi;
  xi << q, qdot, slosh.beta, slosh.betadot;
  return xi;
}

CombinedState CombinedState::unpack(const StateVec& xi) {
  CombinedState s;
  s.q = xi.segment<3>(0);
  s.qdot = xi.segment<3>(3);
  s.slosh = {xi[6], xi[7]};
  return s;
}

double natural_frequency(const LiquidParams& params) {
  if (!(params.l > 0.0)) throw std::invalid_argument("pendulum length l must be positive");
  return std::sqrt(params.g / params.l);
}

double slosh_acceleration(const SloshState& slosh, double theta, double thetadot,
                          const TaskAccel& accel, const LiquidParams& p) {
  const double b = slosh.beta;
  const double phi = theta + b;
  const double bracket = -(p.l - p.h * std::cos(b)) * accel.thetaddot +
                         p.h * std::sin(b) * thetadot * thetadot +
                         std::cos(phi) * accel.xddot -
                         std::sin(phi) * (p.g + accel.zddot) -
                         p.d / (p.m * p.l) * slosh.betadot;
  return bracket / p.l;
}

StateVec combined_derivative(const StateVec& xi, const ControlInput& u,
                             const RobotParams& robot, const LiquidParams& liquid) {
  const Vec3 q = xi.segment<3>(0);
  const Vec3 qdot = xi.segment<3>(3);
  const TaskAccel acc = task_acceleration(q, qdot, u, robot);
  const double theta = q.sum();
  const double thetadot = qdot.sum();

  StateVec f;
  f.segment<3>(0) = qdot;
  f.segment<3>(3) = u;
  f[6] = xi[7];
  f[7] = slosh_acceleration({xi[6], xi[7]}, theta, thetadot, acc, liquid);
  return f;
}

CombinedState combined_derivative(const CombinedState& xi, const ControlInput& u,
                                  const RobotParams& robot, const LiquidParams& liquid) {
  return CombinedState::unpack(combined_derivative(xi.pack(), u, robot, liquid));
}

StateVec euler_step(const StateVec& xi, const ControlInput& u, double dt,
                    const RobotParams& robot, const LiquidParams& liquid) {
  require_positive_step(dt);
  return xi + dt * combined_derivative(xi, u, robot, liquid);
}

StateVec rk4_step(const StateVec& xi, const ControlInput& u, double dt,
                  const RobotParams& robot, const LiquidParams& liquid) {
  require_positive_step(dt);
  const StateVec k1 = combined_derivative(xi, u, robot, liquid);
  const StateVec k2 = combined_derivative(xi + 0.5 * dt * k1, u, robot, liquid);
  const StateVec k3 = combined_derivative(xi + 0.5 * dt * k2, u, robot, liquid);
  const StateVec k4 = combined_derivative(xi + dt * k3, u, robot, liquid);
  return xi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

DerivativeJacobian combined_derivative_jacobian(const StateVec& xi, const ControlInput& u,
                                                const RobotParams& robot,
                                                const LiquidParams& p) {
  const Vec3 q = xi.segment<3>(0);
  const Vec3 qdot = xi.segment<3>(3);
  const double b = xi[6];
  const TaskAccel acc = task_acceleration(q, qdot, u, robot);
  const TaskAccelPartials dacc = task_acceleration_partials(q, qdot, u, robot);
  const double thetadot = qdot.sum();
  const double phi = q.sum() + b;
  const double sphi = std::sin(phi);
  const double cphi = std::cos(phi);
  const double inv_l = 1.0 / p.l;

  // Scalar partials of the slosh acceleration.
  const double df_dxdd = cphi * inv_l;
  const double df_dzdd = -sphi * inv_l;
  const double df_dtheta = (-sphi * acc.xddot - cphi * (p.g + acc.zddot)) * inv_l;
  const double df_dthetadot = 2.0 * p.h * std::sin(b) * thetadot * inv_l;
  const double df_dthetadd = -(p.l - p.h * std::cos(b)) * inv_l;
  const double df_dbeta = (-p.h * std::sin(b) * acc.thetaddot +
                           p.h * std::cos(b) * thetadot * thetadot -
                           sphi * acc.xddot - cphi * (p.g + acc.zddot)) * inv_l;
  const double df_dbetadot = -p.d / (p.m * p.l) * inv_l;

  const Eigen::RowVector3d ones = Eigen::RowVector3d::Ones();

  DerivativeJacobian jac;
  jac.d_xi.setZero();
  jac.d_u.setZero();
  jac.d_xi.block<3, 3>(0, 3).setIdentity();
  jac.d_xi(6, 7) = 1.0;
  jac.d_xi.block<1, 3>(7, 0) =
      df_dxdd * dacc.d_q.row(0) + df_dzdd * dacc.d_q.row(1) + df_dtheta * ones;
  jac.d_xi.block<1, 3>(7, 3) =
      df_dxdd * dacc.d_qdot.row(0) + df_dzdd * dacc.d_qdot.row(1) + df_dthetadot * ones;
  jac.d_xi(7, 6) = df_dbeta;
  jac.d_xi(7, 7) = df_dbetadot;
  jac.d_u.block<3, 3>(3, 0).setIdentity();
  jac.d_u.block<1, 3>(7, 0) =
      df_dxdd * dacc.d_u.row(0) + df_dzdd * dacc.d_u.row(1) + df_dthetadd * ones;
  return jac;
}

SloshHessian slosh_acceleration_hessian(const StateVec& xi, const ControlInput& u,
                                        const RobotParams& robot, const LiquidParams& p) {
  // Work in absolute link coordinates c = (S, W, beta, A), where S, W, A are
  // the cumulative joint angles, rates and accelerations, then map back.
  const double b = xi[6];
  const double sb = std::sin(b);
  const double cb = std::cos(b);
  const double len[3] = {robot.L1, robot.L2, robot.L3};
  double S[3], W[3], A[3];
  double accS = 0.0, accW = 0.0, accA = 0.0;
  for (int i = 0; i < 3; ++i) {
    accS += xi[i];
    accW += xi[3 + i];
    accA += u[i];
    S[i] = accS;
    W[i] = accW;
    A[i] = accA;
  }

  using Vec10 = Eigen::Matrix<double, 10, 1>;
  using Mat10 = Eigen::Matrix<double, 10, 10>;
  Vec10 gx = Vec10::Zero(), gz = Vec10::Zero();
  Mat10 hx = Mat10::Zero(), hz = Mat10::Zero();
  double xdd = 0.0, zdd = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double L = len[i], s = std::sin(S[i]), c = std::cos(S[i]), w = W[i], a = A[i];
    const int is = i, iw = 3 + i, ia = 7 + i;
    xdd -= L * (c * w * w + s * a);
    zdd += L * (s * w * w - c * a);
    gx[is] = L * (s * w * w - c * a);
    gx[iw] = -2.0 * L * c * w;
    gx[ia] = -L * s;
    gz[is] = L * (c * w * w + s * a);
    gz[iw] = 2.0 * L * s * w;
    gz[ia] = -L * c;
    hx(is, is) = L * (c * w * w + s * a);
    hx(is, iw) = hx(iw, is) = 2.0 * L * s * w;
    hx(is, ia) = hx(ia, is) = -L * c;
    hx(iw, iw) = -2.0 * L * c;
    hz(is, is) = L * (c * a - s * w * w);
    hz(is, iw) = hz(iw, is) = 2.0 * L * c * w;
    hz(is, ia) = hz(ia, is) = L * s;
    hz(iw, iw) = 2.0 * L * s;
  }

  const double phi = S[2] + b;
  const double sp = std::sin(phi);
  const double cp = std::cos(phi);
  const double G = cp * xdd - sp * (p.g + zdd);
  const Vec10 g_phi = -sp * gx - cp * gz;
  Vec10 e_phi = Vec10::Zero();
  e_phi[2] = 1.0;
  e_phi[6] = 1.0;

  Mat10 Hc = cp * hx - sp * hz;
  Hc += e_phi * g_phi.transpose() + g_phi * e_phi.transpose() - G * e_phi * e_phi.transpose();
  Hc(6, 6) += -p.h * cb * A[2] - p.h * sb * W[2] * W[2];
  Hc(6, 9) += -p.h * sb;
  Hc(9, 6) += -p.h * sb;
  Hc(6, 5) += 2.0 * p.h * cb * W[2];
  Hc(5, 6) += 2.0 * p.h * cb * W[2];
  Hc(5, 5) += 2.0 * p.h * sb;
  Hc /= p.l;

  // c = M x with x = (q, qdot, beta, u) and M block lower-triangular ones,
  // so M^T Hc M is a suffix sum over rows and then over columns.
  Mat10 Hx = Hc;
  for (int blk : {0, 3, 7}) {
    Hx.row(blk + 1) += Hx.row(blk + 2);
    Hx.row(blk) += Hx.row(blk + 1);
  }
  for (int blk : {0, 3, 7}) {
    Hx.col(blk + 1) += Hx.col(blk + 2);
    Hx.col(blk) += Hx.col(blk + 1);
  }

  const int map[10] = {0, 1, 2, 3, 4, 5, 6, 8, 9, 10};
  SloshHessian H = SloshHessian::Zero();
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 10; ++c) H(map[r], map[c]) = Hx(r, c);
  }
  return H;
}

StepJacobian euler_step_jacobian(const StateVec& xi, const ControlInput& u, double dt,
                                 const RobotParams& robot, const LiquidParams& liquid) {
  require_positive_step(dt);
  const DerivativeJacobian df = combined_derivative_jacobian(xi, u, robot, liquid);
  StepJacobian s;
  s.A = Eigen::Matrix<double, kStateDim, kStateDim>::Identity() + dt * df.d_xi;
  s.B = dt * df.d_u;
  return s;
}

}  // namespace telemanip
