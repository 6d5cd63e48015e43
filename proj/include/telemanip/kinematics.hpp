#pragma once

#include <Eigen/Core>

namespace telemanip {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Link lengths of the planar 3R arm, meters. Defaults are the UR5e values.
struct RobotParams {
  double L1 = 0.425;
  double L2 = 0.3922;
  double L3 = 0.1;

  /// Throws std::invalid_argument unless every length is strictly positive.
  void validate() const;
  double reach() const { return L1 + L2 + L3; }
};

/// Container pose in the arm plane. z_c points up, theta_c = q1 + q2 + q3.
struct Pose2D {
  double x = 0.0;
  double z = 0.0;
  double theta = 0.0;
};

struct TaskRates {
  double xdot = 0.0;
  double zdot = 0.0;
  double thetadot = 0.0;
};

struct TaskAccel {
  double xddot = 0.0;
  double zddot = 0.0;
  double thetaddot = 0.0;
};

Pose2D forward_kinematics(const Vec3& q, const RobotParams& params);

/// d(x, z, theta)/dq. The last row is (1, 1, 1).
Mat3 jacobian(const Vec3& q, const RobotParams& params);

/// Time derivative of jacobian() along (q, qdot). The last row is zero.
Mat3 jacobian_dot(const Vec3& q, const Vec3& qdot, const RobotParams& params);

TaskRates task_velocity(const Vec3& q, const Vec3& qdot, const RobotParams& params);

/// J_dot(q, qdot) qdot + J(q) u.
TaskAccel task_acceleration(const Vec3& q, const Vec3& qdot, const Vec3& u,
                            const RobotParams& params);

/// Second derivatives of x_c and z_c with respect to q (theta_c is linear).
struct PoseHessian {
  Mat3 x;
  Mat3 z;
};

PoseHessian forward_kinematics_hessian(const Vec3& q, const RobotParams& params);

/// Partial derivatives of (xddot, zddot) from task_acceleration() with
/// respect to q, qdot and u. The theta row is omitted: thetaddot = sum(u).
struct TaskAccelPartials {
  Mat23 d_q;
  Mat23 d_qdot;
  Mat23 d_u;
};

TaskAccelPartials task_acceleration_partials(const Vec3& q, const Vec3& qdot,
                                             const Vec3& u,
                                             const RobotParams& params);

}  // namespace telemanip
