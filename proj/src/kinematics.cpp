#include "telemanip/kinematics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace telemanip {

namespace {

// Absolute link angles s_i = q_1 + ... + q_i and their sines/cosines.
struct LinkAngles {
  std::array<double, 3> len;
  std::array<double, 3> s;
  std::array<double, 3> c;
};

LinkAngles link_angles(const Vec3& q, const RobotParams& p) {
  LinkAngles a{{p.L1, p.L2, p.L3}, {}, {}};
  double acc = 0.0;
  for (int i = 0; i < 3; ++i) {
    acc += q[i];
    a.s[i] = std::sin(acc);
    a.c[i] = std::cos(acc);
  }
  return a;
}

Vec3 cumulative(const Vec3& v) { return {v[0], v[0] + v[1], v[0] + v[1] + v[2]}; }

// Maps a gradient with respect to absolute link quantities onto joint
// quantities: d/dq_j = sum_{i >= j} d/ds_i.
Eigen::RowVector3d suffix_sum(const Eigen::RowVector3d& g) {
  return {g[0] + g[1] + g[2], g[1] + g[2], g[2]};
}

}  // namespace

void RobotParams::validate() const {
  if (!(L1 > 0.0 && L2 > 0.0 && L3 > 0.0)) {
    throw std::invalid_argument("robot link lengths must be strictly positive");
  }
}

Pose2D forward_kinematics(const Vec3& q, const RobotParams& params) {
  const double s1 = q[0];
  const double s2 = q[0] + q[1];
  const double s3 = q[0] + q[1] + q[2];
  Pose2D pose;
  pose.x = params.L1 * std::cos(s1) + params.L2 * std::cos(s2) + params.L3 * std::cos(s3);
  pose.z = -(params.L1 * std::sin(s1) + params.L2 * std::sin(s2) + params.L3 * std::sin(s3));
  pose.theta = s3;
  return pose;
}

Mat3 jacobian(const Vec3& q, const RobotParams& params) {
  const LinkAngles a = link_angles(q, params);
  Mat3 J;
  for (int j = 0; j < 3; ++j) {
    double dx = 0.0;
    double dz = 0.0;
    for (int i = j; i < 3; ++i) {
      dx -= a.len[i] * a.s[i];
      dz -= a.len[i] * a.c[i];
    }
    J(0, j) = dx;
    J(1, j) = dz;
    J(2, j) = 1.0;
  }
  return J;
}

Mat3 jacobian_dot(const Vec3& q, const Vec3& qdot, const RobotParams& params) {
  const LinkAngles a = link_angles(q, params);
  const Vec3 w = cumulative(qdot);
  Mat3 Jd;
  for (int j = 0; j < 3; ++j) {
    double dx = 0.0;
    double dz = 0.0;
    for (int i = j; i < 3; ++i) {
      dx -= a.len[i] * a.c[i] * w[i];
      dz += a.len[i] * a.s[i] * w[i];
    }
    Jd(0, j) = dx;
    Jd(1, j) = dz;
    Jd(2, j) = 0.0;
  }
  return Jd;
}

PoseHessian forward_kinematics_hessian(const Vec3& q, const RobotParams& params) {
  const LinkAngles a = link_angles(q, params);
  PoseHessian H;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double hx = 0.0;
      double hz = 0.0;
      for (int i = std::max(r, c); i < 3; ++i) {
        hx -= a.len[i] * a.c[i];
        hz += a.len[i] * a.s[i];
      }
      H.x(r, c) = hx;
      H.z(r, c) = hz;
    }
  }
  return H;
}

TaskRates task_velocity(const Vec3& q, const Vec3& qdot, const RobotParams& params) {
  const Vec3 v = jacobian(q, params) * qdot;
  return {v[0], v[1], qdot.sum()};
}

TaskAccel task_acceleration(const Vec3& q, const Vec3& qdot, const Vec3& u,
                            const RobotParams& params) {
  const Vec3 acc = jacobian_dot(q, qdot, params) * qdot + jacobian(q, params) * u;
  return {acc[0], acc[1], u.sum()};
}

TaskAccelPartials task_acceleration_partials(const Vec3& q, const Vec3& qdot,
                                             const Vec3& u,
                                             const RobotParams& params) {
  // xddot = -sum L_i (c_i w_i^2 + s_i a_i),  zddot = sum L_i (s_i w_i^2 - c_i a_i)
  // with w, a the absolute link rates and accelerations.
  const LinkAngles a = link_angles(q, params);
  const Vec3 w = cumulative(qdot);
  const Vec3 al = cumulative(u);

  Eigen::RowVector3d dx_ds, dx_dw, dx_da, dz_ds, dz_dw, dz_da;
  for (int i = 0; i < 3; ++i) {
    const double L = a.len[i];
    dx_ds[i] = L * (a.s[i] * w[i] * w[i] - a.c[i] * al[i]);
    dx_dw[i] = -2.0 * L * a.c[i] * w[i];
    dx_da[i] = -L * a.s[i];
    dz_ds[i] = L * (a.c[i] * w[i] * w[i] + a.s[i] * al[i]);
    dz_dw[i] = 2.0 * L * a.s[i] * w[i];
    dz_da[i] = -L * a.c[i];
  }

  TaskAccelPartials out;
  out.d_q.row(0) = suffix_sum(dx_ds);
  out.d_q.row(1) = suffix_sum(dz_ds);
  out.d_qdot.row(0) = suffix_sum(dx_dw);
  out.d_qdot.row(1) = suffix_sum(dz_dw);
  out.d_u.row(0) = suffix_sum(dx_da);
  out.d_u.row(1) = suffix_sum(dz_da);
  return out;
}

}  // namespace telemanip
