#include "telemanip/stage_kernels.hpp"

#include <omp.h>

namespace telemanip {

namespace {

constexpr int kBlock = kControlDim + kStateDim;

StateVec previous_state(const OcpProblem& problem, const DecisionLayout& lay,
                        const Eigen::VectorXd& z, int k) {
  if (k == 0) return problem.xi0;
  return z.segment<kStateDim>(lay.state(k));
}

void evaluate_stage(const OcpProblem& problem, const DecisionLayout& lay,
                    const Eigen::VectorXd& z, int k, bool derivatives, StageEval& st) {
  const StateVec prev = previous_state(problem, lay, z, k);
  const Vec3 u = z.segment<3>(lay.control(k));
  const StateVec next = z.segment<kStateDim>(lay.state(k + 1));
  const Weights& w = problem.weights;
  const double dt = problem.horizon.dt;

  const Vec3 q = next.segment<3>(0);
  const Vec3 e = tracking_error(forward_kinematics(q, problem.robot), problem.refs.poses[k]);
  const double beta = next[6];
  st.cost = e.dot(w.Q1.cwiseProduct(e)) + w.Q2 * beta * beta + u.dot(w.R.cwiseProduct(u));
  st.defect = next - (prev + dt * combined_derivative(prev, u, problem.robot, problem.liquid));

  if (!derivatives) return;
  const StepJacobian sj = euler_step_jacobian(prev, u, dt, problem.robot, problem.liquid);
  st.A = sj.A;
  st.B = sj.B;
  const Mat3 J = jacobian(q, problem.robot);
  st.grad_u = 2.0 * w.R.cwiseProduct(u);
  st.grad_xi.setZero();
  st.grad_xi.segment<3>(0) = 2.0 * J.transpose() * w.Q1.cwiseProduct(e);
  st.grad_xi[6] = 2.0 * w.Q2 * beta;
  st.hess_q = 2.0 * J.transpose() * w.Q1.asDiagonal() * J;
  const PoseHessian ph = forward_kinematics_hessian(q, problem.robot);
  st.hess_q_residual = 2.0 * (w.Q1[0] * e[0] * ph.x + w.Q1[1] * e[1] * ph.z);
  st.slosh_hess = slosh_acceleration_hessian(prev, u, problem.robot, problem.liquid);
}

void gradient_block(const DecisionLayout& lay,
                    const HorizonEval& eval, const Eigen::VectorXd& y, int k,
                    Eigen::VectorXd& grad) {
  const int N = lay.stages();
  const StageEval& st = eval.stages[k];
  const auto yk = y.segment<kStateDim>(kStateDim * k);
  grad.segment<3>(lay.control(k)) = st.grad_u - st.B.transpose() * yk;
  StateVec gx = st.grad_xi + yk;
  if (k + 1 < N) {
    gx -= eval.stages[k + 1].A.transpose() * y.segment<kStateDim>(kStateDim * (k + 1));
  }
  grad.segment<kStateDim>(lay.state(k + 1)) = gx;
}

void hessian_block(const OcpProblem& problem, const HorizonEval& eval, double rho,
                   const Eigen::VectorXd* y, int k, BandedSymmetric& H) {
  const int N = problem.horizon.N;
  const Weights& w = problem.weights;
  const StageEval& st = eval.stages[k];
  const int base = kBlock * k;
  const int ux = base;                 // u_k
  const int xn = base + kControlDim;   // xi_{k+1}
  const int xp = base - kStateDim;     // xi_k, only for k >= 1

  const double dt = problem.horizon.dt;

  // Curvature of -y_k^T euler_step(xi_k, u_k): only the betadot row is nonlinear.
  SloshHessian curv = SloshHessian::Zero();
  if (y) curv = -(*y)[kStateDim * k + 7] * dt * st.slosh_hess;

  Mat3 huu = 2.0 * Mat3(w.R.asDiagonal()) + rho * st.B.transpose() * st.B;
  huu += curv.block<3, 3>(kStateDim, kStateDim);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b <= a; ++b) H.at(ux + a, ux + b) = huu(a, b);
  }
  if (k >= 1) {
    Eigen::Matrix<double, 3, kStateDim> hux = rho * st.B.transpose() * st.A;
    hux += curv.block<3, kStateDim>(kStateDim, 0);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < kStateDim; ++b) H.at(ux + a, xp + b) = hux(a, b);
    }
  }

  Mat88 hxx = rho * Mat88::Identity();
  hxx.block<3, 3>(0, 0) += st.hess_q;
  if (y) hxx.block<3, 3>(0, 0) += st.hess_q_residual;
  hxx(6, 6) += 2.0 * w.Q2;
  if (k + 1 < N) {
    const StageEval& sn = eval.stages[k + 1];
    hxx.noalias() += rho * sn.A.transpose() * sn.A;
    if (y) {
      hxx -= (*y)[kStateDim * (k + 1) + 7] * dt *
             sn.slosh_hess.block<kStateDim, kStateDim>(0, 0);
    }
  }
  for (int a = 0; a < kStateDim; ++a) {
    for (int b = 0; b < 3; ++b) H.at(xn + a, ux + b) = -rho * st.B(a, b);
    for (int b = 0; b <= a; ++b) H.at(xn + a, xn + b) = hxx(a, b);
    if (k >= 1) {
      for (int b = 0; b < kStateDim; ++b) H.at(xn + a, xp + b) = -rho * st.A(a, b);
    }
  }
}

void prepare(const OcpProblem& problem, HorizonEval& out) {
  out.stages.resize(static_cast<std::size_t>(problem.horizon.N));
}

}  // namespace

double HorizonEval::cost() const {
  double J = 0.0;
  for (const StageEval& st : stages) J += st.cost;
  return J;
}

Eigen::VectorXd HorizonEval::defects() const {
  Eigen::VectorXd c(kStateDim * static_cast<int>(stages.size()));
  for (std::size_t k = 0; k < stages.size(); ++k) {
    c.segment<kStateDim>(kStateDim * static_cast<int>(k)) = stages[k].defect;
  }
  return c;
}

void evaluate_horizon_serial(const OcpProblem& problem, const Eigen::VectorXd& z,
                             bool derivatives, HorizonEval& out) {
  prepare(problem, out);
  const DecisionLayout lay = problem.layout();
  for (int k = 0; k < lay.stages(); ++k) {
    evaluate_stage(problem, lay, z, k, derivatives, out.stages[k]);
  }
}

void evaluate_horizon_parallel(const OcpProblem& problem, const Eigen::VectorXd& z,
                               bool derivatives, HorizonEval& out) {
  prepare(problem, out);
  const DecisionLayout lay = problem.layout();
  const int N = lay.stages();
#pragma omp parallel for schedule(static)
  for (int k = 0; k < N; ++k) {
    evaluate_stage(problem, lay, z, k, derivatives, out.stages[k]);
  }
}

void evaluate_horizon(const OcpProblem& problem, const Eigen::VectorXd& z, bool derivatives,
                      HorizonEval& out, KernelMode mode) {
  if (mode == KernelMode::parallel) {
    evaluate_horizon_parallel(problem, z, derivatives, out);
  } else {
    evaluate_horizon_serial(problem, z, derivatives, out);
  }
}

void assemble_gradient_serial(const OcpProblem& problem, const HorizonEval& eval,
                              const Eigen::VectorXd& y, Eigen::VectorXd& grad) {
  const DecisionLayout lay = problem.layout();
  grad.resize(lay.size());
  for (int k = 0; k < lay.stages(); ++k) gradient_block(lay, eval, y, k, grad);
}

void assemble_gradient_parallel(const OcpProblem& problem, const HorizonEval& eval,
                                const Eigen::VectorXd& y, Eigen::VectorXd& grad) {
  const DecisionLayout lay = problem.layout();
  grad.resize(lay.size());
  const int N = lay.stages();
#pragma omp parallel for schedule(static)
  for (int k = 0; k < N; ++k) gradient_block(lay, eval, y, k, grad);
}

void assemble_gradient(const OcpProblem& problem, const HorizonEval& eval,
                       const Eigen::VectorXd& y, Eigen::VectorXd& grad, KernelMode mode) {
  if (mode == KernelMode::parallel) {
    assemble_gradient_parallel(problem, eval, y, grad);
  } else {
    assemble_gradient_serial(problem, eval, y, grad);
  }
}

std::vector<int> interleaved_permutation(int N) {
  const DecisionLayout lay(N);
  std::vector<int> perm(static_cast<std::size_t>(lay.size()));
  for (int k = 0; k < N; ++k) {
    for (int a = 0; a < kControlDim; ++a) perm[lay.control(k) + a] = kBlock * k + a;
    for (int a = 0; a < kStateDim; ++a) perm[lay.state(k + 1) + a] = kBlock * k + kControlDim + a;
  }
  return perm;
}

void assemble_hessian_serial(const OcpProblem& problem, const HorizonEval& eval, double rho,
                             const Eigen::VectorXd* y, BandedSymmetric& H) {
  const int N = problem.horizon.N;
  if (H.size() != kBlock * N || H.bandwidth() != kHessianBandwidth) {
    H = BandedSymmetric(kBlock * N, kHessianBandwidth);
  }
  for (int k = 0; k < N; ++k) hessian_block(problem, eval, rho, y, k, H);
}

void assemble_hessian_parallel(const OcpProblem& problem, const HorizonEval& eval, double rho,
                               const Eigen::VectorXd* y, BandedSymmetric& H) {
  const int N = problem.horizon.N;
  if (H.size() != kBlock * N || H.bandwidth() != kHessianBandwidth) {
    H = BandedSymmetric(kBlock * N, kHessianBandwidth);
  }
#pragma omp parallel for schedule(static)
  for (int k = 0; k < N; ++k) hessian_block(problem, eval, rho, y, k, H);
}

void assemble_hessian(const OcpProblem& problem, const HorizonEval& eval, double rho,
                      const Eigen::VectorXd* y, BandedSymmetric& H, KernelMode mode) {
  if (mode == KernelMode::parallel) {
    assemble_hessian_parallel(problem, eval, rho, y, H);
  } else {
    assemble_hessian_serial(problem, eval, rho, y, H);
  }
}

}  // namespace telemanip
