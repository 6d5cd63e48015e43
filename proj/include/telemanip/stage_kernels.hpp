#pragma once

// Per-stage evaluation kernels for the multiple-shooting transcription.
//
// Every kernel exists twice: a plain serial loop that serves as the reference
// implementation, and an OpenMP variant that distributes horizon stages over
// threads. Each stage writes only its own slot and scalar reductions are
// summed serially afterwards, so both variants produce bitwise-identical
// results.

#include <vector>

#include <Eigen/Core>

#include "telemanip/banded.hpp"
#include "telemanip/ocp.hpp"

namespace telemanip {

enum class KernelMode { serial, parallel };

using Mat88 = Eigen::Matrix<double, kStateDim, kStateDim>;
using Mat83 = Eigen::Matrix<double, kStateDim, kControlDim>;

/// Everything the solver needs from stage k (u_k, xi_k -> xi_{k+1}).
struct StageEval {
  double cost = 0.0;
  StateVec defect = StateVec::Zero();
  // Filled only when derivatives are requested.
  Mat88 A = Mat88::Zero();       ///< d euler_step / d xi_k
  Mat83 B = Mat83::Zero();       ///< d euler_step / d u_k
  Vec3 grad_u = Vec3::Zero();    ///< dJ/du_k
  StateVec grad_xi = StateVec::Zero();  ///< dJ/dxi_{k+1}
  Mat3 hess_q = Mat3::Zero();    ///< Gauss-Newton block 2 J^T Q1 J at q_{k+1}
  Mat3 hess_q_residual = Mat3::Zero();  ///< 2 sum_i Q1_i e_i d2 pose_i / dq2
  SloshHessian slosh_hess = SloshHessian::Zero();  ///< at (xi_k, u_k)
};

struct HorizonEval {
  std::vector<StageEval> stages;

  double cost() const;
  /// Stacked defects, residual k at rows 8k..8k+7.
  Eigen::VectorXd defects() const;
};

void evaluate_horizon_serial(const OcpProblem& problem, const Eigen::VectorXd& z,
                             bool derivatives, HorizonEval& out);
void evaluate_horizon_parallel(const OcpProblem& problem, const Eigen::VectorXd& z,
                               bool derivatives, HorizonEval& out);
void evaluate_horizon(const OcpProblem& problem, const Eigen::VectorXd& z, bool derivatives,
                      HorizonEval& out, KernelMode mode);

/// grad J + Jc^T y, in the stacked [u_0..u_{N-1}, xi_1..xi_N] layout.
void assemble_gradient_serial(const OcpProblem& problem, const HorizonEval& eval,
                              const Eigen::VectorXd& y, Eigen::VectorXd& grad);
void assemble_gradient_parallel(const OcpProblem& problem, const HorizonEval& eval,
                                const Eigen::VectorXd& y, Eigen::VectorXd& grad);
void assemble_gradient(const OcpProblem& problem, const HorizonEval& eval,
                       const Eigen::VectorXd& y, Eigen::VectorXd& grad, KernelMode mode);

/// Stage-interleaved ordering [u_0, xi_1, u_1, xi_2, ...] used for the
/// banded Hessian. Maps a decision-vector index to its interleaved position.
std::vector<int> interleaved_permutation(int N);
inline constexpr int kHessianBandwidth = 2 * kStateDim + kControlDim - 1;

/// Hessian of J + y^T c + (rho/2) |c|^2 in interleaved ordering, with the
/// constraint Jacobian term in Gauss-Newton form rho Jc^T Jc. When y is null
/// all second derivatives of the pose and the dynamics are dropped.
void assemble_hessian_serial(const OcpProblem& problem, const HorizonEval& eval, double rho,
                             const Eigen::VectorXd* y, BandedSymmetric& H);
void assemble_hessian_parallel(const OcpProblem& problem, const HorizonEval& eval, double rho,
                               const Eigen::VectorXd* y, BandedSymmetric& H);
void assemble_hessian(const OcpProblem& problem, const HorizonEval& eval, double rho,
                      const Eigen::VectorXd* y, BandedSymmetric& H, KernelMode mode);

}  // namespace telemanip
