#pragma once

#include <limits>
#include <vector>

#include <Eigen/Core>

#include "telemanip/ocp.hpp"
#include "telemanip/stage_kernels.hpp"

namespace telemanip {

struct SolverOptions {
  int max_outer_iterations = 30;
  int max_inner_iterations = 60;
  double feasibility_tolerance = 1e-6;  ///< defect inf-norm
  double optimality_tolerance = 1e-5;   ///< projected Lagrangian gradient inf-norm
  double bound_tolerance = 1e-8;
  double initial_penalty = 1e3;
  double penalty_growth = 10.0;
  double max_penalty = 1e12;
  double time_budget = std::numeric_limits<double>::infinity();  ///< seconds
  KernelMode kernels = KernelMode::serial;

  void validate() const;
};

/// A smooth function minimized over a box with a Newton-type model. The
/// model is refreshed by linearize() and used by newton_direction().
class BoxObjective {
 public:
  virtual ~BoxObjective() = default;
  virtual double value(const Eigen::VectorXd& z) = 0;
  /// Value and gradient at z; also refreshes the Hessian model.
  virtual double linearize(const Eigen::VectorXd& z, Eigen::VectorXd& grad) = 0;
  /// Direction solving H_FF d_F = -g_F on the free set. Entries of active
  /// variables are ignored by the caller.
  virtual void newton_direction(const std::vector<char>& active, const Eigen::VectorXd& grad,
                                Eigen::VectorXd& dir) = 0;
};

struct BoxOptions {
  int max_iterations = 60;
  double tolerance = 1e-8;
  double armijo = 1e-4;
  int max_backtracks = 40;
  /// steady_clock deadline in seconds since epoch; infinite means none.
  double deadline = std::numeric_limits<double>::infinity();
};

struct BoxResult {
  double value = 0.0;
  double projected_gradient = 0.0;
  int iterations = 0;
  bool converged = false;
  bool timed_out = false;
};

/// Projected Newton (two-metric) method with an Armijo search along the
/// projection arc. z must be inside [lo, hi] on entry and stays there.
BoxResult minimize_in_box(BoxObjective& f, Eigen::VectorXd& z, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi, const BoxOptions& options);

/// inf-norm of P(z - g) - z.
double projected_gradient_norm(const Eigen::VectorXd& z, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

/// Augmented-Lagrangian solve of the multiple-shooting problem. Never throws
/// for numerical trouble; throws std::invalid_argument on a guess of the wrong
/// dimension or containing NaN.
OcpSolution solve(const OcpProblem& problem, const InitialGuess& guess,
                  const SolverOptions& options = {});

struct KktReport {
  double defect_norm = 0.0;      ///< inf-norm of the dynamics defects
  double bound_violation = 0.0;  ///< largest box violation
  double stationarity = 0.0;     ///< projected Lagrangian gradient inf-norm
  /// Lagrangian gradient on components sitting at a bound, zero elsewhere:
  /// positive at a lower bound, negative at an upper bound.
  Eigen::VectorXd bound_multipliers;
};

KktReport kkt_report(const OcpProblem& problem, const OcpSolution& solution,
                     double bound_tolerance = 1e-8);

/// Gradient of the Lagrangian J + lambda^T c in the decision layout.
Eigen::VectorXd lagrangian_gradient(const OcpProblem& problem, const Eigen::VectorXd& z,
                                    const Eigen::VectorXd& multipliers);

}  // namespace telemanip
