#include "telemanip/nlp_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "telemanip/banded.hpp"

namespace telemanip {

namespace {

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

Eigen::VectorXd project(const Eigen::VectorXd& z, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi) {
  return z.cwiseMax(lo).cwiseMin(hi);
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

// Augmented Lagrangian J + lambda^T c + rho/2 |c|^2 with a second-order
// model assembled in banded stage-interleaved form.
class AugmentedLagrangian final : public BoxObjective {
 public:
  AugmentedLagrangian(const OcpProblem& problem, KernelMode mode)
      : problem_(problem),
        mode_(mode),
        perm_(interleaved_permutation(problem.horizon.N)),
        lambda_(Eigen::VectorXd::Zero(kStateDim * problem.horizon.N)) {}

  void set_multipliers(const Eigen::VectorXd& lambda) { lambda_ = lambda; }
  void set_penalty(double rho) { rho_ = rho; }
  const Eigen::VectorXd& multipliers() const { return lambda_; }
  double penalty() const { return rho_; }

  double value(const Eigen::VectorXd& z) override {
    evaluate_horizon(problem_, z, false, scratch_, mode_);
    return merit(scratch_);
  }

  double linearize(const Eigen::VectorXd& z, Eigen::VectorXd& grad) override {
    evaluate_horizon(problem_, z, true, eval_, mode_);
    const Eigen::VectorXd c = eval_.defects();
    const Eigen::VectorXd y = lambda_ + rho_ * c;
    assemble_gradient(problem_, eval_, y, grad, mode_);
    assemble_hessian(problem_, eval_, rho_, &y, hessian_, mode_);
    return merit(eval_);
  }

  void newton_direction(const std::vector<char>& active, const Eigen::VectorXd& grad,
                        Eigen::VectorXd& dir) override {
    const int n = static_cast<int>(grad.size());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (!active[i]) rhs[perm_[i]] = -grad[i];
    }

    // Exact Hessian with a growing diagonal shift when it is indefinite.
    const double max_diag = mask(hessian_, active, masked_);
    double shift = 0.0;
    for (int attempt = 0; attempt < 16; ++attempt) {
      if (shift > 0.0) {
        regularized_ = masked_;
        for (int i = 0; i < n; ++i) {
          if (!active[i]) regularized_.at(perm_[i], perm_[i]) += shift;
        }
      }
      if (chol_.factor(shift > 0.0 ? regularized_ : masked_)) break;
      shift = shift > 0.0 ? shift * 10.0 : 1e-6 * std::max(1.0, max_diag);
    }
    const Eigen::VectorXd sol = chol_.solve(rhs);

    dir.resize(n);
    for (int i = 0; i < n; ++i) dir[i] = active[i] ? 0.0 : sol[perm_[i]];
  }

  const HorizonEval& last_linearization() const { return eval_; }

 private:
  // Replaces rows and columns of active variables by the identity. Returns
  // the largest remaining diagonal entry.
  double mask(const BandedSymmetric& src, const std::vector<char>& active,
              BandedSymmetric& dst) const {
    const int n = src.size();
    const int p = src.bandwidth();
    dst = src;
    double max_diag = 0.0;
    for (int i = 0; i < n; ++i) {
      const int pi = perm_[i];
      if (active[i]) {
        for (int j = std::max(0, pi - p); j < pi; ++j) dst.at(pi, j) = 0.0;
        for (int r = pi + 1; r <= std::min(n - 1, pi + p); ++r) dst.at(r, pi) = 0.0;
        dst.at(pi, pi) = 1.0;
      } else {
        max_diag = std::max(max_diag, dst.at(pi, pi));
      }
    }
    return max_diag;
  }

  double merit(const HorizonEval& ev) const {
    const Eigen::VectorXd c = ev.defects();
    return ev.cost() + lambda_.dot(c) + 0.5 * rho_ * c.squaredNorm();
  }

  const OcpProblem& problem_;
  KernelMode mode_;
  std::vector<int> perm_;
  Eigen::VectorXd lambda_;
  double rho_ = 1.0;
  HorizonEval eval_;
  HorizonEval scratch_;
  BandedSymmetric hessian_;
  BandedSymmetric masked_;
  BandedSymmetric regularized_;
  BandedCholesky chol_;
};

// The first stage's q and the reachable range of its qdot are fixed by xi0.
bool first_stage_feasible(const OcpProblem& p, double tol) {
  const double dt = p.horizon.dt;
  const Vec3 q0 = p.xi0.segment<3>(0);
  const Vec3 qd0 = p.xi0.segment<3>(3);
  const Vec3 q1 = q0 + dt * qd0;
  const Vec3 qd_lo = qd0 + dt * p.bounds.u_min;
  const Vec3 qd_hi = qd0 + dt * p.bounds.u_max;
  for (int i = 0; i < 3; ++i) {
    if (q1[i] < p.bounds.q_min[i] - tol || q1[i] > p.bounds.q_max[i] + tol) return false;
    if (qd_hi[i] < p.bounds.qdot_min[i] - tol || qd_lo[i] > p.bounds.qdot_max[i] + tol) return false;
  }
  return true;
}

}  // namespace

void SolverOptions::validate() const {
  if (max_outer_iterations < 1 || max_inner_iterations < 1) {
    throw std::invalid_argument("solver iteration limits must be positive");
  }
  if (!(feasibility_tolerance > 0.0 && optimality_tolerance > 0.0 && bound_tolerance > 0.0)) {
    throw std::invalid_argument("solver tolerances must be positive");
  }
  if (!(initial_penalty > 0.0 && penalty_growth > 1.0 && max_penalty >= initial_penalty)) {
    throw std::invalid_argument("invalid penalty schedule");
  }
  if (!(time_budget > 0.0)) throw std::invalid_argument("solver time budget must be positive");
}

double projected_gradient_norm(const Eigen::VectorXd& z, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return inf_norm(project(z - g, lo, hi) - z);
}

BoxResult minimize_in_box(BoxObjective& f, Eigen::VectorXd& z, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi, const BoxOptions& options) {
  const int n = static_cast<int>(z.size());
  BoxResult res;
  Eigen::VectorXd g(n);
  Eigen::VectorXd dir(n);
  std::vector<char> active(static_cast<std::size_t>(n), 0);

  double fz = f.linearize(z, g);
  for (;;) {
    res.value = fz;
    res.projected_gradient = projected_gradient_norm(z, g, lo, hi);
    if (res.projected_gradient <= options.tolerance) {
      res.converged = true;
      break;
    }
    if (res.iterations >= options.max_iterations) break;
    if (now_seconds() > options.deadline) {
      res.timed_out = true;
      break;
    }

    // Variables within eps of a bound with the gradient pushing outward are
    // held out of the Newton solve and sent onto that bound.
    const double eps = std::min(1e-3, res.projected_gradient);
    for (int i = 0; i < n; ++i) {
      active[i] = (z[i] - lo[i] <= eps && g[i] > 0.0) || (hi[i] - z[i] <= eps && g[i] < 0.0);
    }
    f.newton_direction(active, g, dir);
    for (int i = 0; i < n; ++i) {
      if (active[i]) dir[i] = (g[i] > 0.0 ? lo[i] : hi[i]) - z[i];
    }

    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial(n);
    double ftrial = fz;
    for (int bt = 0; bt < options.max_backtracks; ++bt) {
      trial = project(z + step * dir, lo, hi);
      ftrial = f.value(trial);
      const double decrease = g.dot(trial - z);
      if (std::isfinite(ftrial) && ftrial <= fz + options.armijo * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++res.iterations;
    if (!accepted) {
      // Fall back to a projected steepest-descent step.
      step = 1.0;
      for (int bt = 0; bt < options.max_backtracks; ++bt) {
        trial = project(z - step * g, lo, hi);
        ftrial = f.value(trial);
        if (std::isfinite(ftrial) && ftrial <= fz + options.armijo * g.dot(trial - z)) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }
    z = trial;
    fz = f.linearize(z, g);
  }
  return res;
}

OcpSolution solve(const OcpProblem& problem, const InitialGuess& guess,
                  const SolverOptions& options) {
  options.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const int n = problem.dimension();
  const int m = kStateDim * problem.horizon.N;
  if (guess.z.size() != n) {
    throw std::invalid_argument("initial guess has dimension " + std::to_string(guess.z.size()) +
                                ", expected " + std::to_string(n));
  }
  if (!guess.z.allFinite()) throw std::invalid_argument("initial guess contains NaN or inf");
  if (guess.multipliers.size() != 0 && guess.multipliers.size() != m) {
    throw std::invalid_argument("multiplier guess has wrong dimension");
  }

  const Eigen::VectorXd lo = problem.lower_bounds();
  const Eigen::VectorXd hi = problem.upper_bounds();
  Eigen::VectorXd z = project(guess.z, lo, hi);

  AugmentedLagrangian al(problem, options.kernels);
  if (guess.multipliers.size() == m && guess.multipliers.allFinite()) {
    al.set_multipliers(guess.multipliers);
  }
  double rho = options.initial_penalty;
  al.set_penalty(rho);

  BoxOptions box;
  box.max_iterations = options.max_inner_iterations;
  box.tolerance = options.optimality_tolerance;
  box.deadline = now_seconds() + options.time_budget;

  OcpSolution out;
  SolveStatus status = SolveStatus::max_iter;

  // Already optimal? Checked with rho = 0 so that the test is on the plain
  // Lagrangian with the supplied multipliers.
  {
    Eigen::VectorXd g = lagrangian_gradient(problem, z, al.multipliers());
    HorizonEval ev;
    evaluate_horizon(problem, z, false, ev, options.kernels);
    const double c0 = inf_norm(ev.defects());
    if (c0 <= options.feasibility_tolerance &&
        projected_gradient_norm(z, g, lo, hi) <= options.optimality_tolerance) {
      status = SolveStatus::converged;
    }
  }

  double prev_defect = std::numeric_limits<double>::infinity();
  int outer = 0;
  int inner_total = 0;
  // Inner tolerance starts loose and tightens with the constraint violation.
  double omega = std::max(options.optimality_tolerance, 1e-2);
  while (status != SolveStatus::converged && outer < options.max_outer_iterations) {
    ++outer;
    box.tolerance = omega;
    const BoxResult r = minimize_in_box(al, z, lo, hi, box);
    inner_total += r.iterations;

    HorizonEval ev;
    evaluate_horizon(problem, z, false, ev, options.kernels);
    const Eigen::VectorXd c = ev.defects();
    const double cn = inf_norm(c);
    al.set_multipliers(al.multipliers() + rho * c);

    // The inner gradient is the Lagrangian gradient at the updated multipliers.
    if (r.converged && cn <= options.feasibility_tolerance &&
        omega <= options.optimality_tolerance) {
      status = SolveStatus::converged;
      break;
    }
    if (r.timed_out) break;
    omega = std::max(options.optimality_tolerance, std::min(0.1 * omega, cn));
    if (cn > 0.25 * prev_defect) {
      rho = std::min(rho * options.penalty_growth, options.max_penalty);
      al.set_penalty(rho);
    }
    prev_defect = cn;
  }

  if (!first_stage_feasible(problem, options.bound_tolerance)) {
    status = SolveStatus::infeasible_bounds;
  }

  out = unpack_solution(problem, z);
  out.multipliers = al.multipliers();
  out.objective = objective(out.states, out.controls, problem.refs, problem.weights, problem.robot);
  out.max_defect = inf_norm(dynamics_defects(problem, z));
  out.status = status;
  out.iterations = outer;
  out.inner_iterations = inner_total;
  out.solve_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

Eigen::VectorXd lagrangian_gradient(const OcpProblem& problem, const Eigen::VectorXd& z,
                                    const Eigen::VectorXd& multipliers) {
  HorizonEval ev;
  evaluate_horizon_serial(problem, z, true, ev);
  Eigen::VectorXd lambda = multipliers;
  if (lambda.size() == 0) lambda = Eigen::VectorXd::Zero(kStateDim * problem.horizon.N);
  Eigen::VectorXd g;
  assemble_gradient_serial(problem, ev, lambda, g);
  return g;
}

KktReport kkt_report(const OcpProblem& problem, const OcpSolution& solution,
                     double bound_tolerance) {
  const Eigen::VectorXd z = solution.decision();
  if (z.size() != problem.dimension()) {
    throw std::invalid_argument("solution does not match problem dimension");
  }
  const Eigen::VectorXd lo = problem.lower_bounds();
  const Eigen::VectorXd hi = problem.upper_bounds();

  KktReport rep;
  rep.defect_norm = inf_norm(dynamics_defects(problem, z));
  rep.bound_violation =
      std::max({0.0, (lo - z).maxCoeff(), (z - hi).maxCoeff()});
  const Eigen::VectorXd g = lagrangian_gradient(problem, z, solution.multipliers);
  rep.stationarity = projected_gradient_norm(z, g, lo, hi);
  rep.bound_multipliers = Eigen::VectorXd::Zero(z.size());
  for (int i = 0; i < z.size(); ++i) {
    if (z[i] - lo[i] <= bound_tolerance || hi[i] - z[i] <= bound_tolerance) {
      rep.bound_multipliers[i] = g[i];
    }
  }
  return rep;
}

}  // namespace telemanip
