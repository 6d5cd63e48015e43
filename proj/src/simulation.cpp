#include "telemanip/simulation.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace telemanip {

void ControllerConfig::use_preset(const std::string& name) {
  weights = preset(name);
  preset_name = name;
  std::transform(preset_name.begin(), preset_name.end(), preset_name.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
}

void ControllerConfig::validate() const {
  weights.validate();
  bounds.validate();
  horizon.validate();
  robot.validate();
  liquid.validate();
  solver.validate();
  if (!(input_scale > 0.0)) throw std::invalid_argument("input scale must be positive");
  if (!(velocity_smoothing >= 0.0 && velocity_smoothing < 1.0)) {
    throw std::invalid_argument("velocity smoothing must lie in [0, 1)");
  }
}

void SimConfig::validate() const {
  if (!(control_rate > 0.0)) throw std::invalid_argument("control rate must be positive");
  if (substeps < 1) throw std::invalid_argument("plant substeps must be at least 1");
  if (!(delta_max.q >= 0.0 && delta_max.qdot >= 0.0)) {
    throw std::invalid_argument("feedback thresholds must be non-negative");
  }
  if (!(duration > 0.0)) throw std::invalid_argument("duration must be positive");
  if (!(noise_q >= 0.0 && noise_qdot >= 0.0)) {
    throw std::invalid_argument("noise levels must be non-negative");
  }
  if (!(budget_fraction > 0.0)) throw std::invalid_argument("budget fraction must be positive");
  if (!q_initial.allFinite()) throw std::invalid_argument("initial joint angles must be finite");
}

GateResult feedback_gate(const Vec3& predicted_q, const Vec3& predicted_qdot,
                         const Vec3& measured_q, const Vec3& measured_qdot,
                         const FeedbackThreshold& delta_max) {
  const double dq = (predicted_q - measured_q).cwiseAbs().maxCoeff();
  const double dqd = (predicted_qdot - measured_qdot).cwiseAbs().maxCoeff();
  if (dq > delta_max.q || dqd > delta_max.qdot) return {measured_q, measured_qdot, true};
  return {predicted_q, predicted_qdot, false};
}

ClosedLoop::ClosedLoop(ControllerConfig controller, SimConfig sim)
    : controller_(std::move(controller)),
      sim_(sim),
      predictor_(controller_.velocity_smoothing),
      rng_(sim.seed) {
  controller_.validate();
  sim_.validate();
  plant_.setZero();
  plant_.segment<3>(0) = sim_.q_initial;
}

Pose2D ClosedLoop::plant_pose() const {
  return forward_kinematics(plant_.segment<3>(0), controller_.robot);
}

void ClosedLoop::set_weights(const std::string& preset_name, const Weights& weights) {
  weights.validate();
  controller_.preset_name = preset_name;
  controller_.weights = weights;
}

void ClosedLoop::integrate_plant(const Vec3& u) {
  const double h = sim_.period() / sim_.substeps;
  for (int i = 0; i < sim_.substeps; ++i) {
    plant_ = sim_.plant == PlantIntegrator::rk4
                 ? rk4_step(plant_, u, h, controller_.robot, controller_.liquid)
                 : euler_step(plant_, u, h, controller_.robot, controller_.liquid);
  }
}

TickRecord ClosedLoop::step(const OperatorSample& sample) {
  const double t = static_cast<double>(tick_) * sim_.period();
  TickRecord rec;
  rec.t = t;
  rec.q = plant_.segment<3>(0);
  rec.qdot = plant_.segment<3>(3);
  rec.beta = plant_[6];
  rec.betadot = plant_[7];
  rec.pose = plant_pose();

  if (diverged_) {
    rec.status = SolveStatus::max_iter;
    ++tick_;
    return rec;
  }

  Vec3 meas_q = rec.q;
  Vec3 meas_qd = rec.qdot;
  if (sim_.noise_q > 0.0 || sim_.noise_qdot > 0.0) {
    std::normal_distribution<double> nq(0.0, sim_.noise_q > 0.0 ? sim_.noise_q : 1.0);
    std::normal_distribution<double> nqd(0.0, sim_.noise_qdot > 0.0 ? sim_.noise_qdot : 1.0);
    for (int i = 0; i < 3; ++i) {
      if (sim_.noise_q > 0.0) meas_q[i] += nq(rng_);
      if (sim_.noise_qdot > 0.0) meas_qd[i] += nqd(rng_);
    }
  }

  // Joint state: gated between prediction and measurement. Slosh state: always
  // the open-loop model prediction.
  StateVec xi0;
  if (predicted_) {
    const GateResult g = feedback_gate(predicted_->segment<3>(0), predicted_->segment<3>(3),
                                       meas_q, meas_qd, sim_.delta_max);
    xi0 << g.q, g.qdot, (*predicted_)[6], (*predicted_)[7];
    rec.gate = g.fired;
  } else {
    xi0 << meas_q, meas_qd, plant_[6], plant_[7];
  }

  const Pose2D current = forward_kinematics(meas_q, controller_.robot);
  const MappingResult mapped = map_input(sample, current, mapping_, controller_.input_scale);
  mapping_ = mapped.state;
  rec.reference = mapped.target;
  predictor_.push({t, mapped.target}, mapped.state.engaged);

  const OcpProblem problem =
      build_problem(xi0, predictor_.predict(controller_.horizon), controller_.weights,
                    controller_.bounds, controller_.horizon, controller_.robot, controller_.liquid);
  const InitialGuess guess = shift_warm_start(plan_, problem);
  SolverOptions opts = controller_.solver;
  if (sim_.record_solve_time) {
    opts.time_budget = std::min(opts.time_budget, sim_.budget_fraction * sim_.period());
  }
  OcpSolution sol = solve(problem, guess, opts);
  rec.status = sol.status;
  rec.solve_ms = sim_.record_solve_time ? sol.solve_ms : 0.0;

  Vec3 u = sol.controls.front();
  if (sol.status != SolveStatus::converged && plan_ && plan_->controls.size() > 1) {
    u = plan_->controls[1];
  }
  u = u.cwiseMax(controller_.bounds.u_min).cwiseMin(controller_.bounds.u_max);
  rec.u = u;

  predicted_ = euler_step(problem.xi0, u, sim_.period(), controller_.robot, controller_.liquid);
  plan_ = std::move(sol);

  integrate_plant(u);
  if (!plant_.allFinite()) diverged_ = true;
  ++tick_;
  return rec;
}

TrajectoryLog run_closed_loop(const ControllerConfig& controller, const SimConfig& sim,
                              std::span<const OperatorSample> source) {
  if (source.empty()) throw std::invalid_argument("operator sample stream is empty");
  ClosedLoop loop(controller, sim);
  TrajectoryLog log;
  log.control_rate = sim.control_rate;
  const auto ticks = static_cast<std::size_t>(std::llround(sim.duration * sim.control_rate));
  log.ticks.reserve(ticks);
  for (std::size_t i = 0; i < ticks; ++i) {
    const OperatorSample& s = source[std::min(i, source.size() - 1)];
    const TickRecord rec = loop.step(s);
    if (!SloshState{rec.beta, rec.betadot}.valid()) log.spill_ticks.push_back(i);
    log.ticks.push_back(rec);
    if (loop.diverged()) {
      log.diverged = true;
      log.diagnostic = "plant state became non-finite after tick " + std::to_string(i);
      break;
    }
  }
  return log;
}

void write_log_row(std::ostream& out, const TickRecord& r) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    out << buf;
  };
  num(r.t);
  for (double v : {r.q[0], r.q[1], r.q[2], r.qdot[0], r.qdot[1], r.qdot[2], r.beta, r.betadot,
                   r.pose.x, r.pose.z, r.pose.theta, r.reference.x, r.reference.z,
                   r.reference.theta, r.u[0], r.u[1], r.u[2]}) {
    out << ',';
    num(v);
  }
  out << ',' << (r.gate ? 1 : 0) << ',';
  std::snprintf(buf, sizeof buf, "%.3f", r.solve_ms);
  out << buf << ',' << to_string(r.status) << '\n';
}

void write_log_csv(std::ostream& out, const TrajectoryLog& log) {
  out << kLogHeader << '\n';
  for (const TickRecord& r : log.ticks) write_log_row(out, r);
}

int cross_correlation_lag(std::span<const double> reference, std::span<const double> actual,
                          int max_lag) {
  const int n = static_cast<int>(std::min(reference.size(), actual.size()));
  int best_lag = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int a = 0; a <= max_lag; ++a) {
    for (int lag : {a, -a}) {
      if (a == 0 && lag != 0) continue;
      const int start = std::max(0, -lag);
      const int stop = std::min(n, n - lag);
      const int m = stop - start;
      if (m < 2) continue;
      double mr = 0.0, ma = 0.0;
      for (int t = start; t < stop; ++t) {
        mr += reference[t];
        ma += actual[t + lag];
      }
      mr /= m;
      ma /= m;
      double sra = 0.0, srr = 0.0, saa = 0.0;
      for (int t = start; t < stop; ++t) {
        const double dr = reference[t] - mr;
        const double da = actual[t + lag] - ma;
        sra += dr * da;
        srr += dr * dr;
        saa += da * da;
      }
      if (srr <= 1e-24 || saa <= 1e-24) continue;
      const double corr = sra / std::sqrt(srr * saa);
      if (corr > best + 1e-12) {
        best = corr;
        best_lag = lag;
      }
    }
  }
  return best_lag;
}

Metrics compute_metrics(const TrajectoryLog& log) {
  Metrics m;
  m.ticks = log.ticks.size();
  if (log.ticks.empty()) return m;
  const double n = static_cast<double>(log.ticks.size());
  std::vector<double> ref_x, act_x, solve;
  ref_x.reserve(log.ticks.size());
  act_x.reserve(log.ticks.size());
  solve.reserve(log.ticks.size());
  for (const TickRecord& r : log.ticks) {
    const Vec3 e = tracking_error(r.pose, r.reference);
    m.rmse_x += e[0] * e[0];
    m.rmse_z += e[1] * e[1];
    m.rmse_theta += e[2] * e[2];
    m.max_abs_beta = std::max(m.max_abs_beta, std::abs(r.beta));
    m.gate_fire_count += r.gate ? 1 : 0;
    m.fallback_count += r.status != SolveStatus::converged ? 1 : 0;
    ref_x.push_back(r.reference.x);
    act_x.push_back(r.pose.x);
    solve.push_back(r.solve_ms);
  }
  m.rmse_x = std::sqrt(m.rmse_x / n);
  m.rmse_z = std::sqrt(m.rmse_z / n);
  m.rmse_theta = std::sqrt(m.rmse_theta / n);
  m.spill_count = log.spill_ticks.size();

  const int max_lag = static_cast<int>(log.ticks.size() / 4);
  m.delay_ms = 1000.0 * cross_correlation_lag(ref_x, act_x, max_lag) / log.control_rate;

  m.mean_solve_ms = std::accumulate(solve.begin(), solve.end(), 0.0) / n;
  m.max_solve_ms = *std::max_element(solve.begin(), solve.end());
  std::vector<double> sorted = solve;
  std::sort(sorted.begin(), sorted.end());
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * n)) - 1;
  m.p95_solve_ms = sorted[std::min(idx, sorted.size() - 1)];
  return m;
}

std::string metrics_to_json(const Metrics& m, int indent) {
  nlohmann::ordered_json j;
  j["ticks"] = m.ticks;
  j["rmse_x"] = m.rmse_x;
  j["rmse_z"] = m.rmse_z;
  j["rmse_theta"] = m.rmse_theta;
  j["max_abs_beta"] = m.max_abs_beta;
  j["delay_ms"] = m.delay_ms;
  j["mean_solve_ms"] = m.mean_solve_ms;
  j["p95_solve_ms"] = m.p95_solve_ms;
  j["max_solve_ms"] = m.max_solve_ms;
  j["gate_fire_count"] = m.gate_fire_count;
  j["fallback_count"] = m.fallback_count;
  j["spill_count"] = m.spill_count;
  return j.dump(indent);
}

}  // namespace telemanip
