#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "telemanip/dynamics.hpp"
#include "telemanip/nlp_solver.hpp"
#include "telemanip/ocp.hpp"
#include "telemanip/operator_input.hpp"

namespace telemanip {

/// Everything the receding-horizon controller needs.
struct ControllerConfig {
  std::string preset_name = "P1";
  Weights weights = preset("P1");
  Bounds bounds = Bounds::defaults();
  HorizonConfig horizon;
  RobotParams robot;
  LiquidParams liquid;
  SolverOptions solver;
  double input_scale = 1.0;
  double velocity_smoothing = 0.0;

  /// Sets both preset_name and weights.
  void use_preset(const std::string& name);
  void validate() const;
};

struct FeedbackThreshold {
  double q = 0.01;     ///< rad
  double qdot = 0.05;  ///< rad/s
};

enum class PlantIntegrator { rk4, euler };

struct SimConfig {
  double control_rate = 30.0;  ///< Hz
  int substeps = 10;           ///< plant steps per control tick
  FeedbackThreshold delta_max;
  double duration = 10.0;      ///< s
  std::uint64_t seed = 0;
  double noise_q = 0.0;        ///< std-dev of measurement noise on q
  double noise_qdot = 0.0;     ///< std-dev of measurement noise on qdot
  PlantIntegrator plant = PlantIntegrator::rk4;
  Vec3 q_initial = Vec3(-1.0, 2.0, -1.0);
  /// Fraction of the control period granted to each solve.
  double budget_fraction = 0.8;
  /// When false the solver runs without a wall-clock budget and the log
  /// carries solve_ms = 0, making runs byte-reproducible.
  bool record_solve_time = true;

  double period() const { return 1.0 / control_rate; }
  void validate() const;
};

struct GateResult {
  Vec3 q;
  Vec3 qdot;
  bool fired = false;
};

/// Keeps the predicted joint state unless some component deviates from the
/// measurement by more than its threshold, in which case the measurement is
/// used.
GateResult feedback_gate(const Vec3& predicted_q, const Vec3& predicted_qdot,
                         const Vec3& measured_q, const Vec3& measured_qdot,
                         const FeedbackThreshold& delta_max);

struct TickRecord {
  double t = 0.0;
  Vec3 q = Vec3::Zero();
  Vec3 qdot = Vec3::Zero();
  double beta = 0.0;
  double betadot = 0.0;
  Pose2D pose;
  Pose2D reference;
  Vec3 u = Vec3::Zero();
  bool gate = false;
  double solve_ms = 0.0;
  SolveStatus status = SolveStatus::converged;
};

struct TrajectoryLog {
  double control_rate = 30.0;
  std::vector<TickRecord> ticks;
  bool diverged = false;
  /// Ticks at which the plant slosh angle left the valid range.
  std::vector<std::size_t> spill_ticks;
  std::string diagnostic;
};

inline constexpr const char* kLogHeader =
    "t,q1,q2,q3,qd1,qd2,qd3,beta,betadot,x,z,theta,xr,zr,thetar,u1,u2,u3,gate,solve_ms,status";

/// Header line followed by one write_log_row() per tick.
void write_log_csv(std::ostream& out, const TrajectoryLog& log);
void write_log_row(std::ostream& out, const TickRecord& record);

/// The closed loop one control tick at a time: input mapping, reference
/// prediction, feedback gating, warm-started solve, plant integration.
class ClosedLoop {
 public:
  ClosedLoop(ControllerConfig controller, SimConfig sim);

  /// Advances one control period using the given operator sample.
  TickRecord step(const OperatorSample& sample);

  /// Takes effect at the next step().
  void set_weights(const std::string& preset_name, const Weights& weights);

  const StateVec& plant_state() const { return plant_; }
  Pose2D plant_pose() const;
  const ControllerConfig& controller() const { return controller_; }
  const SimConfig& sim() const { return sim_; }
  std::size_t tick() const { return tick_; }
  bool diverged() const { return diverged_; }
  const std::optional<OcpSolution>& last_solution() const { return plan_; }

 private:
  void integrate_plant(const Vec3& u);

  ControllerConfig controller_;
  SimConfig sim_;
  StateVec plant_ = StateVec::Zero();
  std::optional<StateVec> predicted_;
  std::optional<OcpSolution> plan_;
  MappingState mapping_;
  ReferencePredictor predictor_;
  std::mt19937_64 rng_;
  std::size_t tick_ = 0;
  bool diverged_ = false;
};

/// Runs ticks for sim.duration, holding the last sample if the stream is
/// shorter. Stops early with log.diverged set if the plant state turns
/// non-finite.
TrajectoryLog run_closed_loop(const ControllerConfig& controller, const SimConfig& sim,
                              std::span<const OperatorSample> source);

struct Metrics {
  double rmse_x = 0.0;
  double rmse_z = 0.0;
  double rmse_theta = 0.0;
  double max_abs_beta = 0.0;
  double delay_ms = 0.0;
  double mean_solve_ms = 0.0;
  double p95_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  std::size_t gate_fire_count = 0;
  std::size_t fallback_count = 0;
  std::size_t spill_count = 0;
  std::size_t ticks = 0;
};

/// Lag (in ticks) maximizing the normalized cross-correlation of actual
/// against reference, searched over [-max_lag, max_lag]. Ties and constant
/// signals resolve to the lag closest to zero.
int cross_correlation_lag(std::span<const double> reference, std::span<const double> actual,
                          int max_lag);

Metrics compute_metrics(const TrajectoryLog& log);

std::string metrics_to_json(const Metrics& metrics, int indent = 2);

}  // namespace telemanip
