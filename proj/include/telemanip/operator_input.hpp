#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "telemanip/kinematics.hpp"
#include "telemanip/ocp.hpp"

namespace telemanip {

/// One reading of the 2D input device. device_x grows to the right,
/// device_z grows upward; clutch is the active-mode button.
struct OperatorSample {
  double t = 0.0;
  double device_x = 0.0;
  double device_z = 0.0;
  bool clutch = false;
};

/// Clutch bookkeeping for position-position mapping.
struct MappingState {
  bool engaged = false;
  double device_ref_x = 0.0;
  double device_ref_z = 0.0;
  Pose2D pose_ref;
  double theta_ref = 0.0;
  Pose2D target;
};

struct MappingResult {
  Pose2D target;
  MappingState state;
};

/// While the clutch is released the target follows current_pose. On the
/// rising edge the device position and the pose are latched; afterwards the
/// target is the latched pose displaced by scale * (device - latched device),
/// with theta held at the latched value.
MappingResult map_input(const OperatorSample& sample, const Pose2D& current_pose,
                        const MappingState& state, double scale = 1.0);

struct TargetSample {
  double t = 0.0;
  Pose2D pose;
};

/// Constant-velocity extrapolation: stage k (1..N) is latest + v * k * dt,
/// v from the last two targets. Theta is held. Without a previous sample, or
/// with moving == false, v is zero.
ReferenceTrajectory predict_reference(const TargetSample& latest,
                                      const std::optional<TargetSample>& previous,
                                      const HorizonConfig& horizon, bool moving = true);

/// Stateful wrapper around predict_reference() with optional exponential
/// smoothing of the velocity estimate (smoothing = 0 disables it).
class ReferencePredictor {
 public:
  explicit ReferencePredictor(double smoothing = 0.0);

  void push(const TargetSample& target, bool moving);
  ReferenceTrajectory predict(const HorizonConfig& horizon) const;
  void reset();

  const std::optional<TargetSample>& latest() const { return latest_; }
  double velocity_x() const { return vx_; }
  double velocity_z() const { return vz_; }

 private:
  double smoothing_;
  std::optional<TargetSample> latest_;
  double vx_ = 0.0;
  double vz_ = 0.0;
};

class ReplayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses a replay stream with header `t,device_x,device_z,clutch` and holds
/// it to the control rate: one sample per tick t_i = i / rate for
/// i = 0 .. floor(t_last * rate). Throws ReplayError with the line number on
/// malformed rows or decreasing timestamps.
std::vector<OperatorSample> parse_replay(std::istream& in, double control_rate);
std::vector<OperatorSample> replay_source(const std::filesystem::path& path, double control_rate);

void write_replay(std::ostream& out, const std::vector<OperatorSample>& samples);

/// Parameters of the built-in deterministic input generators.
struct GeneratorParams {
  double amplitude = 0.3;  ///< m, along device x
  double start = 0.5;      ///< s, motion onset
  double rise = 1.0;       ///< s, ramp duration
  double frequency = 0.5;  ///< Hz, sine only
};

/// "ramp": linear 0 -> amplitude over `rise` seconds then hold; "step": jump
/// at `start`; "sine": amplitude * sin(2 pi f (t - start)) after `start`;
/// "idle": clutch never engaged. The clutch is held for the other generators.
/// Throws std::invalid_argument for unknown names.
std::vector<OperatorSample> generate_input(const std::string& name, const GeneratorParams& params,
                                           double control_rate, double duration);

}  // namespace telemanip
