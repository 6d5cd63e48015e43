#include "telemanip/operator_input.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace telemanip {

MappingResult map_input(const OperatorSample& sample, const Pose2D& current_pose,
                        const MappingState& state, double scale) {
  MappingResult r{current_pose, state};
  if (!sample.clutch) {
    r.state.engaged = false;
    r.state.target = current_pose;
    r.target = current_pose;
    return r;
  }
  if (!state.engaged) {
    r.state.engaged = true;
    r.state.device_ref_x = sample.device_x;
    r.state.device_ref_z = sample.device_z;
    r.state.pose_ref = current_pose;
    r.state.theta_ref = current_pose.theta;
  }
  r.target.x = r.state.pose_ref.x + scale * (sample.device_x - r.state.device_ref_x);
  r.target.z = r.state.pose_ref.z + scale * (sample.device_z - r.state.device_ref_z);
  r.target.theta = r.state.theta_ref;
  r.state.target = r.target;
  return r;
}

ReferenceTrajectory predict_reference(const TargetSample& latest,
                                      const std::optional<TargetSample>& previous,
                                      const HorizonConfig& horizon, bool moving) {
  double vx = 0.0;
  double vz = 0.0;
  if (moving && previous && latest.t > previous->t) {
    const double span = latest.t - previous->t;
    vx = (latest.pose.x - previous->pose.x) / span;
    vz = (latest.pose.z - previous->pose.z) / span;
  }
  ReferenceTrajectory refs;
  refs.poses.reserve(static_cast<std::size_t>(horizon.N));
  for (int k = 1; k <= horizon.N; ++k) {
    const double ahead = k * horizon.dt;
    refs.poses.push_back({latest.pose.x + vx * ahead, latest.pose.z + vz * ahead, latest.pose.theta});
  }
  return refs;
}

ReferencePredictor::ReferencePredictor(double smoothing) : smoothing_(smoothing) {
  if (!(smoothing >= 0.0 && smoothing < 1.0)) {
    throw std::invalid_argument("velocity smoothing must lie in [0, 1)");
  }
}

void ReferencePredictor::push(const TargetSample& target, bool moving) {
  double vx = 0.0;
  double vz = 0.0;
  if (moving && latest_ && target.t > latest_->t) {
    const double span = target.t - latest_->t;
    vx = (target.pose.x - latest_->pose.x) / span;
    vz = (target.pose.z - latest_->pose.z) / span;
    vx_ = smoothing_ * vx_ + (1.0 - smoothing_) * vx;
    vz_ = smoothing_ * vz_ + (1.0 - smoothing_) * vz;
  } else {
    vx_ = 0.0;
    vz_ = 0.0;
  }
  latest_ = target;
}

ReferenceTrajectory ReferencePredictor::predict(const HorizonConfig& horizon) const {
  const TargetSample base = latest_.value_or(TargetSample{});
  ReferenceTrajectory refs;
  refs.poses.reserve(static_cast<std::size_t>(horizon.N));
  for (int k = 1; k <= horizon.N; ++k) {
    const double ahead = k * horizon.dt;
    refs.poses.push_back({base.pose.x + vx_ * ahead, base.pose.z + vz_ * ahead, base.pose.theta});
  }
  return refs;
}

void ReferencePredictor::reset() {
  latest_.reset();
  vx_ = 0.0;
  vz_ = 0.0;
}

namespace {

double parse_number(const std::string& field, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != field.size() || !std::isfinite(v)) {
    throw ReplayError("line " + std::to_string(line) + ": invalid number '" + field + "'");
  }
  return v;
}

bool parse_flag(const std::string& field, std::size_t line) {
  if (field == "1" || field == "true") return true;
  if (field == "0" || field == "false") return false;
  throw ReplayError("line " + std::to_string(line) + ": invalid clutch flag '" + field + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<OperatorSample> parse_replay(std::istream& in, double control_rate) {
  if (!(control_rate > 0.0)) throw std::invalid_argument("control rate must be positive");
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ReplayError("line 1: empty replay file");
  ++lineno;
  if (trim(line) != "t,device_x,device_z,clutch") {
    throw ReplayError("line 1: expected header 't,device_x,device_z,clutch'");
  }

  std::vector<OperatorSample> raw;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    if (fields.size() != 4) {
      throw ReplayError("line " + std::to_string(lineno) + ": expected 4 fields, got " +
                        std::to_string(fields.size()));
    }
    OperatorSample s{parse_number(fields[0], lineno), parse_number(fields[1], lineno),
                     parse_number(fields[2], lineno), parse_flag(fields[3], lineno)};
    if (!raw.empty() && s.t < raw.back().t) {
      throw ReplayError("line " + std::to_string(lineno) + ": timestamp decreases");
    }
    raw.push_back(s);
  }
  if (raw.empty()) throw ReplayError("line " + std::to_string(lineno) + ": no samples");

  // Zero-order hold onto the control grid, relative to the first timestamp.
  const double t0 = raw.front().t;
  const auto ticks =
      static_cast<std::size_t>(std::floor((raw.back().t - t0) * control_rate + 1e-9)) + 1;
  std::vector<OperatorSample> out;
  out.reserve(ticks);
  std::size_t j = 0;
  for (std::size_t i = 0; i < ticks; ++i) {
    const double t = static_cast<double>(i) / control_rate;
    while (j + 1 < raw.size() && raw[j + 1].t - t0 <= t + 1e-9) ++j;
    OperatorSample s = raw[j];
    s.t = t;
    out.push_back(s);
  }
  return out;
}

std::vector<OperatorSample> replay_source(const std::filesystem::path& path, double control_rate) {
  std::ifstream in(path);
  if (!in) throw ReplayError("cannot open replay file " + path.string());
  return parse_replay(in, control_rate);
}

void write_replay(std::ostream& out, const std::vector<OperatorSample>& samples) {
  out << "t,device_x,device_z,clutch\n";
  out << std::setprecision(17);
  for (const OperatorSample& s : samples) {
    out << s.t << ',' << s.device_x << ',' << s.device_z << ',' << (s.clutch ? 1 : 0) << '\n';
  }
}

std::vector<OperatorSample> generate_input(const std::string& name, const GeneratorParams& p,
                                           double control_rate, double duration) {
  if (!(control_rate > 0.0) || !(duration > 0.0)) {
    throw std::invalid_argument("generator needs positive rate and duration");
  }
  if (name != "ramp" && name != "step" && name != "sine" && name != "idle") {
    throw std::invalid_argument("unknown input generator '" + name + "'");
  }
  if (name == "ramp" && !(p.rise > 0.0)) throw std::invalid_argument("ramp rise must be positive");

  const auto ticks = static_cast<std::size_t>(std::llround(duration * control_rate));
  std::vector<OperatorSample> out;
  out.reserve(ticks);
  for (std::size_t i = 0; i < ticks; ++i) {
    const double t = static_cast<double>(i) / control_rate;
    OperatorSample s{t, 0.0, 0.0, name != "idle"};
    const double since = t - p.start;
    if (name == "ramp") {
      s.device_x = p.amplitude * std::clamp(since / p.rise, 0.0, 1.0);
    } else if (name == "step") {
      s.device_x = since >= 0.0 ? p.amplitude : 0.0;
    } else if (name == "sine") {
      s.device_x = since >= 0.0 ? p.amplitude * std::sin(2.0 * std::numbers::pi * p.frequency * since)
                                : 0.0;
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace telemanip
