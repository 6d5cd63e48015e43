#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "telemanip/operator_input.hpp"
#include "telemanip/simulation.hpp"

namespace telemanip {

/// Malformed or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a batch run or a served session needs. The input is either a
/// generator name (ramp, step, sine, idle) or the path of a replay CSV.
struct RunConfig {
  ControllerConfig controller;
  SimConfig sim;
  std::string input = "ramp";
  GeneratorParams generator;
  std::string out = "run.csv";
  std::string metrics_out = "metrics.json";
  std::string session_log = "session.csv";
  int port = 8080;

  bool input_is_generator() const;
  /// Throws ConfigError on invalid values or a missing replay file.
  void validate() const;
};

/// Names accepted by generate_input().
const std::vector<std::string>& generator_names();

/// Flat JSON object with dotted keys, one per field, in a fixed order.
std::string serialize_config(const RunConfig& config);

/// Missing keys keep their defaults; unknown keys and wrong types throw
/// ConfigError. The result is not validated.
RunConfig parse_config(const std::string& text, const RunConfig& base = {});
RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = {});

/// Reads {"Q1": [..], "Q2": .., "R": [..]}.
Weights load_weights(const std::filesystem::path& path);

/// Samples for the configured input source at the control rate.
std::vector<OperatorSample> load_input(const RunConfig& config);

}  // namespace telemanip
