#include "telemanip/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace telemanip {

namespace {

using Json = nlohmann::ordered_json;

struct Field {
  const char* key;
  std::function<Json(const RunConfig&)> get;
  std::function<void(RunConfig&, const Json&)> set;
};

std::string type_error(const char* key, const char* expected) {
  return std::string("config key '") + key + "' must be " + expected;
}

double as_number(const Json& v, const char* key) {
  if (!v.is_number()) throw ConfigError(type_error(key, "a number"));
  return v.get<double>();
}

long long as_integer(const Json& v, const char* key) {
  if (!v.is_number_integer()) throw ConfigError(type_error(key, "an integer"));
  return v.get<long long>();
}

bool as_bool(const Json& v, const char* key) {
  if (!v.is_boolean()) throw ConfigError(type_error(key, "true or false"));
  return v.get<bool>();
}

std::string as_string(const Json& v, const char* key) {
  if (!v.is_string()) throw ConfigError(type_error(key, "a string"));
  return v.get<std::string>();
}

Vec3 as_vec3(const Json& v, const char* key) {
  if (!v.is_array() || v.size() != 3) throw ConfigError(type_error(key, "an array of 3 numbers"));
  Vec3 out;
  for (int i = 0; i < 3; ++i) out[i] = as_number(v[static_cast<std::size_t>(i)], key);
  return out;
}

Json vec_json(const Vec3& v) { return Json::array({v[0], v[1], v[2]}); }

#define NUM(k, member)                                              \
  Field{k, [](const RunConfig& c) { return Json(c.member); },       \
        [](RunConfig& c, const Json& v) { c.member = as_number(v, k); }}
#define INT(k, member)                                              \
  Field{k, [](const RunConfig& c) { return Json(c.member); },       \
        [](RunConfig& c, const Json& v) {                           \
          c.member = static_cast<decltype(c.member)>(as_integer(v, k)); }}
#define BOOL(k, member)                                             \
  Field{k, [](const RunConfig& c) { return Json(c.member); },       \
        [](RunConfig& c, const Json& v) { c.member = as_bool(v, k); }}
#define STR(k, member)                                              \
  Field{k, [](const RunConfig& c) { return Json(c.member); },       \
        [](RunConfig& c, const Json& v) { c.member = as_string(v, k); }}
#define VEC(k, member)                                              \
  Field{k, [](const RunConfig& c) { return vec_json(c.member); },   \
        [](RunConfig& c, const Json& v) { c.member = as_vec3(v, k); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      STR("preset", controller.preset_name),
      VEC("weights.Q1", controller.weights.Q1),
      NUM("weights.Q2", controller.weights.Q2),
      VEC("weights.R", controller.weights.R),
      INT("horizon.N", controller.horizon.N),
      NUM("horizon.dt", controller.horizon.dt),
      VEC("bounds.q_min", controller.bounds.q_min),
      VEC("bounds.q_max", controller.bounds.q_max),
      VEC("bounds.qdot_min", controller.bounds.qdot_min),
      VEC("bounds.qdot_max", controller.bounds.qdot_max),
      VEC("bounds.u_min", controller.bounds.u_min),
      VEC("bounds.u_max", controller.bounds.u_max),
      NUM("robot.L1", controller.robot.L1),
      NUM("robot.L2", controller.robot.L2),
      NUM("robot.L3", controller.robot.L3),
      NUM("liquid.l", controller.liquid.l),
      NUM("liquid.h", controller.liquid.h),
      NUM("liquid.m", controller.liquid.m),
      NUM("liquid.d", controller.liquid.d),
      NUM("liquid.g", controller.liquid.g),
      INT("solver.max_outer_iterations", controller.solver.max_outer_iterations),
      INT("solver.max_inner_iterations", controller.solver.max_inner_iterations),
      NUM("solver.feasibility_tolerance", controller.solver.feasibility_tolerance),
      NUM("solver.optimality_tolerance", controller.solver.optimality_tolerance),
      Field{"solver.kernels",
            [](const RunConfig& c) {
              return Json(c.controller.solver.kernels == KernelMode::parallel ? "parallel"
                                                                              : "serial");
            },
            [](RunConfig& c, const Json& v) {
              const std::string s = as_string(v, "solver.kernels");
              if (s == "serial") {
                c.controller.solver.kernels = KernelMode::serial;
              } else if (s == "parallel") {
                c.controller.solver.kernels = KernelMode::parallel;
              } else {
                throw ConfigError("config key 'solver.kernels' must be serial or parallel");
              }
            }},
      NUM("mapping.input_scale", controller.input_scale),
      NUM("mapping.velocity_smoothing", controller.velocity_smoothing),
      NUM("sim.control_rate", sim.control_rate),
      INT("sim.substeps", sim.substeps),
      NUM("sim.delta_max_q", sim.delta_max.q),
      NUM("sim.delta_max_qdot", sim.delta_max.qdot),
      NUM("sim.duration", sim.duration),
      Field{"sim.seed", [](const RunConfig& c) { return Json(c.sim.seed); },
            [](RunConfig& c, const Json& v) {
              if (!v.is_number_unsigned()) {
                throw ConfigError(type_error("sim.seed", "a non-negative integer"));
              }
              c.sim.seed = v.get<std::uint64_t>();
            }},
      NUM("sim.noise_q", sim.noise_q),
      NUM("sim.noise_qdot", sim.noise_qdot),
      Field{"sim.plant",
            [](const RunConfig& c) {
              return Json(c.sim.plant == PlantIntegrator::euler ? "euler" : "rk4");
            },
            [](RunConfig& c, const Json& v) {
              const std::string s = as_string(v, "sim.plant");
              if (s == "rk4") {
                c.sim.plant = PlantIntegrator::rk4;
              } else if (s == "euler") {
                c.sim.plant = PlantIntegrator::euler;
              } else {
                throw ConfigError("config key 'sim.plant' must be rk4 or euler");
              }
            }},
      VEC("sim.q_initial", sim.q_initial),
      NUM("sim.budget_fraction", sim.budget_fraction),
      BOOL("sim.record_solve_time", sim.record_solve_time),
      STR("input", input),
      NUM("generator.amplitude", generator.amplitude),
      NUM("generator.start", generator.start),
      NUM("generator.rise", generator.rise),
      NUM("generator.frequency", generator.frequency),
      STR("out", out),
      STR("metrics_out", metrics_out),
      STR("session_log", session_log),
      INT("port", port),
  };
  return table;
}

#undef NUM
#undef INT
#undef BOOL
#undef STR
#undef VEC

Json parse_object(const std::string& text, const std::string& what) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(what + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(what + ": expected a JSON object");
  return doc;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const std::vector<std::string>& generator_names() {
  static const std::vector<std::string> names = {"ramp", "step", "sine", "idle"};
  return names;
}

bool RunConfig::input_is_generator() const {
  const auto& names = generator_names();
  return std::find(names.begin(), names.end(), input) != names.end();
}

void RunConfig::validate() const {
  try {
    controller.validate();
    sim.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (input.empty()) throw ConfigError("no input source given");
  if (!input_is_generator() && !std::filesystem::is_regular_file(input)) {
    throw ConfigError("input file not found: " + input);
  }
  if (input == "ramp" && !(generator.rise > 0.0)) {
    throw ConfigError("generator.rise must be positive");
  }
  if (port < 0 || port > 65535) throw ConfigError("port must lie in [0, 65535]");
}

std::string serialize_config(const RunConfig& config) {
  // One key per line, arrays kept inline.
  std::string out = "{\n";
  const auto& table = fields();
  for (std::size_t i = 0; i < table.size(); ++i) {
    out += "  " + Json(table[i].key).dump() + ": " + table[i].get(config).dump();
    out += i + 1 < table.size() ? ",\n" : "\n";
  }
  return out + "}\n";
}

RunConfig parse_config(const std::string& text, const RunConfig& base) {
  const Json doc = parse_object(text, "config");
  RunConfig out = base;
  const auto& table = fields();
  for (const auto& [key, value] : doc.items()) {
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(out, value);
  }
  return out;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base) {
  return parse_config(read_file(path), base);
}

Weights load_weights(const std::filesystem::path& path) {
  const Json doc = parse_object(read_file(path), path.string());
  Weights w;
  for (const auto& [key, value] : doc.items()) {
    if (key == "Q1") {
      w.Q1 = as_vec3(value, "Q1");
    } else if (key == "Q2") {
      w.Q2 = as_number(value, "Q2");
    } else if (key == "R") {
      w.R = as_vec3(value, "R");
    } else {
      throw ConfigError("unknown weights key '" + key + "'");
    }
  }
  if (!doc.contains("Q1") || !doc.contains("Q2") || !doc.contains("R")) {
    throw ConfigError(path.string() + ": weights need Q1, Q2 and R");
  }
  try {
    w.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return w;
}

std::vector<OperatorSample> load_input(const RunConfig& config) {
  if (config.input_is_generator()) {
    return generate_input(config.input, config.generator, config.sim.control_rate,
                          config.sim.duration);
  }
  try {
    return replay_source(config.input, config.sim.control_rate);
  } catch (const ReplayError& e) {
    throw ConfigError(config.input + ": " + e.what());
  }
}

}  // namespace telemanip
