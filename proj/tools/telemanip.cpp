// Command-line front end: batch simulation, preset comparison and the live
// teleoperation server.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "telemanip/run_config.hpp"
#include "telemanip/simulation.hpp"
#include "telemanip/teleop_service.hpp"

namespace {

using telemanip::ConfigError;
using telemanip::RunConfig;
using Json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Overrides {
  std::string config_file;
  std::optional<std::string> preset;
  std::optional<std::string> weights_file;
  std::optional<std::string> input;
  std::optional<double> duration;
  std::optional<int> horizon;
  std::optional<double> dt;
  std::optional<std::string> out;
  std::optional<std::string> metrics_out;
  std::optional<std::uint64_t> seed;
  std::optional<int> port;
  bool deterministic = false;
  bool print_config = false;
};

void add_model_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_file, "JSON config file; flags override its values")
      ->check(CLI::ExistingFile);
  cmd->add_option("--preset", o.preset, "Weight preset: p1 (tracking) or p2 (slosh-free)");
  cmd->add_option("--weights-file", o.weights_file, "JSON file with Q1, Q2 and R");
  cmd->add_option("--horizon", o.horizon, "Prediction horizon N");
  cmd->add_option("--dt", o.dt, "Prediction step, s");
  cmd->add_flag("--print-config", o.print_config, "Print the effective config and exit");
}

void add_run_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--input", o.input, "Generator (ramp, step, sine, idle) or replay CSV path");
  cmd->add_option("--duration", o.duration, "Simulated time, s");
  cmd->add_option("--seed", o.seed, "Seed for measurement noise");
  cmd->add_flag("--deterministic", o.deterministic,
                "Solve without a wall-clock budget and log solve_ms = 0");
}

RunConfig build_config(const Overrides& o) {
  RunConfig c = o.config_file.empty() ? RunConfig{} : telemanip::load_config(o.config_file);
  if (o.preset) {
    try {
      c.controller.use_preset(*o.preset);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (o.weights_file) {
    c.controller.weights = telemanip::load_weights(*o.weights_file);
    c.controller.preset_name = "CUSTOM";
  }
  if (o.input) c.input = *o.input;
  if (o.duration) c.sim.duration = *o.duration;
  if (o.horizon) c.controller.horizon.N = *o.horizon;
  if (o.dt) c.controller.horizon.dt = *o.dt;
  if (o.out) c.out = *o.out;
  if (o.metrics_out) c.metrics_out = *o.metrics_out;
  if (o.seed) c.sim.seed = *o.seed;
  if (o.port) c.port = *o.port;
  if (o.deterministic) c.sim.record_solve_time = false;
  c.validate();
  return c;
}

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_log(const std::filesystem::path& path, const telemanip::TrajectoryLog& log) {
  ensure_parent(path);
  std::ofstream out(path);
  telemanip::write_log_csv(out, log);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

telemanip::TrajectoryLog run(const RunConfig& c) {
  const auto samples = telemanip::load_input(c);
  return telemanip::run_closed_loop(c.controller, c.sim, samples);
}

int report_divergence(const telemanip::TrajectoryLog& log) {
  std::cerr << "error: plant diverged at t = " << log.ticks.back().t << " s";
  if (!log.diagnostic.empty()) std::cerr << " (" << log.diagnostic << ")";
  std::cerr << '\n';
  return kExitFailure;
}

int cmd_simulate(const RunConfig& c) {
  const auto log = run(c);
  const auto metrics = telemanip::compute_metrics(log);
  write_log(c.out, log);
  write_text(c.metrics_out, telemanip::metrics_to_json(metrics) + "\n");
  std::printf("%s: %zu ticks, rmse_x %.4f m, max|beta| %.4f rad, delay %.0f ms, solve %.2f ms\n",
              c.controller.preset_name.c_str(), metrics.ticks, metrics.rmse_x,
              metrics.max_abs_beta, metrics.delay_ms, metrics.mean_solve_ms);
  return log.diverged ? report_divergence(log) : kExitOk;
}

bool same_reference(const telemanip::TrajectoryLog& a, const telemanip::TrajectoryLog& b) {
  if (a.ticks.size() != b.ticks.size()) return false;
  for (std::size_t i = 0; i < a.ticks.size(); ++i) {
    const auto& ra = a.ticks[i].reference;
    const auto& rb = b.ticks[i].reference;
    if (ra.x != rb.x || ra.z != rb.z || ra.theta != rb.theta) return false;
  }
  return true;
}

int cmd_compare(const RunConfig& base, const std::string& out_dir, bool metrics_given) {
  RunConfig c1 = base;
  RunConfig c2 = base;
  c1.controller.use_preset("P1");
  c2.controller.use_preset("P2");
  const auto log1 = run(c1);
  const auto log2 = run(c2);
  const auto m1 = telemanip::compute_metrics(log1);
  const auto m2 = telemanip::compute_metrics(log2);

  const std::filesystem::path dir(out_dir);
  write_log(dir / "p1.csv", log1);
  write_log(dir / "p2.csv", log2);

  constexpr double kBetaRatio = 0.2;
  const double ratio = m1.max_abs_beta > 0.0 ? m2.max_abs_beta / m1.max_abs_beta : 0.0;
  const bool beta_ok = m2.max_abs_beta <= kBetaRatio * m1.max_abs_beta;
  const bool rmse_ok = m1.rmse_x < m2.rmse_x;
  const bool delay_ok = m2.delay_ms > m1.delay_ms;

  Json summary;
  summary["input"] = base.input;
  summary["duration"] = base.sim.duration;
  summary["P1"] = Json::parse(telemanip::metrics_to_json(m1));
  summary["P2"] = Json::parse(telemanip::metrics_to_json(m2));
  summary["reference_columns_identical"] = same_reference(log1, log2);
  summary["checks"] = {
      {"max_beta_ratio", {{"value", ratio}, {"limit", kBetaRatio}, {"pass", beta_ok}}},
      {"rmse_x_p1_below_p2", {{"pass", rmse_ok}}},
      {"delay_p2_above_p1", {{"pass", delay_ok}}},
  };
  const std::filesystem::path summary_path =
      metrics_given ? std::filesystem::path(base.metrics_out) : dir / "summary.json";
  write_text(summary_path, summary.dump(2) + "\n");

  std::printf("%-7s %10s %12s %10s %12s\n", "preset", "rmse_x", "max|beta|", "delay_ms",
              "solve_ms");
  for (const auto& [name, m] : {std::pair{"P1", &m1}, std::pair{"P2", &m2}}) {
    std::printf("%-7s %10.4f %12.4f %10.0f %12.2f\n", name, m->rmse_x, m->max_abs_beta,
                m->delay_ms, m->mean_solve_ms);
  }
  std::printf("max|beta| P2 <= %.1f x P1: %s (ratio %.3f)\n", kBetaRatio,
              beta_ok ? "pass" : "fail", ratio);
  std::printf("rmse_x P1 < P2: %s\n", rmse_ok ? "pass" : "fail");
  std::printf("delay P2 > P1: %s\n", delay_ok ? "pass" : "fail");

  if (log1.diverged) return report_divergence(log1);
  if (log2.diverged) return report_divergence(log2);
  return kExitOk;
}

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

int cmd_serve(const RunConfig& c) {
  telemanip::TeleopService service(c);
  try {
    service.start();
  } catch (const telemanip::TeleopError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::printf("serving ws://127.0.0.1:%u/teleop (preset %s, session log %s)\n", service.port(),
              service.preset().c_str(), c.session_log.c_str());
  std::fflush(stdout);
  while (!g_interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  std::printf("stopped after %zu ticks\n", service.ticks());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Slosh-aware assistive telemanipulation with nonlinear MPC"};
  app.require_subcommand(1);

  Overrides sim_o;
  auto* simulate = app.add_subcommand("simulate", "Run one closed-loop simulation");
  add_model_options(simulate, sim_o);
  add_run_options(simulate, sim_o);
  simulate->add_option("--out", sim_o.out, "Trajectory log CSV (default run.csv)");
  simulate->add_option("--metrics-out", sim_o.metrics_out,
                       "Metrics JSON (default metrics.json)");

  Overrides cmp_o;
  std::string cmp_dir = "compare";
  auto* compare = app.add_subcommand("compare-presets", "Run P1 and P2 on the same input");
  add_model_options(compare, cmp_o);
  add_run_options(compare, cmp_o);
  compare->add_option("--out", cmp_dir, "Directory for p1.csv, p2.csv and summary.json");
  compare->add_option("--metrics-out", cmp_o.metrics_out,
                      "Summary JSON (default <out>/summary.json)");

  Overrides srv_o;
  auto* serve = app.add_subcommand("serve", "Serve the /teleop WebSocket endpoint");
  add_model_options(serve, srv_o);
  serve->add_option("--port", srv_o.port, "TCP port (default 8080, 0 picks one)");
  serve->add_option("--out", srv_o.out, "Session log CSV (default session.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) {
      const RunConfig c = build_config(sim_o);
      if (sim_o.print_config) return std::cout << telemanip::serialize_config(c), kExitOk;
      return cmd_simulate(c);
    }
    if (compare->parsed()) {
      const RunConfig c = build_config(cmp_o);
      if (cmp_o.print_config) return std::cout << telemanip::serialize_config(c), kExitOk;
      return cmd_compare(c, cmp_dir, cmp_o.metrics_out.has_value());
    }
    Overrides o = srv_o;
    const std::optional<std::string> session_log = o.out;
    o.out.reset();
    RunConfig c = build_config(o);
    if (session_log) c.session_log = *session_log;
    if (o.print_config) return std::cout << telemanip::serialize_config(c), kExitOk;
    return cmd_serve(c);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
