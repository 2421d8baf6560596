// acat: command-line front end.
//
//   acat run --scenario S --log OUT.jsonl [--speed N|max]
//   acat serve [--scenario S] [--port P] [--host H] [--speed N|max] [--exit-on-complete] [--log OUT.jsonl]
//   acat check-bom FILE [--format text|json]
//   acat fit FILE --baseline-y Y [--format text|json]
//   acat profile --theta DEG [--volume UL] [--points N] [--noise-frac F] [--seed S] [--baseline-y Y]
//   acat pins [FILE]
//
// Exit status: 0 ok / run complete, 1 runtime or input error, 2 run faulted,
// 3 run stopped, 4 run hit max_time, 64 usage error.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include "acat/compliance.hpp"
#include "acat/gateway/server.hpp"
#include "acat/goniometry.hpp"
#include "acat/kernel.hpp"
#include "acat/scenario.hpp"
#include "acat/signals.hpp"

namespace {

constexpr int kExitUsage = 64;
constexpr int kExitError = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// "max" -> 0 (unpaced), otherwise a positive multiple of real time.
double parse_speed(const std::string& text) {
  if (text == "max") return 0.0;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && v > 0 && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("--speed must be a positive number or 'max', got '" + text + "'");
}

acat::goniometry::ProfilePoints read_profile(const std::string& path, double baseline_y) {
  std::ifstream in(path);
  if (!in) throw acat::IOError("cannot read profile file '" + path + "'");
  acat::goniometry::ProfilePoints profile;
  profile.baseline_y = baseline_y;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    for (auto& c : line)
      if (c == ',' || c == '\t' || c == ';') c = ' ';
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first) || first.front() == '#') continue;
    if (first == "x") continue;  // header
    fields.clear();
    fields.str(line);
    double x = 0, y = 0;
    std::string extra;
    if (!(fields >> x >> y) || (fields >> extra))
      throw acat::InputError(path + ":" + std::to_string(line_no) + ": expected two numbers 'x,y'");
    profile.points.push_back({x, y});
  }
  return profile;
}

int cmd_run(const std::string& scenario_path, const std::string& log_path, const std::string& speed_text) {
  const double speed = parse_speed(speed_text);
  auto scenario = acat::sim::load_scenario(scenario_path);
  std::ofstream log_file;
  std::ostream* log_out = &std::cout;
  if (log_path != "-") {
    log_file.open(log_path, std::ios::binary | std::ios::trunc);
    if (!log_file) throw acat::IOError("cannot write log file '" + log_path + "'");
    log_out = &log_file;
  }
  acat::sim::Simulation sim(std::move(scenario));
  sim.log().stream_to(log_out);
  acat::sim::RunResult result;
  if (speed <= 0) {
    result = sim.run();
  } else {
    acat::gateway::SpeedGovernor governor(speed);
    do {
      sim.step();
      governor.pace(sim.now());
      if (sim.terminal()) break;
    } while (!sim.timed_out());
    result = sim.finish();
  }
  log_out->flush();
  std::ostream& report = log_path == "-" ? std::cerr : std::cout;
  report << "outcome=" << to_string(result.outcome) << " phase=" << acat::seq::to_string(result.phase)
         << " t_us=" << result.end.count() << " measurements=" << result.measurements << "\n";
  return acat::sim::exit_code(result.outcome);
}

acat::gateway::Server* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const std::string& scenario_path, unsigned short port, const std::string& host,
              const std::string& speed_text, bool exit_on_complete, const std::string& log_path) {
  acat::gateway::ServeOptions options;
  options.speed = parse_speed(speed_text);
  options.host = host;
  options.port = port;
  options.exit_on_complete = exit_on_complete;
  if (const char* env = std::getenv("ACAT_PORT"); env && *env) {
    char* end = nullptr;
    const long p = std::strtol(env, &end, 10);
    if (*end != '\0' || p < 0 || p > 65535) throw UsageError(std::string("ACAT_PORT is not a port number: ") + env);
    options.port = static_cast<unsigned short>(p);
  }
  auto scenario = scenario_path.empty() ? acat::sim::Scenario{} : acat::sim::load_scenario(scenario_path);
  scenario.validate();
  acat::gateway::Server server(std::move(scenario), options);
  server.listen();
  std::cout << "listening on " << options.host << ":" << server.port() << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto result = server.run();
  g_server = nullptr;
  server.shutdown();
  if (!log_path.empty()) {
    std::ofstream out(log_path, std::ios::binary | std::ios::trunc);
    if (!out) throw acat::IOError("cannot write log file '" + log_path + "'");
    out << server.simulation().log().to_jsonl();
  }
  std::cout << "outcome=" << to_string(result.outcome) << " phase=" << acat::seq::to_string(result.phase)
            << " t_us=" << result.end.count() << " measurements=" << result.measurements << "\n";
  return acat::sim::exit_code(result.outcome);
}

int cmd_check_bom(const std::string& path, const std::string& format) {
  const auto bom = acat::compliance::load_bom(path);
  const auto report = acat::compliance::check_bom(bom);
  std::cout << (format == "json" ? report.to_json() : report.to_text());
  return report.has_fail() ? kExitError : 0;
}

int cmd_fit(const std::string& path, double baseline_y, const std::string& format) {
  const auto profile = read_profile(path, baseline_y);
  const auto fit = acat::goniometry::fit_circle(profile);
  if (format == "json") {
    acat::sim::Json j = {{"center_x", fit.center_x},
                         {"center_y", fit.center_y},
                         {"radius", fit.radius},
                         {"rms_residual", fit.rms_residual},
                         {"contact_angle_deg", acat::goniometry::round3(fit.contact_angle_deg)},
                         {"points", profile.points.size()}};
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::cout << std::fixed << std::setprecision(6) << "center_x " << fit.center_x << "\n"
            << "center_y " << fit.center_y << "\n"
            << "radius " << fit.radius << "\n"
            << "rms_residual " << fit.rms_residual << "\n"
            << std::setprecision(3) << "contact_angle_deg " << fit.contact_angle_deg << "\n";
  return 0;
}

int cmd_profile(double theta, double volume, int points, double noise_frac, std::uint64_t seed, double baseline_y) {
  const auto cap = acat::goniometry::cap_from_volume_angle(volume, theta);
  const auto profile =
      acat::goniometry::synthesize_profile(cap, points, noise_frac * cap.base_radius_mm, seed, baseline_y);
  std::cout << "# theta_deg=" << theta << " volume_ul=" << volume << " sphere_radius_mm=" << std::setprecision(17)
            << cap.sphere_radius_mm << "\n";
  std::cout << "x,y\n";
  for (const auto& p : profile.points) std::cout << p.x << "," << p.y << "\n";
  return 0;
}

int cmd_pins(const std::string& path) {
  acat::signals::PinRegistry registry;
  if (path.empty()) {
    registry = acat::signals::parse_pin_map(acat::signals::kDefaultPinMap);
  } else {
    std::ifstream in(path);
    if (!in) throw acat::IOError("cannot read pin map '" + path + "'");
    registry = acat::signals::parse_pin_map(in);
  }
  for (const auto& e : registry.entries())
    std::cout << acat::signals::format_label(e.pin) << " " << e.name << " "
              << (e.pin.electrical_mode() == acat::signals::ElectricalMode::sinking_npn ? "sinking" : "sourcing")
              << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACAT work-cell simulator"};
  app.require_subcommand(1);

  std::string scenario_path, log_path, speed = "max", format = "text", file;
  double baseline_y = 0.0;

  auto* run = app.add_subcommand("run", "run a scenario headless");
  run->add_option("--scenario", scenario_path, "scenario JSON")->required();
  run->add_option("--log", log_path, "event log output (JSON Lines, '-' for stdout)")->required();
  run->add_option("--speed", speed, "simulated/real time ratio or 'max'");

  auto* serve = app.add_subcommand("serve", "serve a scenario over WebSocket");
  unsigned short port = 8765;
  std::string host = "127.0.0.1", serve_speed = "1";
  bool exit_on_complete = false;
  std::string serve_log;
  serve->add_option("--scenario", scenario_path, "scenario JSON (default scenario when omitted)");
  serve->add_option("--port", port, "TCP port (ACAT_PORT overrides; 0 picks one)");
  serve->add_option("--host", host, "listen address");
  serve->add_option("--speed", serve_speed, "simulated/real time ratio or 'max'");
  serve->add_flag("--exit-on-complete", exit_on_complete, "exit once the run comes to rest");
  serve->add_option("--log", serve_log, "write the event log here on exit");

  auto* bom = app.add_subcommand("check-bom", "check a BOM table against the electrical rules");
  bom->add_option("file", file, "BOM CSV")->required();
  bom->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));

  auto* fit = app.add_subcommand("fit", "fit a circle to a droplet profile");
  fit->add_option("file", file, "profile file, one 'x,y' per line")->required();
  fit->add_option("--baseline-y", baseline_y, "substrate line y")->required();
  fit->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));

  auto* profile = app.add_subcommand("profile", "print a synthetic droplet profile");
  double theta = 0, volume = 10.0, noise_frac = 0.0;
  int points = 200;
  std::uint64_t seed = 1;
  profile->add_option("--theta", theta, "contact angle, degrees")->required();
  profile->add_option("--volume", volume, "droplet volume, uL");
  profile->add_option("--points", points, "number of profile points");
  profile->add_option("--noise-frac", noise_frac, "radial noise sigma as a fraction of the base radius");
  profile->add_option("--seed", seed, "noise seed");
  profile->add_option("--baseline-y", baseline_y, "substrate line y");

  auto* pins = app.add_subcommand("pins", "validate and list a pin map");
  pins->add_option("file", file, "pin map CSV (built-in map when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(scenario_path, log_path, speed);
    if (*serve) return cmd_serve(scenario_path, port, host, serve_speed, exit_on_complete, serve_log);
    if (*bom) return cmd_check_bom(file, format);
    if (*fit) return cmd_fit(file, baseline_y, format);
    if (*profile) return cmd_profile(theta, volume, points, noise_frac, seed, baseline_y);
    if (*pins) return cmd_pins(file);
  } catch (const UsageError& e) {
    std::cerr << "acat: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "acat: " << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}
