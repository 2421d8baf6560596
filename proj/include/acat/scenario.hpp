#pragma once

// Scenario files: JSON run descriptions (seed, layout, device configuration
// and timed fault injections), validated strictly on load. The schema is
// documented in docs/scenario.md.

#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "acat/errors.hpp"
#include "acat/event_log.hpp"
#include "acat/fluidics.hpp"
#include "acat/goniometry.hpp"
#include "acat/motion.hpp"
#include "acat/safety.hpp"
#include "acat/sequencer.hpp"

namespace acat::sim {

inline constexpr int kScenarioVersion = 1;

class ScenarioError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

enum class InjectionKind {
  estop_press,
  estop_release,
  door_open,
  door_close,
  channel_stuck,
  part_missing,
  pump_dry,
  sensor_suppress,
  stop_press,
  start_press,
  reset_press,
};

inline constexpr std::array<std::pair<InjectionKind, std::string_view>, 11> kInjectionNames = {{
    {InjectionKind::estop_press, "estop_press"},
    {InjectionKind::estop_release, "estop_release"},
    {InjectionKind::door_open, "door_open"},
    {InjectionKind::door_close, "door_close"},
    {InjectionKind::channel_stuck, "channel_stuck"},
    {InjectionKind::part_missing, "part_missing"},
    {InjectionKind::pump_dry, "pump_dry"},
    {InjectionKind::sensor_suppress, "sensor_suppress"},
    {InjectionKind::stop_press, "stop_press"},
    {InjectionKind::start_press, "start_press"},
    {InjectionKind::reset_press, "reset_press"},
}};

inline std::string_view to_string(InjectionKind k) {
  for (auto [kind, name] : kInjectionNames)
    if (kind == k) return name;
  return "?";
}

inline std::optional<InjectionKind> injection_kind_from(std::string_view name) {
  for (auto [kind, n] : kInjectionNames)
    if (n == name) return kind;
  return std::nullopt;
}

inline constexpr std::array<std::string_view, 6> kSensorNames = {"z_up",   "z_down",         "x_home",
                                                                 "y_home", "dispenser_home", "part_present"};

struct Injection {
  SimTime time{0};
  InjectionKind kind = InjectionKind::estop_press;
  safety::Source source = safety::Source::estop_operator;  // estop_*, channel_stuck
  char channel = 'a';                                      // channel_stuck
  int column = 0;                                          // part_missing
  int row = 0;
  std::string sensor;  // sensor_suppress
  Json params = Json::object();
};

struct AxisSetup {
  motion::StepperAxis axis;
  std::int64_t initial_offset_steps = 0;  // distance from the home switch at power-up
};

struct ThetaOverride {
  int column = 0;
  int row = 0;
  double theta_deg = 75.0;
};

struct Scenario {
  std::uint64_t seed = 1;
  Duration tick = 1000us;
  bool auto_start = true;
  Duration max_time = std::chrono::seconds(3600);

  seq::TrayLayout layout;
  seq::PositionMm test_station{0.0, 500.0};
  seq::PositionMm unload_station{0.0, 700.0};
  double dispenser_drop_mm = 50.0;
  motion::CellGeometry geometry;

  std::array<AxisSetup, 3> axes{{{motion::StepperAxis::x_axis(), 400},
                                 {motion::StepperAxis::y_axis(), 1200},
                                 {motion::StepperAxis::dispenser_axis(), 100}}};
  std::int64_t homing_backoff_steps = motion::kDefaultBackoffSteps;
  motion::PneumaticZ::Config z;

  fluidics::PumpSpec pump;
  fluidics::Reservoir reservoir;
  fluidics::DispenseSpec dispense;
  Duration grip_time = 100ms;
  double prime_below_ml = 5.0;
  double prime_to_ml = 100.0;

  safety::SafetyConfig safety;

  goniometry::MeasurementConfig measurement;
  double default_theta_deg = 75.0;
  std::vector<ThetaOverride> theta_overrides;
  Duration measure_time = 500ms;

  seq::FaultPolicy policy = seq::FaultPolicy::skip;
  std::vector<Injection> injections;

  const AxisSetup& axis(motion::AxisName a) const { return axes[static_cast<std::size_t>(a)]; }
  AxisSetup& axis(motion::AxisName a) { return axes[static_cast<std::size_t>(a)]; }

  double true_theta(int column, int row) const {
    for (const auto& o : theta_overrides)
      if (o.column == column && o.row == row) return o.theta_deg;
    return default_theta_deg;
  }

  std::int64_t steps_for(motion::AxisName a, double mm) const { return motion::mm_to_steps(axis(a).axis, mm).steps; }

  seq::SequencerConfig sequencer_config() const {
    using motion::AxisName;
    seq::SequencerConfig cfg;
    cfg.layout = layout;
    for (int c = 0; c < layout.columns; ++c)
      for (int r = 0; r < layout.rows; ++r) {
        const auto p = seq::part_position(layout, c, r);
        cfg.slots.push_back({steps_for(AxisName::x, p.x), steps_for(AxisName::y, p.y)});
      }
    cfg.test_station = {steps_for(AxisName::x, test_station.x), steps_for(AxisName::y, test_station.y)};
    cfg.unload_station = {steps_for(AxisName::x, unload_station.x), steps_for(AxisName::y, unload_station.y)};
    cfg.dispenser_drop = steps_for(AxisName::dispenser, dispenser_drop_mm);
    cfg.dispenser_park = 0;
    cfg.burst = dispense.burst_duration;
    cfg.policy = policy;
    cfg.prime_below_ml = prime_below_ml;
    cfg.prime_to_ml = prime_to_ml;
    cfg.pump_ml_per_s = pump.ml_per_second();
    return cfg;
  }

  void validate() const {
    const auto fail = [](const std::string& field, const std::string& msg) {
      throw ScenarioError("field " + field + ": " + msg);
    };
    if (tick <= Duration::zero()) fail("/tick_us", "must be > 0");
    if (max_time <= Duration::zero()) fail("/max_time_s", "must be > 0");
    try {
      layout.validate();
      geometry.validate();
      for (const auto& a : axes) a.axis.validate();
      pump.validate();
      reservoir.validate();
      dispense.validate();
      safety.validate();
    } catch (const ConfigError& e) {
      throw ScenarioError(e.what());
    }
    if (homing_backoff_steps < 0) fail("/axes/homing_backoff_steps", "must be >= 0");
    for (const auto& a : axes)
      if (a.initial_offset_steps < 0) fail("/axes/" + std::string(to_string(a.axis.name)), "initial_offset_steps must be >= 0");
    if (measurement.n_points < 5) fail("/measurement/points", "must be >= 5");
    if (measurement.noise_frac_of_base < 0) fail("/measurement/noise_frac", "must be >= 0");
    if (!(default_theta_deg > 0 && default_theta_deg < 180)) fail("/measurement/default_theta_deg", "must be in (0, 180)");
    for (const auto& o : theta_overrides) {
      if (o.column < 0 || o.column >= layout.columns || o.row < 0 || o.row >= layout.rows)
        fail("/measurement/theta_overrides", "slot outside the tray");
      if (!(o.theta_deg > 0 && o.theta_deg < 180)) fail("/measurement/theta_overrides", "theta_deg must be in (0, 180)");
    }

    // Every pose the cycle visits has to sit inside the soft limits, and the
    // tray inside the Y travel.
    using motion::AxisName;
    const auto check_pose = [&](const std::string& field, AxisName a, double mm) {
      const auto steps = steps_for(a, mm);
      if (!axis(a).axis.within_limits(steps))
        fail(field, std::string(to_string(a)) + " = " + std::to_string(mm) + " mm lies outside the axis soft limits");
    };
    for (int c = 0; c < layout.columns; ++c)
      for (int r = 0; r < layout.rows; ++r) {
        const auto p = seq::part_position(layout, c, r);
        check_pose("/layout", AxisName::x, p.x);
        check_pose("/layout", AxisName::y, p.y);
        if (p.y > geometry.y_travel_mm) fail("/layout", "tray extends past the Y travel");
      }
    check_pose("/stations/test_mm", AxisName::x, test_station.x);
    check_pose("/stations/test_mm", AxisName::y, test_station.y);
    check_pose("/stations/unload_mm", AxisName::x, unload_station.x);
    check_pose("/stations/unload_mm", AxisName::y, unload_station.y);
    check_pose("/stations/dispenser_drop_mm", AxisName::dispenser, dispenser_drop_mm);

    for (std::size_t i = 0; i < injections.size(); ++i) {
      const auto& inj = injections[i];
      const std::string field = "/injections/" + std::to_string(i);
      if (inj.time < SimTime{0}) fail(field + "/t_us", "must be >= 0");
      if (i > 0 && inj.time < injections[i - 1].time) fail(field + "/t_us", "injection times must be non-decreasing");
      if (inj.kind == InjectionKind::part_missing &&
          (inj.column < 0 || inj.column >= layout.columns || inj.row < 0 || inj.row >= layout.rows))
        fail(field + "/params", "slot outside the tray");
    }
  }
};

namespace detail {

// Strict JSON object reader: tracks the JSON-pointer path for error messages
// and rejects keys it was never asked about.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ScenarioError("field " + where() + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string field(const std::string& key) const { return path_ + "/" + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ScenarioError("field " + field(key) + ": " + msg);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(key, "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) fail(key, "must be finite");
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    if (v.is_number_unsigned()) {
      const auto u = v.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())) fail(key, "out of range");
      out = static_cast<Int>(u);
      return;
    }
    const auto s = v.get<std::int64_t>();
    if constexpr (std::is_unsigned_v<Int>) {
      if (s < 0) fail(key, "must be >= 0");
    } else if (s < static_cast<std::int64_t>(std::numeric_limits<Int>::min()) ||
               s > static_cast<std::int64_t>(std::numeric_limits<Int>::max())) {
      fail(key, "out of range");
    }
    out = static_cast<Int>(s);
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) fail(key, "expected true or false");
    out = v.get<bool>();
  }

  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_string()) fail(key, "expected a string");
    out = v.get<std::string>();
  }

  void micros(const std::string& key, Duration& out, double scale_to_us) {
    double v = static_cast<double>(out.count()) / scale_to_us;
    number(key, v);
    out = Duration{static_cast<Duration::rep>(std::llround(v * scale_to_us))};
  }

  void pair(const std::string& key, double& a, double& b) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      fail(key, "expected [number, number]");
    a = v[0].get<double>();
    b = v[1].get<double>();
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    return Reader(j_.at(key), field(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) throw ScenarioError("field " + field(key) + ": unknown field");
  }

  const std::string& path() const { return path_; }

 private:
  std::string where() const { return path_.empty() ? "/" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline safety::Source parse_source(Reader& r, const std::string& key, std::string_view text) {
  if (text == "operator" || text == "estop_operator") return safety::Source::estop_operator;
  if (text == "main" || text == "estop_main") return safety::Source::estop_main;
  if (text == "door" || text == "door_interlock") return safety::Source::door_interlock;
  r.fail(key, "unknown safety source '" + std::string(text) + "'");
}

inline void read_axis(Reader r, AxisSetup& a) {
  r.number("travel_per_rev_mm", a.axis.travel_per_rev_mm);
  r.integer("steps_per_rev", a.axis.steps_per_rev);
  r.integer("pulse_rate_hz", a.axis.pulse_rate_hz);
  r.integer("min_steps", a.axis.min_steps);
  r.integer("max_steps", a.axis.max_steps);
  r.integer("initial_offset_steps", a.initial_offset_steps);
  r.number("drive_fuse_a", a.axis.drive_fuse_a);
  r.finish();
}

inline Injection read_injection(Reader r) {
  Injection inj;
  std::int64_t t = 0;
  if (!r.has("t_us")) r.fail("t_us", "required");
  r.integer("t_us", t);
  inj.time = SimTime{t};
  std::string kind;
  if (!r.has("kind")) r.fail("kind", "required");
  r.string("kind", kind);
  const auto k = injection_kind_from(kind);
  if (!k) r.fail("kind", "unknown injection kind '" + kind + "'");
  inj.kind = *k;

  Json params = Json::object();
  if (r.has("params")) params = r.raw("params");
  inj.params = params;
  Reader p(params, r.field("params"));
  switch (inj.kind) {
    case InjectionKind::estop_press:
    case InjectionKind::estop_release: {
      std::string station = "operator";
      p.string("station", station);
      inj.source = parse_source(p, "station", station);
      if (inj.source == safety::Source::door_interlock) p.fail("station", "must be operator or main");
      break;
    }
    case InjectionKind::door_open:
    case InjectionKind::door_close:
      inj.source = safety::Source::door_interlock;
      break;
    case InjectionKind::channel_stuck: {
      std::string source = "door", channel = "a";
      p.string("source", source);
      p.string("channel", channel);
      inj.source = parse_source(p, "source", source);
      if (channel != "a" && channel != "b" && channel != "A" && channel != "B") p.fail("channel", "must be a or b");
      inj.channel = static_cast<char>(std::tolower(static_cast<unsigned char>(channel[0])));
      break;
    }
    case InjectionKind::part_missing:
      if (!p.has("column") || !p.has("row")) p.fail("column", "part_missing needs column and row");
      p.integer("column", inj.column);
      p.integer("row", inj.row);
      break;
    case InjectionKind::sensor_suppress: {
      if (!p.has("sensor")) p.fail("sensor", "required");
      p.string("sensor", inj.sensor);
      bool known = false;
      for (auto s : kSensorNames) known |= s == inj.sensor;
      if (!known) p.fail("sensor", "unknown sensor '" + inj.sensor + "'");
      break;
    }
    default:
      break;
  }
  p.finish();
  r.finish();
  return inj;
}

}  // namespace detail

inline Scenario scenario_from_json(const Json& j) {
  using detail::Reader;
  Scenario s;
  Reader top(j, "");
  int version = kScenarioVersion;
  top.integer("v", version);
  if (version != kScenarioVersion) top.fail("v", "unsupported scenario version " + std::to_string(version));
  top.integer("seed", s.seed);
  top.micros("tick_us", s.tick, 1.0);
  top.boolean("auto_start", s.auto_start);
  top.micros("max_time_s", s.max_time, 1e6);

  if (top.has("layout")) {
    auto r = top.child("layout");
    r.integer("columns", s.layout.columns);
    r.integer("rows", s.layout.rows);
    r.pair("origin_mm", s.layout.origin_x_mm, s.layout.origin_y_mm);
    r.pair("pitch_mm", s.layout.pitch_x_mm, s.layout.pitch_y_mm);
    r.finish();
  }
  if (top.has("stations")) {
    auto r = top.child("stations");
    r.pair("test_mm", s.test_station.x, s.test_station.y);
    r.pair("unload_mm", s.unload_station.x, s.unload_station.y);
    r.number("dispenser_drop_mm", s.dispenser_drop_mm);
    r.finish();
  }
  if (top.has("geometry")) {
    auto r = top.child("geometry");
    r.number("y_travel_mm", s.geometry.y_travel_mm);
    r.number("enclosure_length_mm", s.geometry.enclosure_length_mm);
    r.number("enclosure_width_mm", s.geometry.enclosure_width_mm);
    r.number("enclosure_height_mm", s.geometry.enclosure_height_mm);
    r.finish();
  }
  if (top.has("axes")) {
    auto r = top.child("axes");
    if (r.has("x")) detail::read_axis(r.child("x"), s.axis(motion::AxisName::x));
    if (r.has("y")) detail::read_axis(r.child("y"), s.axis(motion::AxisName::y));
    if (r.has("dispenser")) detail::read_axis(r.child("dispenser"), s.axis(motion::AxisName::dispenser));
    r.integer("homing_backoff_steps", s.homing_backoff_steps);
    if (r.has("z")) {
      auto z = r.child("z");
      z.micros("stroke_time_ms", s.z.stroke_time, 1e3);
      z.micros("confirm_margin_ms", s.z.confirm_margin, 1e3);
      z.finish();
    }
    r.finish();
  }
  if (top.has("fluidics")) {
    auto r = top.child("fluidics");
    r.number("flow_rate_ml_min", s.pump.flow_rate_ml_per_min);
    r.number("reservoir_capacity_ml", s.reservoir.capacity_ml);
    r.number("reservoir_level_ml", s.reservoir.level_ml);
    r.number("droplet_volume_ul", s.dispense.droplet_volume_ul);
    r.micros("burst_ms", s.dispense.burst_duration, 1e3);
    r.boolean("anti_drip", s.dispense.anti_drip);
    r.number("volume_sigma_frac", s.dispense.volume_sigma_frac);
    r.number("volume_tolerance_frac", s.dispense.volume_tolerance_frac);
    r.micros("grip_time_ms", s.grip_time, 1e3);
    r.number("prime_below_ml", s.prime_below_ml);
    r.number("prime_to_ml", s.prime_to_ml);
    r.finish();
  }
  if (top.has("safety")) {
    auto r = top.child("safety");
    r.micros("discrepancy_window_ms", s.safety.discrepancy_window, 1e3);
    r.string("performance_level", s.safety.performance_level);
    r.finish();
  }
  if (top.has("measurement")) {
    auto r = top.child("measurement");
    r.number("default_theta_deg", s.default_theta_deg);
    r.number("noise_frac", s.measurement.noise_frac_of_base);
    r.integer("points", s.measurement.n_points);
    r.micros("duration_ms", s.measure_time, 1e3);
    if (r.has("theta_overrides")) {
      const auto& arr = r.raw("theta_overrides");
      if (!arr.is_array()) r.fail("theta_overrides", "expected an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Reader o(arr[i], r.field("theta_overrides") + "/" + std::to_string(i));
        ThetaOverride t;
        o.integer("column", t.column);
        o.integer("row", t.row);
        o.number("theta_deg", t.theta_deg);
        o.finish();
        s.theta_overrides.push_back(t);
      }
    }
    r.finish();
  }
  if (top.has("policy")) {
    auto r = top.child("policy");
    std::string policy = "skip";
    r.string("device_fault", policy);
    if (policy == "skip")
      s.policy = seq::FaultPolicy::skip;
    else if (policy == "halt")
      s.policy = seq::FaultPolicy::halt;
    else
      r.fail("device_fault", "must be skip or halt");
    r.finish();
  }
  if (top.has("injections")) {
    const auto& arr = top.raw("injections");
    if (!arr.is_array()) top.fail("injections", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i)
      s.injections.push_back(detail::read_injection(Reader(arr[i], "/injections/" + std::to_string(i))));
  }
  top.finish();
  s.validate();
  return s;
}

inline Scenario parse_scenario(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
  }
  return scenario_from_json(j);
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IOError("cannot open scenario file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace acat::sim
