#pragma once

// Cartesian platform: constant-rate stepper axes (X ball screw, Y belt, and
// the dispenser's linear guide) plus the binary pneumatic Z stroke.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string_view>

#include "acat/errors.hpp"
#include "acat/signals.hpp"
#include "acat/time.hpp"

namespace acat::motion {

enum class AxisName { x, y, dispenser };

inline constexpr std::string_view to_string(AxisName a) {
  switch (a) {
    case AxisName::x: return "x";
    case AxisName::y: return "y";
    case AxisName::dispenser: return "dispenser";
  }
  return "?";
}

struct StepperAxis {
  AxisName name = AxisName::x;
  int steps_per_rev = 200;
  int pulse_rate_hz = 400;
  double travel_per_rev_mm = 5.0;
  std::int64_t min_steps = 0;
  std::int64_t max_steps = 16000;
  std::optional<std::int64_t> position;  // unknown until homed
  bool homed = false;
  double drive_fuse_a = 1.0;

  void validate() const {
    if (steps_per_rev <= 0) throw ConfigError("steps_per_rev must be > 0");
    if (pulse_rate_hz <= 0) throw ConfigError("pulse_rate_hz must be > 0");
    if (!(travel_per_rev_mm > 0)) throw ConfigError("travel_per_rev_mm must be > 0");
    if (min_steps >= max_steps) throw ConfigError("min_steps must be < max_steps");
  }

  bool within_limits(std::int64_t steps) const { return steps >= min_steps && steps <= max_steps; }

  // X: 5 mm lead ball screw, 400 mm usable travel.
  static StepperAxis x_axis() { return {AxisName::x, 200, 400, 5.0, 0, 16000, std::nullopt, false, 1.0}; }
  // Y: 40 mm/rev belt over the 1360 mm span.
  static StepperAxis y_axis() { return {AxisName::y, 200, 400, 40.0, 0, 6800, std::nullopt, false, 1.0}; }
  // Dispenser linear guide: 40 mm/rev belt, 150 mm travel.
  static StepperAxis dispenser_axis() {
    return {AxisName::dispenser, 200, 400, 40.0, 0, 750, std::nullopt, false, 0.5};
  }
};

enum class StepDirection { positive, negative };

struct MoveProfile {
  AxisName axis = AxisName::x;
  std::int64_t delta_steps = 0;
  StepDirection direction = StepDirection::positive;
  int pulse_rate_hz = 400;
  Duration duration{0};

  std::int64_t pulse_count() const { return std::abs(delta_steps); }
  int sign() const { return direction == StepDirection::positive ? 1 : -1; }
};

// Pulse k (1-based) of a constant-rate train fires at floor(k * 1e6 / rate) µs
// after the train starts. At 400 Hz that is exactly k * 2500 µs.
inline Duration pulse_offset(std::int64_t k, int pulse_rate_hz) {
  return Duration{k * 1'000'000 / pulse_rate_hz};
}

// Number of pulses that have fired within `elapsed` of the train start.
inline std::int64_t pulses_within(Duration elapsed, int pulse_rate_hz) {
  if (elapsed.count() < 0) return 0;
  // largest k with floor(k*1e6/rate) <= e  <=>  k*1e6 < (e+1)*rate
  return ((elapsed.count() + 1) * pulse_rate_hz - 1) / 1'000'000;
}

inline Duration train_duration(std::int64_t pulses, int pulse_rate_hz) {
  return pulse_offset(std::abs(pulses), pulse_rate_hz);
}

inline MoveProfile plan_move(const StepperAxis& axis, std::int64_t target_steps) {
  if (!axis.homed || !axis.position)
    throw NotHomed("axis " + std::string(to_string(axis.name)) + " is not homed");
  if (!axis.within_limits(target_steps))
    throw LimitError("target " + std::to_string(target_steps) + " outside soft limits [" +
                     std::to_string(axis.min_steps) + ", " + std::to_string(axis.max_steps) + "] on axis " +
                     std::string(to_string(axis.name)));
  MoveProfile p;
  p.axis = axis.name;
  p.delta_steps = target_steps - *axis.position;
  p.direction = p.delta_steps < 0 ? StepDirection::negative : StepDirection::positive;
  p.pulse_rate_hz = axis.pulse_rate_hz;
  p.duration = train_duration(p.delta_steps, axis.pulse_rate_hz);
  return p;
}

inline double steps_to_mm(const StepperAxis& axis, std::int64_t steps) {
  return static_cast<double>(steps) * axis.travel_per_rev_mm / axis.steps_per_rev;
}

struct StepConversion {
  std::int64_t steps = 0;
  double residual_mm = 0.0;  // requested mm minus the mm the rounded steps reach
};

inline StepConversion mm_to_steps(const StepperAxis& axis, double mm) {
  const double exact = mm * axis.steps_per_rev / axis.travel_per_rev_mm;
  const auto steps = static_cast<std::int64_t>(std::llround(exact));
  return {steps, mm - steps_to_mm(axis, steps)};
}

// Executes a profile against the virtual clock. Position bookkeeping is the
// signed count of emitted pulses.
class MoveRunner {
 public:
  MoveRunner() = default;
  MoveRunner(const MoveProfile& profile, SimTime start) : profile_(profile), start_(start), active_(true) {}

  bool active() const { return active_; }
  const MoveProfile& profile() const { return profile_; }
  SimTime start() const { return start_; }
  SimTime end() const { return start_ + profile_.duration; }
  std::int64_t emitted() const { return emitted_; }

  // Emits the pulses due by `now` (strictly before `now` when `exclusive`).
  // Returns the signed number of pulses emitted.
  std::int64_t advance(SimTime now, bool exclusive = false) {
    if (!active_) return 0;
    const Duration elapsed = (now - start_) - Duration{exclusive ? 1 : 0};
    const std::int64_t due = std::min(profile_.pulse_count(), pulses_within(elapsed, profile_.pulse_rate_hz));
    const std::int64_t fresh = std::max<std::int64_t>(0, due - emitted_);
    emitted_ += fresh;
    if (emitted_ == profile_.pulse_count()) active_ = false;
    return fresh * profile_.sign();
  }

  void abort() { active_ = false; }

 private:
  MoveProfile profile_{};
  SimTime start_{0};
  std::int64_t emitted_ = 0;
  bool active_ = false;
};

// Homing: step toward the switch until its asserting edge, back off, zero.
class HomingRoutine {
 public:
  enum class Stage { approach, back_off, done, timed_out, aborted };

  HomingRoutine(std::int64_t max_approach_steps, std::int64_t backoff_steps)
      : max_approach_(max_approach_steps), backoff_(backoff_steps) {}

  // Given the switch sampled now, returns the direction of the next pulse
  // (-1 toward the switch, +1 away) or 0 when the routine has finished.
  int next(const signals::SignalState& limit_switch) {
    switch (stage_) {
      case Stage::approach: {
        const bool edge = previous_ ? signals::detect_edge(*previous_, limit_switch) == signals::Edge::rising
                                    : limit_switch.asserted();
        previous_ = limit_switch;
        if (edge) {
          stage_ = Stage::back_off;
          return next(limit_switch);
        }
        if (approach_steps_ >= max_approach_) {
          stage_ = Stage::timed_out;
          return 0;
        }
        ++approach_steps_;
        return -1;
      }
      case Stage::back_off:
        if (backoff_steps_ >= backoff_) {
          stage_ = Stage::done;
          return 0;
        }
        ++backoff_steps_;
        return +1;
      default:
        return 0;
    }
  }

  void abort() {
    if (stage_ == Stage::approach || stage_ == Stage::back_off) stage_ = Stage::aborted;
  }

  Stage stage() const { return stage_; }
  bool finished() const { return stage_ != Stage::approach && stage_ != Stage::back_off; }
  std::int64_t approach_steps() const { return approach_steps_; }
  std::int64_t backoff_steps() const { return backoff_steps_; }
  std::int64_t pulses() const { return approach_steps_ + backoff_steps_; }

 private:
  std::int64_t max_approach_;
  std::int64_t backoff_;
  std::int64_t approach_steps_ = 0;
  std::int64_t backoff_steps_ = 0;
  std::optional<signals::SignalState> previous_;
  Stage stage_ = Stage::approach;
};

inline constexpr std::int64_t kDefaultBackoffSteps = 50;

// Approach budget: the full soft-limit span plus the back-off distance.
inline std::int64_t max_homing_travel(const StepperAxis& axis, std::int64_t backoff) {
  return (axis.max_steps - axis.min_steps) + backoff;
}

struct HomingResult {
  StepperAxis axis;
  std::int64_t pulses = 0;
  std::int64_t travel_toward_switch = 0;  // net steps moved toward the switch
  Duration elapsed{0};
};

// Runs homing against a scripted limit switch. `switch_at(travel)` gives the
// switch level after `travel` net steps toward it; `abort_after` simulates a
// safety fault after that many pulses.
inline HomingResult home(StepperAxis axis, const std::function<signals::Logic(std::int64_t)>& switch_at,
                         bool power_available = true, std::int64_t backoff = kDefaultBackoffSteps,
                         std::optional<std::int64_t> abort_after = std::nullopt) {
  axis.validate();
  if (!power_available) throw StateError("cannot home axis " + std::string(to_string(axis.name)) + " without power");
  axis.homed = false;
  axis.position.reset();

  HomingRoutine routine(max_homing_travel(axis, backoff), backoff);
  constexpr auto mode = signals::ElectricalMode::sinking_npn;
  HomingResult result{axis};
  std::int64_t travel = 0;
  for (;;) {
    if (abort_after && result.pulses >= *abort_after) {
      routine.abort();
      break;
    }
    const SimTime now{pulse_offset(result.pulses, axis.pulse_rate_hz)};
    const auto sw = signals::SignalState::from_logical(mode, switch_at(travel), now);
    const int dir = routine.next(sw);
    if (dir == 0) break;
    travel -= dir;  // -1 is toward the switch
    ++result.pulses;
  }
  result.travel_toward_switch = travel;
  result.elapsed = pulse_offset(result.pulses, axis.pulse_rate_hz);
  if (routine.stage() == HomingRoutine::Stage::timed_out)
    throw HomingTimeout("limit switch on axis " + std::string(to_string(axis.name)) + " never asserted within " +
                        std::to_string(routine.approach_steps()) + " steps");
  if (routine.stage() == HomingRoutine::Stage::done) {
    result.axis.homed = true;
    result.axis.position = 0;
  }
  return result;
}

enum class ZPosition { up, down };
enum class ZConfirmed { up, down, in_transit };

inline constexpr std::string_view to_string(ZPosition z) { return z == ZPosition::up ? "up" : "down"; }
inline constexpr std::string_view to_string(ZConfirmed z) {
  switch (z) {
    case ZConfirmed::up: return "up";
    case ZConfirmed::down: return "down";
    case ZConfirmed::in_transit: return "in_transit";
  }
  return "?";
}

// Binary pneumatic stroke. The solenoid energized drives the cylinder down;
// de-energized it springs back up. Confirmation comes from the end-of-stroke
// sensors, which a scenario may suppress.
class PneumaticZ {
 public:
  struct Config {
    Duration stroke_time = 300ms;
    Duration confirm_margin = 100ms;
  };

  enum class Event { none, arrived, fault };

  PneumaticZ() : PneumaticZ(Config{}) {}
  explicit PneumaticZ(Config cfg) : cfg_(cfg) {
    if (cfg_.stroke_time <= Duration::zero()) throw ConfigError("stroke_time must be > 0");
    if (cfg_.confirm_margin < Duration::zero()) throw ConfigError("confirm_margin must be >= 0");
    set_sensors(ZPosition::up, SimTime{0});
  }

  // Returns true when a stroke started. Re-commanding the current target is a
  // no-op, whether the cylinder is there already or still on its way.
  bool command(ZPosition target, SimTime now) {
    if (target == commanded_) return false;
    commanded_ = target;
    transit_ = true;
    fault_reported_ = false;
    transit_start_ = now;
    set_sensors(std::nullopt, now);
    return true;
  }

  Event advance(SimTime now) {
    if (!transit_) return Event::none;
    if (!arrived_ && now >= transit_start_ + cfg_.stroke_time) {
      arrived_ = true;
      set_sensors(commanded_, transit_start_ + cfg_.stroke_time);
      if (confirmed() != ZConfirmed::in_transit) {
        transit_ = false;
        arrived_ = false;
        return Event::arrived;
      }
    }
    if (arrived_ && !fault_reported_ && now >= transit_start_ + cfg_.stroke_time + cfg_.confirm_margin) {
      fault_reported_ = true;
      return Event::fault;
    }
    return Event::none;
  }

  ZPosition commanded() const { return commanded_; }
  ZConfirmed confirmed() const {
    if (sensor_up_.asserted() && !sensor_down_.asserted()) return ZConfirmed::up;
    if (sensor_down_.asserted() && !sensor_up_.asserted()) return ZConfirmed::down;
    return ZConfirmed::in_transit;
  }
  // Where the cylinder physically is, sensors or not.
  std::optional<ZPosition> physical() const {
    if (transit_ && !arrived_) return std::nullopt;
    return commanded_;
  }
  bool busy() const { return transit_; }
  SimTime transit_start() const { return transit_start_; }
  const Config& config() const { return cfg_; }
  const signals::SignalState& sensor_up() const { return sensor_up_; }
  const signals::SignalState& sensor_down() const { return sensor_down_; }

  void suppress_up_sensor(bool s) { suppress_up_ = s; }
  void suppress_down_sensor(bool s) { suppress_down_ = s; }

 private:
  void set_sensors(std::optional<ZPosition> at, SimTime now) {
    constexpr auto mode = signals::ElectricalMode::sinking_npn;
    const bool up = at == ZPosition::up && !suppress_up_;
    const bool down = at == ZPosition::down && !suppress_down_;
    sensor_up_ = signals::update_signal(sensor_up_, mode, up ? signals::Logic::asserted : signals::Logic::deasserted, now);
    sensor_down_ =
        signals::update_signal(sensor_down_, mode, down ? signals::Logic::asserted : signals::Logic::deasserted, now);
  }

  Config cfg_;
  ZPosition commanded_ = ZPosition::up;
  bool transit_ = false;
  bool arrived_ = false;
  bool fault_reported_ = false;
  bool suppress_up_ = false;
  bool suppress_down_ = false;
  SimTime transit_start_{0};
  signals::SignalState sensor_up_{};
  signals::SignalState sensor_down_{};
};

struct CellGeometry {
  double y_travel_mm = 1360.0;
  double enclosure_length_mm = 1475.0;
  double enclosure_width_mm = 650.0;
  double enclosure_height_mm = 1680.0;

  void validate() const {
    if (!(y_travel_mm > 0 && enclosure_length_mm > 0 && enclosure_width_mm > 0 && enclosure_height_mm > 0))
      throw ConfigError("cell geometry dimensions must be positive");
  }
};

}  // namespace acat::motion
