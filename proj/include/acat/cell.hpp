#pragma once

// The simulated plant: the three stepper axes with their home switches, the
// pneumatic Z, vacuum cup, dispense valve, pump and the goniometer, plus the
// whereabouts of every part. The kernel drives it once per tick: advance()
// first (completions up to `now`), then apply() for this tick's commands,
// then feedback().

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "acat/commands.hpp"
#include "acat/event_log.hpp"
#include "acat/fluidics.hpp"
#include "acat/goniometry.hpp"
#include "acat/motion.hpp"
#include "acat/random.hpp"
#include "acat/scenario.hpp"
#include "acat/sequencer.hpp"

namespace acat::sim {

// Sentinel for "never".
inline constexpr SimTime kNever{std::numeric_limits<SimTime::rep>::max()};

// Stepper axis plus the physical world around it. `physical` counts steps
// from the home switch, which reads asserted at physical <= 0.
struct AxisModel {
  enum class Mode { idle, moving, homing };

  motion::StepperAxis axis;
  std::int64_t physical = 0;
  bool switch_suppressed = false;
  Mode mode = Mode::idle;
  motion::MoveRunner runner;
  std::optional<motion::HomingRoutine> homing;
  SimTime homing_start{0};
  std::int64_t homing_pulses = 0;
  int pending_dir = 0;
  std::uint64_t total_pulses = 0;

  bool busy() const { return mode != Mode::idle; }

  signals::SignalState home_switch(SimTime t) const {
    const bool on = physical <= 0 && !switch_suppressed;
    return signals::SignalState::from_logical(signals::ElectricalMode::sinking_npn,
                                              on ? signals::Logic::asserted : signals::Logic::deasserted, t);
  }
};

// Where a part can be. Tray slots are indexed by part_id - 1.
struct PartLocations {
  std::vector<std::uint8_t> in_tray;
  std::optional<int> at_station;
  std::optional<double> station_droplet_ul;
  std::optional<int> held;
  int unloaded = 0;
  int dropped = 0;
};

class Plant {
 public:
  explicit Plant(const Scenario& s)
      : scenario_(s),
        seq_cfg_(s.sequencer_config()),
        z_(s.z),
        reservoir_(s.reservoir),
        droplet_rng_(s.seed, "droplet"),
        measure_rng_(s.seed, "measure") {
    for (std::size_t i = 0; i < axes_.size(); ++i) {
      axes_[i].axis = s.axes[i].axis;
      axes_[i].axis.homed = false;
      axes_[i].axis.position.reset();
      axes_[i].physical = s.axes[i].initial_offset_steps;
    }
    parts_.in_tray.assign(static_cast<std::size_t>(s.layout.total_parts()), 1);
    // Panel lamps as the sequencer leaves them in idle.
    lamps_[static_cast<std::size_t>(Actuator::light_amber)] = true;
    lamps_[static_cast<std::size_t>(Actuator::pilot_stop)] = true;
  }

  // Completions and pulses due by `now`. With the MCR open, anything landing
  // exactly on `now` is cut, and every gated load is then dropped.
  void advance(SimTime now, bool mcr, EventLog& log) {
    tick_ = {};
    const bool exclusive = !mcr;
    for (auto& a : axes_) advance_axis(a, now, exclusive, log);
    advance_z(now, log);
    if (grip_pending_ && due(grip_due_, now, exclusive)) finish_grip(now, log);
    if (burst_end_ != kNever && due(burst_end_, now, exclusive)) finish_burst(now, log);
    if (pump_end_ != kNever && due(pump_end_, now, exclusive)) finish_pump(pump_end_ - pump_start_, now, log);
    if (measure_end_ != kNever && measure_end_ <= now) finish_measure(now, log);
    if (!mcr) cut_power(now, log);
  }

  void apply(std::span<const ActuatorCommand> cmds, SimTime now, EventLog& log) {
    for (const auto& c : cmds) apply_one(c, now, log);
  }

  seq::DeviceFeedback feedback() const {
    seq::DeviceFeedback fb;
    for (std::size_t i = 0; i < axes_.size(); ++i) {
      fb.axes[i].busy = axes_[i].busy();
      fb.axes[i].homed = axes_[i].axis.homed;
      fb.axes[i].position = axes_[i].axis.position;
    }
    fb.z = z_.confirmed();
    fb.z_busy = z_.busy();
    fb.gripped = gripper_.gripped;
    fb.grip_completed = tick_.grip_completed;
    fb.droplet_completed = tick_.droplet_completed;
    fb.pump_running = pump_end_ != kNever;
    fb.measuring = measure_end_ != kNever;
    fb.measured_part = tick_.measured_part;
    fb.station_part = parts_.at_station;
    fb.reservoir_ml = reservoir_.level_ml;
    fb.faults = tick_.faults;
    return fb;
  }

  // Nothing in motion and no timed operation outstanding.
  bool quiescent() const {
    for (const auto& a : axes_)
      if (a.busy()) return false;
    return z_.physical().has_value() && !grip_pending_ && burst_end_ == kNever && pump_end_ == kNever &&
           measure_end_ == kNever;
  }

  // Loads currently drawing from the MCR-switched supply.
  int energized_loads() const {
    int n = 0;
    for (const auto& a : axes_) n += a.busy();
    n += z_.commanded() == motion::ZPosition::down;
    n += gripper_.venturi_on;
    n += burst_end_ != kNever;
    n += pump_end_ != kNever;
    return n;
  }

  std::uint64_t total_pulses() const {
    std::uint64_t n = 0;
    for (const auto& a : axes_) n += a.total_pulses;
    return n;
  }

  // Fault injection hooks.
  void remove_part(int column, int row) {
    parts_.in_tray[static_cast<std::size_t>(seq::part_id(scenario_.layout, column, row) - 1)] = 0;
  }
  void pump_dry() {
    reservoir_.level_ml = 0.0;
    supply_dry_ = true;
  }
  void suppress_sensor(const std::string& sensor) {
    if (sensor == "z_up") z_.suppress_up_sensor(true);
    else if (sensor == "z_down") z_.suppress_down_sensor(true);
    else if (sensor == "x_home") axis(motion::AxisName::x).switch_suppressed = true;
    else if (sensor == "y_home") axis(motion::AxisName::y).switch_suppressed = true;
    else if (sensor == "dispenser_home") axis(motion::AxisName::dispenser).switch_suppressed = true;
    else if (sensor == "part_present") part_sensor_suppressed_ = true;
  }

  const AxisModel& axis(motion::AxisName a) const { return axes_[static_cast<std::size_t>(a)]; }
  AxisModel& axis(motion::AxisName a) { return axes_[static_cast<std::size_t>(a)]; }
  const motion::PneumaticZ& z() const { return z_; }
  const fluidics::VacuumGripper& gripper() const { return gripper_; }
  const fluidics::Reservoir& reservoir() const { return reservoir_; }
  const PartLocations& parts() const { return parts_; }
  const std::vector<goniometry::MeasurementRecord>& measurements() const { return measurements_; }
  double pumped_ml() const { return pumped_ml_; }
  double dispensed_ml() const { return dispensed_ml_; }
  bool lamp(Actuator a) const { return lamps_[static_cast<std::size_t>(a)]; }

 private:
  struct TickFlags {
    bool grip_completed = false;
    bool droplet_completed = false;
    std::optional<int> measured_part;
    std::uint32_t faults = 0;
  };

  static bool due(SimTime at, SimTime now, bool exclusive) { return exclusive ? at < now : at <= now; }

  void fault(seq::DeviceFaultKind kind, SimTime now, EventLog& log, Json detail) {
    tick_.faults |= 1u << static_cast<unsigned>(kind);
    detail["fault"] = to_string(kind);
    log.emit(now, "devices", "device_fault", std::move(detail));
  }

  static std::string_view name_of(const AxisModel& a) { return motion::to_string(a.axis.name); }

  void advance_axis(AxisModel& a, SimTime now, bool exclusive, EventLog& log) {
    if (a.mode == AxisModel::Mode::moving) {
      const auto d = a.runner.advance(now, exclusive);
      a.physical += d;
      *a.axis.position += d;
      a.total_pulses += static_cast<std::uint64_t>(d < 0 ? -d : d);
      if (!a.runner.active()) {
        a.mode = AxisModel::Mode::idle;
        log.emit(now, "motion", "move_end",
                 {{"axis", name_of(a)},
                  {"position", *a.axis.position},
                  {"mm", motion::steps_to_mm(a.axis, *a.axis.position)},
                  {"end_us", a.runner.end().count()}});
      }
      return;
    }
    if (a.mode != AxisModel::Mode::homing) return;
    const int rate = a.axis.pulse_rate_hz;
    while (a.pending_dir != 0) {
      const SimTime t = a.homing_start + motion::pulse_offset(a.homing_pulses + 1, rate);
      if (!due(t, now, exclusive)) break;
      a.physical += a.pending_dir;
      ++a.homing_pulses;
      ++a.total_pulses;
      a.pending_dir = a.homing->next(a.home_switch(t));
    }
    if (a.pending_dir == 0) finish_homing(a, now, log);
  }

  void finish_homing(AxisModel& a, SimTime now, EventLog& log) {
    a.mode = AxisModel::Mode::idle;
    const auto stage = a.homing->stage();
    if (stage == motion::HomingRoutine::Stage::done) {
      a.axis.homed = true;
      a.axis.position = 0;
      log.emit(now, "motion", "homed",
               {{"axis", name_of(a)},
                {"pulses", a.homing_pulses},
                {"end_us", (a.homing_start + motion::pulse_offset(a.homing_pulses, a.axis.pulse_rate_hz)).count()}});
    } else {
      fault(seq::DeviceFaultKind::homing_timeout, now, log,
            {{"axis", name_of(a)}, {"approach_steps", a.homing->approach_steps()}});
    }
    a.homing.reset();
  }

  void advance_z(SimTime now, EventLog& log) {
    switch (z_.advance(now)) {
      case motion::PneumaticZ::Event::arrived:
        log.emit(now, "pneumatics", "z_arrived", {{"position", motion::to_string(z_.commanded())}});
        break;
      case motion::PneumaticZ::Event::fault:
        fault(seq::DeviceFaultKind::actuator_fault, now, log,
              {{"actuator", "z_valve"}, {"commanded", motion::to_string(z_.commanded())}});
        break;
      case motion::PneumaticZ::Event::none:
        break;
    }
  }

  // Cup location, if the XY carriage sits exactly on a known pose.
  enum class Spot { slot, station, unload, elsewhere };
  std::pair<Spot, int> cup_spot() const {
    const auto& x = axis(motion::AxisName::x).axis.position;
    const auto& y = axis(motion::AxisName::y).axis.position;
    if (!x || !y) return {Spot::elsewhere, 0};
    const auto at = [&](const seq::StepTarget& t) { return *x == t.x && *y == t.y; };
    if (at(seq_cfg_.test_station)) return {Spot::station, 0};
    if (at(seq_cfg_.unload_station)) return {Spot::unload, 0};
    for (std::size_t i = 0; i < seq_cfg_.slots.size(); ++i)
      if (at(seq_cfg_.slots[i])) return {Spot::slot, static_cast<int>(i)};
    return {Spot::elsewhere, 0};
  }

  void finish_grip(SimTime now, EventLog& log) {
    grip_pending_ = false;
    tick_.grip_completed = true;
    const auto [spot, slot] = cup_spot();
    const bool z_down = z_.physical() == motion::ZPosition::down;
    std::optional<int> part;
    if (z_down) {
      if (spot == Spot::slot && parts_.in_tray[static_cast<std::size_t>(slot)]) part = slot + 1;
      if (spot == Spot::station) part = parts_.at_station;
    }
    const bool sensed = part.has_value() && !part_sensor_suppressed_;
    try {
      auto outcome = fluidics::grip(gripper_, sensed, z_.confirmed() == motion::ZConfirmed::down, true, now);
      gripper_ = outcome.gripper;
      if (outcome.pick_miss) {
        fault(seq::DeviceFaultKind::pick_miss, now, log, {{"spot", spot_name(spot)}});
        return;
      }
    } catch (const StateError& e) {
      fault(seq::DeviceFaultKind::actuator_fault, now, log, {{"actuator", "vacuum_valve"}, {"reason", e.what()}});
      return;
    }
    parts_.held = part;
    if (spot == Spot::slot) parts_.in_tray[static_cast<std::size_t>(slot)] = 0;
    if (spot == Spot::station) {
      parts_.at_station.reset();
      parts_.station_droplet_ul.reset();
    }
    log.emit(now, "gripper", "grip", {{"part_id", *part}, {"spot", spot_name(spot)}});
  }

  static std::string_view spot_name(Spot s) {
    switch (s) {
      case Spot::slot: return "tray";
      case Spot::station: return "test_station";
      case Spot::unload: return "unload";
      case Spot::elsewhere: return "elsewhere";
    }
    return "?";
  }

  void do_release(SimTime now, EventLog& log) {
    grip_pending_ = false;
    if (!gripper_.venturi_on && !gripper_.gripped) return;
    gripper_ = fluidics::release(gripper_, now);
    if (!parts_.held) {
      log.emit(now, "gripper", "release", {{"part_id", nullptr}});
      return;
    }
    const int part = *parts_.held;
    parts_.held.reset();
    auto [spot, slot] = cup_spot();
    if (z_.physical() != motion::ZPosition::down) spot = Spot::elsewhere;
    switch (spot) {
      case Spot::station:
        if (parts_.at_station) {
          spot = Spot::elsewhere;
          break;
        }
        parts_.at_station = part;
        parts_.station_droplet_ul.reset();
        break;
      case Spot::unload:
        ++parts_.unloaded;
        break;
      case Spot::slot:
        if (parts_.in_tray[static_cast<std::size_t>(slot)]) {
          spot = Spot::elsewhere;
          break;
        }
        parts_.in_tray[static_cast<std::size_t>(slot)] = 1;
        break;
      case Spot::elsewhere:
        break;
    }
    if (spot == Spot::elsewhere) ++parts_.dropped;
    log.emit(now, "gripper", "release", {{"part_id", part}, {"spot", spot_name(spot)}});
  }

  bool dispenser_in_position() const {
    const auto& d = axis(motion::AxisName::dispenser).axis;
    return d.homed && d.position == seq_cfg_.dispenser_drop;
  }

  void start_burst(Duration length, SimTime now, EventLog& log) {
    if (burst_end_ != kNever) return;
    const auto& spec = scenario_.dispense;
    if (!dispenser_in_position()) {
      fault(seq::DeviceFaultKind::position_error, now, log, {{"actuator", "dispense_valve"}});
      return;
    }
    if (reservoir_.level_ml < fluidics::ul_to_ml(spec.droplet_volume_ul)) {
      fault(seq::DeviceFaultKind::dry_dispense, now, log, {{"reservoir_ml", reservoir_.level_ml}});
      return;
    }
    burst_end_ = now + length;
    log.emit(now, "fluidics", "burst_start", {{"duration_us", length.count()}});
  }

  void finish_burst(SimTime now, EventLog& log) {
    burst_end_ = kNever;
    const auto& spec = scenario_.dispense;
    const double limit = spec.volume_sigma_frac > 0 ? spec.volume_tolerance_frac / spec.volume_sigma_frac : 0.0;
    const double z = droplet_rng_.normal_truncated(limit);
    try {
      const auto drop = fluidics::dispense(spec, reservoir_, dispenser_in_position(), true, z);
      dispensed_ml_ += fluidics::ul_to_ml(drop.nominal_ul);
      tick_.droplet_completed = true;
      if (parts_.at_station) parts_.station_droplet_ul = drop.actual_ul;
      Json part = parts_.at_station ? Json(*parts_.at_station) : Json(nullptr);
      log.emit(now, "fluidics", "droplet",
               {{"part_id", part},
                {"nominal_ul", drop.nominal_ul},
                {"actual_ul", drop.actual_ul},
                {"reservoir_ml", reservoir_.level_ml}});
    } catch (const DryDispense&) {
      fault(seq::DeviceFaultKind::dry_dispense, now, log, {{"reservoir_ml", reservoir_.level_ml}});
    } catch (const PositionError&) {
      fault(seq::DeviceFaultKind::position_error, now, log, {{"actuator", "dispense_valve"}});
    }
  }

  void finish_pump(Duration ran, SimTime now, EventLog& log) {
    const Duration planned = pump_end_ - pump_start_;
    pump_end_ = kNever;
    fluidics::PumpRunResult r;
    r.ran_for = ran;
    if (!supply_dry_) r = fluidics::pump_run(scenario_.pump, reservoir_, planned, true, ran);
    pumped_ml_ += r.delta_ml;
    log.emit(now, "fluidics", "pump",
             {{"ran_us", r.ran_for.count()},
              {"delta_ml", r.delta_ml},
              {"reservoir_ml", reservoir_.level_ml},
              {"overfilled", r.overfilled},
              {"supply_dry", supply_dry_}});
  }

  void finish_measure(SimTime now, EventLog& log) {
    measure_end_ = kNever;
    const int id = measure_part_;
    const auto [column, row] = seq::slot_of(scenario_.layout, id);
    const auto fail = [&](const char* reason) {
      fault(seq::DeviceFaultKind::measurement_fault, now, log, {{"part_id", id}, {"reason", reason}});
    };
    if (parts_.at_station != id) return fail("no part at the test station");
    if (!parts_.station_droplet_ul) return fail("no droplet on the part");
    const std::uint64_t seed = measure_rng_.next_u64();
    try {
      auto rec = goniometry::measure(scenario_.true_theta(column, row), *parts_.station_droplet_ul,
                                     scenario_.measurement, seed, id, now);
      rec.column = column;
      rec.row = row;
      measurements_.push_back(rec);
      tick_.measured_part = id;
      log.emit(now, "goniometry", "measurement",
               {{"part_id", id},
                {"column", column},
                {"row", row},
                {"theta_true_deg", rec.theta_true_deg},
                {"theta_deg", goniometry::round3(rec.theta_measured_deg)},
                {"rms_residual_mm", rec.rms_residual_mm},
                {"droplet_ul", rec.droplet_ul}});
    } catch (const MeasurementFault& e) {
      fail(e.what());
    }
  }

  void cut_power(SimTime now, EventLog& log) {
    bool any = false;
    for (auto& a : axes_) {
      if (a.mode == AxisModel::Mode::moving) {
        a.runner.abort();
        log.emit(now, "motion", "move_abort", {{"axis", name_of(a)}, {"position", *a.axis.position}});
      } else if (a.mode == AxisModel::Mode::homing) {
        a.homing->abort();
        a.homing.reset();
        a.pending_dir = 0;
        log.emit(now, "motion", "homing_abort", {{"axis", name_of(a)}});
      }
      a.mode = AxisModel::Mode::idle;
      // An unpowered drive loses holding torque; the position is no longer trusted.
      if (a.axis.homed) any = true;
      a.axis.homed = false;
      a.axis.position.reset();
    }
    if (z_.command(motion::ZPosition::up, now)) log.emit(now, "pneumatics", "z_command", {{"target", "up"}});
    do_release(now, log);
    if (burst_end_ != kNever) {
      burst_end_ = kNever;
      log.emit(now, "fluidics", "burst_abort");
    }
    if (pump_end_ != kNever) finish_pump(now - pump_start_, now, log);
    if (any) log.emit(now, "motion", "axes_unhomed");
  }

  void start_move(AxisModel& a, std::int64_t target, SimTime now, EventLog& log) {
    if (a.busy()) {
      a.runner.abort();
      a.mode = AxisModel::Mode::idle;
      if (a.homing) {
        a.homing.reset();
        a.pending_dir = 0;
      }
    }
    try {
      const auto profile = motion::plan_move(a.axis, target);
      if (profile.delta_steps == 0) return;
      a.runner = motion::MoveRunner(profile, now);
      a.mode = AxisModel::Mode::moving;
      log.emit(now, "motion", "move_start",
               {{"axis", name_of(a)},
                {"from", *a.axis.position},
                {"to", target},
                {"duration_us", profile.duration.count()}});
    } catch (const NotHomed&) {
      fault(seq::DeviceFaultKind::not_homed, now, log, {{"axis", name_of(a)}});
    } catch (const LimitError& e) {
      fault(seq::DeviceFaultKind::position_error, now, log, {{"axis", name_of(a)}, {"reason", e.what()}});
    }
  }

  void start_homing(AxisModel& a, SimTime now, EventLog& log) {
    if (a.busy()) return;
    a.axis.homed = false;
    a.axis.position.reset();
    a.homing.emplace(motion::max_homing_travel(a.axis, scenario_.homing_backoff_steps),
                     scenario_.homing_backoff_steps);
    a.homing_start = now;
    a.homing_pulses = 0;
    a.mode = AxisModel::Mode::homing;
    log.emit(now, "motion", "homing_start", {{"axis", name_of(a)}});
    a.pending_dir = a.homing->next(a.home_switch(now));
    if (a.pending_dir == 0) finish_homing(a, now, log);
  }

  void set_lamp(Actuator a, bool on, SimTime now, EventLog& log) {
    auto& lamp = lamps_[static_cast<std::size_t>(a)];
    if (lamp == on) return;
    lamp = on;
    log.emit(now, "panel", "lamp", {{"lamp", to_string(a)}, {"on", on}});
  }

  void apply_one(const ActuatorCommand& c, SimTime now, EventLog& log) {
    const bool on = c.kind != CommandKind::de_energize;
    switch (c.target) {
      case Actuator::x_drive:
      case Actuator::y_drive:
      case Actuator::dispenser_drive: {
        auto& a = axes_[static_cast<std::size_t>(c.target)];
        if (c.kind == CommandKind::move) start_move(a, c.arg, now, log);
        else if (c.kind == CommandKind::home) start_homing(a, now, log);
        else if (!on && a.busy()) {
          if (a.mode == AxisModel::Mode::moving) {
            a.runner.abort();
            log.emit(now, "motion", "move_abort", {{"axis", name_of(a)}, {"position", *a.axis.position}});
          } else {
            a.homing.reset();
            a.pending_dir = 0;
            log.emit(now, "motion", "homing_abort", {{"axis", name_of(a)}});
          }
          a.mode = AxisModel::Mode::idle;
        }
        break;
      }
      case Actuator::z_valve: {
        const auto target = on ? motion::ZPosition::down : motion::ZPosition::up;
        if (z_.command(target, now)) log.emit(now, "pneumatics", "z_command", {{"target", motion::to_string(target)}});
        break;
      }
      case Actuator::vacuum_valve:
        if (!on) {
          do_release(now, log);
        } else if (!gripper_.venturi_on) {
          gripper_.venturi_on = true;
          grip_pending_ = true;
          grip_due_ = now + scenario_.grip_time;
        }
        break;
      case Actuator::dispense_valve:
        if (on) {
          start_burst(Duration{c.arg}, now, log);
        } else if (burst_end_ != kNever) {
          burst_end_ = kNever;
          log.emit(now, "fluidics", "burst_abort");
        }
        break;
      case Actuator::pump_relay:
        if (on && pump_end_ == kNever) {
          pump_start_ = now;
          pump_end_ = now + Duration{c.arg};
          log.emit(now, "fluidics", "pump_start", {{"duration_us", c.arg}});
        } else if (!on && pump_end_ != kNever) {
          finish_pump(now - pump_start_, now, log);
        }
        break;
      case Actuator::tester:
        if (c.kind == CommandKind::measure && measure_end_ == kNever) {
          measure_part_ = static_cast<int>(c.arg);
          measure_end_ = now + scenario_.measure_time;
        }
        break;
      case Actuator::light_green:
      case Actuator::light_amber:
      case Actuator::pilot_start:
      case Actuator::pilot_stop:
        set_lamp(c.target, on, now, log);
        break;
    }
  }

  Scenario scenario_;
  seq::SequencerConfig seq_cfg_;
  std::array<AxisModel, 3> axes_{};
  motion::PneumaticZ z_;
  fluidics::VacuumGripper gripper_;
  fluidics::Reservoir reservoir_;
  PartLocations parts_;
  RandomStream droplet_rng_;
  RandomStream measure_rng_;
  std::vector<goniometry::MeasurementRecord> measurements_;
  std::array<bool, kActuatorCount> lamps_{};

  bool grip_pending_ = false;
  SimTime grip_due_{0};
  SimTime burst_end_ = kNever;
  SimTime pump_start_{0};
  SimTime pump_end_ = kNever;
  SimTime measure_end_ = kNever;
  int measure_part_ = 0;
  bool supply_dry_ = false;
  bool part_sensor_suppressed_ = false;
  double pumped_ml_ = 0.0;
  double dispensed_ml_ = 0.0;
  TickFlags tick_;
};

}  // namespace acat::sim
