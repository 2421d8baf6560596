#pragma once

// Water path (reservoir, diaphragm pump, pneumatic anti-drip dispense valve)
// and the venturi vacuum end effector.

#include <algorithm>
#include <cmath>
#include <optional>

#include "acat/errors.hpp"
#include "acat/signals.hpp"
#include "acat/time.hpp"

namespace acat::fluidics {

struct PumpSpec {
  double flow_rate_ml_per_min = 1300.0;
  double supply_voltage = 12.0;
  double fuse_a = 1.6;
  bool running = false;

  void validate() const {
    if (!(flow_rate_ml_per_min > 0)) throw ConfigError("pump flow_rate must be > 0");
  }
  double ml_per_second() const { return flow_rate_ml_per_min / 60.0; }
};

struct Reservoir {
  double capacity_ml = 250.0;
  double level_ml = 100.0;

  void validate() const {
    if (!(capacity_ml > 0)) throw ConfigError("reservoir capacity must be > 0");
    if (level_ml < 0 || level_ml > capacity_ml) throw ConfigError("reservoir level must lie in [0, capacity]");
  }
};

struct PumpRunResult {
  double delta_ml = 0.0;
  Duration ran_for{0};
  bool overfilled = false;
};

// Runs the pump for `duration`, or until `fault_after` if the safety relay
// drops power first. The level is clamped at capacity.
inline PumpRunResult pump_run(const PumpSpec& pump, Reservoir& reservoir, Duration duration, bool power_available = true,
                              std::optional<Duration> fault_after = std::nullopt) {
  pump.validate();
  if (!power_available) throw StateError("pump refused: safety circuit not in run");
  if (duration < Duration::zero()) throw InputError("pump duration must be >= 0");
  PumpRunResult r;
  r.ran_for = fault_after ? std::clamp(*fault_after, Duration::zero(), duration) : duration;
  const double inflow = pump.ml_per_second() * to_seconds(r.ran_for);
  const double before = reservoir.level_ml;
  const double unclamped = before + inflow;
  reservoir.level_ml = std::min(unclamped, reservoir.capacity_ml);
  r.overfilled = unclamped > reservoir.capacity_ml;
  r.delta_ml = reservoir.level_ml - before;
  return r;
}

struct DispenseSpec {
  double droplet_volume_ul = 10.0;
  Duration burst_duration = 50ms;
  bool anti_drip = true;
  double volume_sigma_frac = 0.01;  // simulated droplet noise
  double volume_tolerance_frac = 0.02;

  void validate() const {
    if (!(droplet_volume_ul > 0)) throw ConfigError("droplet_volume must be > 0");
    if (burst_duration <= Duration::zero()) throw ConfigError("burst_duration must be > 0");
    if (volume_sigma_frac < 0 || volume_tolerance_frac < 0) throw ConfigError("droplet noise must be >= 0");
  }
};

// Linear valve calibration: 50 ms of air releases 10 µL.
inline constexpr double kMicrolitersPerBurstMs = 10.0 / 50.0;

inline double volume_for_burst(Duration burst) {
  return kMicrolitersPerBurstMs * static_cast<double>(burst.count()) / 1000.0;
}

inline Duration burst_for_volume(double volume_ul) {
  return Duration{static_cast<Duration::rep>(std::llround(volume_ul / kMicrolitersPerBurstMs * 1000.0))};
}

struct Droplet {
  double nominal_ul = 0.0;
  double actual_ul = 0.0;
};

inline constexpr double ul_to_ml(double ul) { return ul / 1000.0; }

// One burst, one droplet. `noise_z` is a standard-normal draw already
// truncated by the caller; the realised volume is additionally clamped to the
// configured tolerance band. The reservoir is charged the nominal volume.
inline Droplet dispense(const DispenseSpec& spec, Reservoir& reservoir, bool in_position, bool power_available = true,
                        double noise_z = 0.0) {
  spec.validate();
  if (!power_available) throw StateError("dispense refused: safety circuit not in run");
  if (!in_position) throw PositionError("dispenser is not parked at the drop position");
  const double nominal_ml = ul_to_ml(spec.droplet_volume_ul);
  if (reservoir.level_ml < nominal_ml) throw DryDispense("reservoir holds less than one droplet");
  const double frac = std::clamp(noise_z * spec.volume_sigma_frac, -spec.volume_tolerance_frac,
                                 spec.volume_tolerance_frac);
  reservoir.level_ml -= nominal_ml;
  return {spec.droplet_volume_ul, spec.droplet_volume_ul * (1.0 + frac)};
}

struct VacuumGripper {
  bool venturi_on = false;
  bool gripped = false;
  signals::SignalState part_present_sensor{};
};

struct GripOutcome {
  VacuumGripper gripper;
  bool pick_miss = false;
};

inline GripOutcome grip(const VacuumGripper& g, bool part_present, bool z_down, bool power_available = true,
                        SimTime now = SimTime{0}) {
  if (!power_available) throw StateError("grip refused: safety circuit not in run");
  if (!z_down) throw StateError("grip requires Z confirmed down");
  if (g.gripped) throw StateError("gripper already holds a part");
  GripOutcome out{g, !part_present};
  out.gripper.venturi_on = true;
  out.gripper.gripped = part_present;
  out.gripper.part_present_sensor =
      signals::update_signal(g.part_present_sensor, signals::ElectricalMode::sinking_npn,
                             part_present ? signals::Logic::asserted : signals::Logic::deasserted, now);
  return out;
}

inline VacuumGripper release(const VacuumGripper& g, SimTime now = SimTime{0}) {
  VacuumGripper out = g;
  out.venturi_on = false;
  out.gripped = false;
  out.part_present_sensor = signals::update_signal(g.part_present_sensor, signals::ElectricalMode::sinking_npn,
                                                   signals::Logic::deasserted, now);
  return out;
}

}  // namespace acat::fluidics
