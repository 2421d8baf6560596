#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace acat {

enum class Actuator : std::uint8_t {
  x_drive,
  y_drive,
  dispenser_drive,
  z_valve,
  vacuum_valve,
  dispense_valve,
  pump_relay,
  tester,
  light_green,
  light_amber,
  pilot_start,
  pilot_stop,
};

inline constexpr std::size_t kActuatorCount = 12;

// move: arg = target position in steps. home: run the homing routine.
// energize: z_valve down, vacuum_valve on, dispense_valve burst (arg = µs),
// pump_relay run (arg = µs), lamps on. de_energize: stop / release / lamp off.
// measure: tester takes a reading for part arg.
enum class CommandKind : std::uint8_t { move, home, energize, de_energize, measure };

struct ActuatorCommand {
  Actuator target = Actuator::x_drive;
  CommandKind kind = CommandKind::de_energize;
  std::int64_t arg = 0;

  friend bool operator==(const ActuatorCommand&, const ActuatorCommand&) = default;
};

inline constexpr bool is_drive(Actuator a) {
  return a == Actuator::x_drive || a == Actuator::y_drive || a == Actuator::dispenser_drive;
}

inline constexpr bool is_solenoid(Actuator a) {
  return a == Actuator::z_valve || a == Actuator::vacuum_valve || a == Actuator::dispense_valve ||
         a == Actuator::pump_relay;
}

// Everything fed from the MCR-switched 24 V branch: the drives, the pneumatic
// solenoids and the pump relay.
inline constexpr bool is_power_gated(Actuator a) { return is_drive(a) || is_solenoid(a); }

// A command that would put energy into a gated load.
inline constexpr bool is_energizing(const ActuatorCommand& c) {
  return is_power_gated(c.target) && c.kind != CommandKind::de_energize;
}

inline constexpr std::array<Actuator, 7> kGatedActuators = {
    Actuator::x_drive,      Actuator::y_drive,        Actuator::dispenser_drive, Actuator::z_valve,
    Actuator::vacuum_valve, Actuator::dispense_valve, Actuator::pump_relay};

inline constexpr std::string_view to_string(Actuator a) {
  switch (a) {
    case Actuator::x_drive: return "x_drive";
    case Actuator::y_drive: return "y_drive";
    case Actuator::dispenser_drive: return "dispenser_drive";
    case Actuator::z_valve: return "z_valve";
    case Actuator::vacuum_valve: return "vacuum_valve";
    case Actuator::dispense_valve: return "dispense_valve";
    case Actuator::pump_relay: return "pump_relay";
    case Actuator::tester: return "tester";
    case Actuator::light_green: return "light_green";
    case Actuator::light_amber: return "light_amber";
    case Actuator::pilot_start: return "pilot_start";
    case Actuator::pilot_stop: return "pilot_stop";
  }
  return "?";
}

inline constexpr std::string_view to_string(CommandKind k) {
  switch (k) {
    case CommandKind::move: return "move";
    case CommandKind::home: return "home";
    case CommandKind::energize: return "energize";
    case CommandKind::de_energize: return "de_energize";
    case CommandKind::measure: return "measure";
  }
  return "?";
}

}  // namespace acat
