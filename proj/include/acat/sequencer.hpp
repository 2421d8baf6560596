#pragma once

// Test-cycle control logic. After the operator's start the cell initialises,
// homes, and then runs pick -> place -> dispense -> measure -> unload for each
// tray slot: the inner loop walks the rows of one column, the outer loop
// advances columns. A stop parks the cell; any safety fault exits the loop at
// once and de-energises every motion and dispensing load.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "acat/commands.hpp"
#include "acat/errors.hpp"
#include "acat/event_log.hpp"
#include "acat/goniometry.hpp"
#include "acat/motion.hpp"
#include "acat/safety.hpp"
#include "acat/time.hpp"

namespace acat::seq {

struct TrayLayout {
  int columns = 5;
  int rows = 5;
  double origin_x_mm = 10.0;
  double origin_y_mm = 100.0;
  double pitch_x_mm = 60.0;
  double pitch_y_mm = 60.0;

  int total_parts() const { return columns * rows; }

  void validate() const {
    if (columns <= 0 || rows <= 0) throw ConfigError("tray layout needs positive columns and rows");
    if (pitch_x_mm < 0 || pitch_y_mm < 0) throw ConfigError("tray pitch must be >= 0");
  }
};

struct PositionMm {
  double x = 0.0;
  double y = 0.0;
};

inline PositionMm part_position(const TrayLayout& layout, int column, int row) {
  if (column < 0 || column >= layout.columns) throw IndexError("column " + std::to_string(column) + " out of range");
  if (row < 0 || row >= layout.rows) throw IndexError("row " + std::to_string(row) + " out of range");
  return {layout.origin_x_mm + column * layout.pitch_x_mm, layout.origin_y_mm + row * layout.pitch_y_mm};
}

// 1-based id in column-major order.
inline int part_id(const TrayLayout& layout, int column, int row) { return column * layout.rows + row + 1; }

inline std::pair<int, int> slot_of(const TrayLayout& layout, int id) {
  return {(id - 1) / layout.rows, (id - 1) % layout.rows};
}

enum class Phase {
  idle,
  initializing,
  homing,
  picking,
  placing,
  dispensing,
  measuring,
  unloading,
  advancing,
  complete,
  stopping,
  faulted
};

inline constexpr std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::idle: return "idle";
    case Phase::initializing: return "initializing";
    case Phase::homing: return "homing";
    case Phase::picking: return "picking";
    case Phase::placing: return "placing";
    case Phase::dispensing: return "dispensing";
    case Phase::measuring: return "measuring";
    case Phase::unloading: return "unloading";
    case Phase::advancing: return "advancing";
    case Phase::complete: return "complete";
    case Phase::stopping: return "stopping";
    case Phase::faulted: return "faulted";
  }
  return "?";
}

inline constexpr bool is_active(Phase p) {
  return p != Phase::idle && p != Phase::complete && p != Phase::stopping && p != Phase::faulted;
}

struct CycleState {
  Phase phase = Phase::idle;
  int column_index = 0;
  int row_index = 0;
  int parts_done = 0;  // slots processed, measured or skipped
  int parts_measured = 0;
  int parts_skipped = 0;
  int total_parts = 25;
  SimTime started_at{0};
  bool gripper_engaged = false;
  bool axes_homed = false;
  bool dispenser_parked = true;

  friend bool operator==(const CycleState&, const CycleState&) = default;
};

inline CycleState initialize(const CycleState& cycle) {
  CycleState next = cycle;
  next.column_index = 0;
  next.row_index = 0;
  next.parts_done = 0;
  next.parts_measured = 0;
  next.parts_skipped = 0;
  next.gripper_engaged = false;
  next.axes_homed = false;
  next.dispenser_parked = true;
  return next;
}

enum class OperatorInput { none, start, stop };

enum class DeviceFaultKind : std::uint8_t {
  pick_miss,
  dry_dispense,
  position_error,
  actuator_fault,
  measurement_fault,
  homing_timeout,
  not_homed,
};

inline constexpr std::string_view to_string(DeviceFaultKind k) {
  switch (k) {
    case DeviceFaultKind::pick_miss: return "PickMiss";
    case DeviceFaultKind::dry_dispense: return "DryDispense";
    case DeviceFaultKind::position_error: return "PositionError";
    case DeviceFaultKind::actuator_fault: return "ActuatorFault";
    case DeviceFaultKind::measurement_fault: return "MeasurementFault";
    case DeviceFaultKind::homing_timeout: return "HomingTimeout";
    case DeviceFaultKind::not_homed: return "NotHomed";
  }
  return "?";
}

struct AxisFeedback {
  bool busy = false;
  bool homed = false;
  std::optional<std::int64_t> position;
};

// Device state as of the end of the previous tick. The *_completed flags and
// `faults` cover only that tick.
struct DeviceFeedback {
  std::array<AxisFeedback, 3> axes{};  // indexed by motion::AxisName
  motion::ZConfirmed z = motion::ZConfirmed::up;
  bool z_busy = false;
  bool gripped = false;
  bool grip_completed = false;
  bool droplet_completed = false;
  bool pump_running = false;
  bool measuring = false;
  std::optional<int> measured_part;
  std::optional<int> station_part;  // part left on the test station
  double reservoir_ml = 0.0;
  std::uint32_t faults = 0;

  const AxisFeedback& axis(motion::AxisName a) const { return axes[static_cast<std::size_t>(a)]; }
  AxisFeedback& axis(motion::AxisName a) { return axes[static_cast<std::size_t>(a)]; }
  bool has(DeviceFaultKind k) const { return faults & (1u << static_cast<unsigned>(k)); }
  void raise(DeviceFaultKind k) { faults |= 1u << static_cast<unsigned>(k); }
};

enum class FaultPolicy { skip, halt };

struct StepTarget {
  std::int64_t x = 0;
  std::int64_t y = 0;
};

struct SequencerConfig {
  TrayLayout layout;
  std::vector<StepTarget> slots;  // by part_id - 1
  StepTarget test_station;
  StepTarget unload_station;
  std::int64_t dispenser_drop = 250;
  std::int64_t dispenser_park = 0;
  Duration burst = 50ms;
  FaultPolicy policy = FaultPolicy::skip;
  double prime_below_ml = 5.0;
  double prime_to_ml = 100.0;
  double pump_ml_per_s = 1300.0 / 60.0;
};

class Sequencer {
 public:
  explicit Sequencer(SequencerConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.layout.validate();
    if (static_cast<int>(cfg_.slots.size()) != cfg_.layout.total_parts())
      throw ConfigError("sequencer needs one step target per tray slot");
    state_.total_parts = cfg_.layout.total_parts();
  }

  const CycleState& state() const { return state_; }
  const SequencerConfig& config() const { return cfg_; }
  int current_part_id() const { return part_id(cfg_.layout, state_.column_index, state_.row_index); }

  // One tick. `out` receives the actuator commands for this tick.
  void step(const safety::SafetyState& safety, OperatorInput input, const DeviceFeedback& fb, SimTime now,
            std::vector<ActuatorCommand>& out, sim::EventLog& log) {
    out.clear();
    if (safety.mode != safety::Mode::run) {
      if (state_.phase != Phase::faulted) enter_faulted(now, out, log);
      return;
    }

    switch (state_.phase) {
      case Phase::faulted:
        set_phase(Phase::idle, now, out, log);
        return;
      case Phase::idle:
      case Phase::complete:
        if (input == OperatorInput::start) start_cycle(fb, now, out, log);
        return;
      case Phase::stopping:
        // Faults while parking are noted but do not hold up the park.
        if (fb.faults) op_done_ = true;
        run_program(fb, now, out, log);
        return;
      default:
        break;
    }

    if (input == OperatorInput::stop) {
      enter_stopping(now, out, log, "operator_stop");
      return;
    }
    if (fb.faults && handle_faults(fb, now, out, log)) return;
    run_program(fb, now, out, log);
  }

 private:
  enum class OpKind : std::uint8_t {
    z_up,
    z_up_nowait,
    z_down,
    grip,
    release,
    move_xy,
    move_dispenser,
    home_all,
    burst,
    measure,
    prime,
    park
  };
  struct Op {
    OpKind kind = OpKind::release;
    std::int64_t a = 0;
    std::int64_t b = 0;
  };
  struct Program {
    std::array<Op, 12> ops{};
    std::size_t size = 0;
    void push(Op op) { ops[size++] = op; }
  };

  void start_cycle(const DeviceFeedback& fb, SimTime now, std::vector<ActuatorCommand>& out, sim::EventLog& log) {
    state_ = initialize(state_);
    state_.started_at = now;
    set_phase(Phase::initializing, now, out, log);
    Program p;
    p.push({OpKind::release});
    if (fb.reservoir_ml < cfg_.prime_below_ml && cfg_.prime_to_ml > fb.reservoir_ml) {
      const double seconds = (cfg_.prime_to_ml - fb.reservoir_ml) / cfg_.pump_ml_per_s;
      p.push({OpKind::prime, from_seconds(seconds).count()});
    }
    load(p);
    run_program(fb, now, out, log);
  }

  void enter_faulted(SimTime now, std::vector<ActuatorCommand>& out, sim::EventLog& log) {
    for (Actuator a : kGatedActuators) out.push_back({a, CommandKind::de_energize, 0});
    state_.gripper_engaged = false;
    state_.axes_homed = false;
    program_ = {};
    op_index_ = 0;
    after_program_.reset();
    set_phase(Phase::faulted, now, out, log);
  }

  void enter_stopping(SimTime now, std::vector<ActuatorCommand>& out, sim::EventLog& log, std::string_view reason) {
    for (Actuator a : {Actuator::x_drive, Actuator::y_drive, Actuator::dispenser_drive, Actuator::dispense_valve,
                       Actuator::pump_relay})
      out.push_back({a, CommandKind::de_energize, 0});
    log.emit(now, "sequencer", "stop_requested", {{"reason", reason}, {"phase", to_string(state_.phase)}});
    set_phase(Phase::stopping, now, out, log);
    Program p;
    p.push({OpKind::release});
    p.push({OpKind::z_up});
    p.push({OpKind::park});
    load(p);
    after_program_ = Phase::idle;
  }

  // Returns true when the fault consumed this tick.
  bool handle_faults(const DeviceFeedback& fb, SimTime now, std::vector<ActuatorCommand>& out, sim::EventLog& log) {
    using K = DeviceFaultKind;
    const auto halt = [&](K kind) {
      log.emit(now, "sequencer", "halt", {{"fault", to_string(kind)}, {"phase", to_string(state_.phase)}});
      enter_stopping(now, out, log, "device_fault");
      return true;
    };
    for (unsigned bit = 0; bit < 8; ++bit) {
      const K kind = static_cast<K>(bit);
      if (!fb.has(kind)) continue;
      if (kind == K::homing_timeout || kind == K::not_homed || state_.phase == Phase::homing ||
          state_.phase == Phase::initializing)
        return halt(kind);
      if (cfg_.policy == FaultPolicy::halt) return halt(kind);

      Program recovery;
      Phase resume = Phase::advancing;
      switch (state_.phase) {
        case Phase::dispensing:
          recovery.push({OpKind::move_dispenser, cfg_.dispenser_park});
          resume = Phase::unloading;
          break;
        case Phase::measuring:
          resume = Phase::unloading;
          break;
        default:
          recovery.push({OpKind::release});
          recovery.push({OpKind::z_up_nowait});
          break;
      }
      skip_part(kind, now, log);
      load(recovery);
      after_program_ = resume;
      run_program(fb, now, out, log);
      return true;
    }
    return false;
  }

  void skip_part(DeviceFaultKind kind, SimTime now, sim::EventLog& log) {
    if (part_skipped_) return;
    part_skipped_ = true;
    ++state_.parts_skipped;
    log.emit(now, "sequencer", "part_skipped",
             {{"part_id", current_part_id()},
              {"column", state_.column_index},
              {"row", state_.row_index},
              {"cause", to_string(kind)}});
  }

  void load(const Program& p) {
    program_ = p;
    op_index_ = 0;
    op_issued_ = false;
    op_done_ = false;
    after_program_.reset();
  }

  Program program_for(Phase p, const DeviceFeedback& fb) const {
    Program prog;
    const auto& slot = cfg_.slots[static_cast<std::size_t>(current_part_id() - 1)];
    switch (p) {
      case Phase::homing:
        prog.push({OpKind::z_up});
        prog.push({OpKind::home_all});
        // A part left on the station by an interrupted cycle goes to unload
        // unmeasured, so the station is free for the first placement.
        if (fb.station_part) {
          prog.push({OpKind::move_xy, cfg_.test_station.x, cfg_.test_station.y});
          prog.push({OpKind::z_down});
          prog.push({OpKind::grip});
          prog.push({OpKind::z_up});
          prog.push({OpKind::move_xy, cfg_.unload_station.x, cfg_.unload_station.y});
          prog.push({OpKind::z_down});
          prog.push({OpKind::release});
          prog.push({OpKind::z_up});
        }
        break;
      case Phase::picking:
        prog.push({OpKind::move_xy, slot.x, slot.y});
        prog.push({OpKind::z_down});
        prog.push({OpKind::grip});
        prog.push({OpKind::z_up});
        break;
      case Phase::placing:
        prog.push({OpKind::move_xy, cfg_.test_station.x, cfg_.test_station.y});
        prog.push({OpKind::z_down});
        prog.push({OpKind::release});
        prog.push({OpKind::z_up});
        break;
      case Phase::dispensing:
        prog.push({OpKind::move_dispenser, cfg_.dispenser_drop});
        prog.push({OpKind::burst, cfg_.burst.count()});
        prog.push({OpKind::move_dispenser, cfg_.dispenser_park});
        break;
      case Phase::measuring:
        prog.push({OpKind::measure, current_part_id()});
        break;
      case Phase::unloading:
        prog.push({OpKind::z_down});
        prog.push({OpKind::grip});
        prog.push({OpKind::z_up});
        prog.push({OpKind::move_xy, cfg_.unload_station.x, cfg_.unload_station.y});
        prog.push({OpKind::z_down});
        prog.push({OpKind::release});
        prog.push({OpKind::z_up});
        break;
      default:
        break;
    }
    return prog;
  }

  static Phase successor(Phase p) {
    switch (p) {
      case Phase::initializing: return Phase::homing;
      case Phase::homing: return Phase::picking;
      case Phase::picking: return Phase::placing;
      case Phase::placing: return Phase::dispensing;
      case Phase::dispensing: return Phase::measuring;
      case Phase::measuring: return Phase::unloading;
      case Phase::unloading: return Phase::advancing;
      case Phase::stopping: return Phase::idle;
      default: return Phase::idle;
    }
  }

  void issue(const Op& op, const DeviceFeedback& fb, std::vector<ActuatorCommand>& out) {
    switch (op.kind) {
      case OpKind::z_up:
      case OpKind::z_up_nowait:
        out.push_back({Actuator::z_valve, CommandKind::de_energize, 0});
        break;
      case OpKind::z_down:
        out.push_back({Actuator::z_valve, CommandKind::energize, 0});
        break;
      case OpKind::grip:
        out.push_back({Actuator::vacuum_valve, CommandKind::energize, 0});
        state_.gripper_engaged = true;
        break;
      case OpKind::release:
        out.push_back({Actuator::vacuum_valve, CommandKind::de_energize, 0});
        state_.gripper_engaged = false;
        break;
      case OpKind::move_xy:
        out.push_back({Actuator::x_drive, CommandKind::move, op.a});
        out.push_back({Actuator::y_drive, CommandKind::move, op.b});
        break;
      case OpKind::move_dispenser:
        out.push_back({Actuator::dispenser_drive, CommandKind::move, op.a});
        state_.dispenser_parked = op.a == cfg_.dispenser_park;
        break;
      case OpKind::home_all:
        out.push_back({Actuator::x_drive, CommandKind::home, 0});
        out.push_back({Actuator::y_drive, CommandKind::home, 0});
        out.push_back({Actuator::dispenser_drive, CommandKind::home, 0});
        break;
      case OpKind::burst:
        out.push_back({Actuator::dispense_valve, CommandKind::energize, op.a});
        break;
      case OpKind::measure:
        out.push_back({Actuator::tester, CommandKind::measure, op.a});
        break;
      case OpKind::prime:
        out.push_back({Actuator::pump_relay, CommandKind::energize, op.a});
        break;
      case OpKind::park:
        for (auto [axis, target] : {std::pair{Actuator::x_drive, motion::AxisName::x},
                                    std::pair{Actuator::y_drive, motion::AxisName::y},
                                    std::pair{Actuator::dispenser_drive, motion::AxisName::dispenser}})
          if (fb.axis(target).homed) out.push_back({axis, CommandKind::move, 0});
        state_.dispenser_parked = true;
        break;
    }
  }

  bool completed(const Op& op, const DeviceFeedback& fb) const {
    using motion::AxisName;
    const auto idle_axis = [&](AxisName a) { return !fb.axis(a).busy; };
    switch (op.kind) {
      case OpKind::z_up: return fb.z == motion::ZConfirmed::up && !fb.z_busy;
      case OpKind::z_down: return fb.z == motion::ZConfirmed::down && !fb.z_busy;
      case OpKind::z_up_nowait:
      case OpKind::release: return true;
      case OpKind::grip: return fb.grip_completed && fb.gripped;
      case OpKind::move_xy: return idle_axis(AxisName::x) && idle_axis(AxisName::y);
      case OpKind::move_dispenser: return idle_axis(AxisName::dispenser);
      case OpKind::park:
        return idle_axis(AxisName::x) && idle_axis(AxisName::y) && idle_axis(AxisName::dispenser);
      case OpKind::home_all:
        for (const auto& a : fb.axes)
          if (a.busy || !a.homed) return false;
        return true;
      case OpKind::burst: return fb.droplet_completed;
      case OpKind::measure: return fb.measured_part == static_cast<int>(op.a);
      case OpKind::prime: return !fb.pump_running;
    }
    return false;
  }

  void run_program(const DeviceFeedback& fb, SimTime now, std::vector<ActuatorCommand>& out, sim::EventLog& log) {
    while (true) {
      if (op_index_ >= program_.size) {
        finish_phase(fb, now, out, log);
        return;
      }
      const Op& op = program_.ops[op_index_];
      if (!op_issued_) {
        issue(op, fb, out);
        op_issued_ = true;
        op_done_ = false;
        return;
      }
      if (!op_done_ && !completed(op, fb)) return;
      if (op.kind == OpKind::measure) {
        ++state_.parts_measured;
        part_measured_ = true;
      }
      if (op.kind == OpKind::home_all) state_.axes_homed = true;
      ++op_index_;
      op_issued_ = false;
      op_done_ = false;
    }
  }

  void finish_phase(const DeviceFeedback& fb, SimTime now, std::vector<ActuatorCommand>& out, sim::EventLog& log) {
    const Phase next = after_program_.value_or(successor(state_.phase));
    after_program_.reset();
    if (state_.phase == Phase::advancing || next == Phase::advancing) {
      if (next == Phase::advancing) {
        set_phase(Phase::advancing, now, out, log);
      }
      advance_slot(fb, now, out, log);
      return;
    }
    enter_phase(next, fb, now, out, log);
  }

  void advance_slot(const DeviceFeedback& fb, SimTime now, std::vector<ActuatorCommand>& out, sim::EventLog& log) {
    ++state_.parts_done;
    part_skipped_ = false;
    part_measured_ = false;
    if (state_.parts_done >= state_.total_parts) {
      enter_phase(Phase::complete, fb, now, out, log);
      return;
    }
    if (++state_.row_index == cfg_.layout.rows) {
      state_.row_index = 0;
      ++state_.column_index;
    }
    enter_phase(Phase::picking, fb, now, out, log);
  }

  void enter_phase(Phase next, const DeviceFeedback& fb, SimTime now, std::vector<ActuatorCommand>& out,
                   sim::EventLog& log) {
    set_phase(next, now, out, log);
    if (next == Phase::complete || next == Phase::idle) {
      program_ = {};
      op_index_ = 0;
      return;
    }
    if (next == Phase::homing && fb.station_part)
      log.emit(now, "sequencer", "station_clear", {{"part_id", *fb.station_part}});
    load(program_for(next, fb));
    run_program(fb, now, out, log);
  }

  void set_phase(Phase next, SimTime now, std::vector<ActuatorCommand>& out, sim::EventLog& log) {
    const Phase prev = state_.phase;
    if (prev == next) return;
    state_.phase = next;
    log.emit(now, "sequencer", "phase",
             {{"from", to_string(prev)},
              {"to", to_string(next)},
              {"column", state_.column_index},
              {"row", state_.row_index},
              {"parts_done", state_.parts_done}});
    const int lamps = lamp_group(next);
    if (lamps != lamp_group(prev)) {
      const auto lamp = [&](Actuator a, bool on) {
        out.push_back({a, on ? CommandKind::energize : CommandKind::de_energize, 0});
      };
      lamp(Actuator::light_green, lamps == 0);
      lamp(Actuator::light_amber, lamps == 1);
      lamp(Actuator::pilot_start, lamps == 0);
      lamp(Actuator::pilot_stop, lamps != 0);
    }
  }

  // 0: cycle running, 1: idle/awaiting operator, 2: faulted
  static int lamp_group(Phase p) {
    if (p == Phase::faulted) return 2;
    return is_active(p) ? 0 : 1;
  }

  SequencerConfig cfg_;
  CycleState state_;
  Program program_;
  std::size_t op_index_ = 0;
  bool op_issued_ = false;
  bool op_done_ = false;
  bool part_skipped_ = false;
  bool part_measured_ = false;
  std::optional<Phase> after_program_;
};

}  // namespace acat::seq
