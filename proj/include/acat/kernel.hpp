#pragma once

// Fixed-tick simulation driver. Each tick at time `now`:
//   1. due scenario injections and live commands (E-stop presses first)
//   2. safety relay
//   3. sequencer, fed the device feedback from the end of the previous tick
//   4. MCR gate
//   5. plant: completions up to `now`, then this tick's permitted commands
// The clock is the only notion of time; nothing here reads the wall clock.

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "acat/cell.hpp"
#include "acat/event_log.hpp"
#include "acat/safety.hpp"
#include "acat/scenario.hpp"
#include "acat/sequencer.hpp"

namespace acat::sim {

enum class RunOutcome { complete, faulted, stopped, timeout };

inline constexpr std::string_view to_string(RunOutcome o) {
  switch (o) {
    case RunOutcome::complete: return "complete";
    case RunOutcome::faulted: return "faulted";
    case RunOutcome::stopped: return "stopped";
    case RunOutcome::timeout: return "timeout";
  }
  return "?";
}

// Process exit status used by `acat run`.
inline constexpr int exit_code(RunOutcome o) {
  switch (o) {
    case RunOutcome::complete: return 0;
    case RunOutcome::faulted: return 2;
    case RunOutcome::stopped: return 3;
    case RunOutcome::timeout: return 4;
  }
  return 1;
}

struct RunResult {
  RunOutcome outcome = RunOutcome::stopped;
  seq::Phase phase = seq::Phase::idle;
  SimTime end{0};
  std::uint64_t ticks = 0;
  int measurements = 0;
};

class Simulation {
 public:
  explicit Simulation(Scenario scenario)
      : scenario_((scenario.validate(), std::move(scenario))),
        sequencer_(scenario_.sequencer_config()),
        plant_(scenario_),
        pending_(scenario_.injections) {
    for (auto src : safety::kAllSources) channels_[static_cast<std::size_t>(src)] = safety::closed_pair(src);
    feedback_ = plant_.feedback();
    requested_.reserve(32);
    permitted_.reserve(32);
    due_.reserve(8);
  }

  // Runs one tick. `live` carries commands that arrived since the last tick.
  void step(std::span<const Injection> live = {}) {
    const SimTime now = next_;
    due_.clear();
    while (next_injection_ < pending_.size() && pending_[next_injection_].time <= now)
      due_.push_back(pending_[next_injection_++]);
    due_.insert(due_.end(), live.begin(), live.end());
    std::stable_partition(due_.begin(), due_.end(),
                          [](const Injection& i) { return i.kind == InjectionKind::estop_press; });

    seq::OperatorInput input = seq::OperatorInput::none;
    bool reset = false;
    if (!auto_start_consumed_) {
      auto_start_consumed_ = true;
      if (scenario_.auto_start) {
        input = seq::OperatorInput::start;
        log_.emit(now, "operator", "start", {{"origin", "auto_start"}});
      }
    }
    if (!due_.empty()) finished_ = false;
    for (const auto& inj : due_) apply_injection(inj, now, input, reset);

    const auto before = safety_;
    safety_ = safety::step_safety(safety_, channels_, reset, now, scenario_.safety);
    if (safety_.mode != before.mode) {
      log_.emit(now, "safety", "safety",
                {{"from", safety::to_string(before.mode)},
                 {"mode", safety::to_string(safety_.mode)},
                 {"cause", safety_.fault_cause ? Json(safety::to_string(*safety_.fault_cause)) : Json(nullptr)}});
    }
    if (safety_.mcr_energized != before.mcr_energized)
      log_.emit(now, "safety", "mcr", {{"energized", safety_.mcr_energized}});

    sequencer_.step(safety_, input, feedback_, now, requested_, log_);
    safety::mcr_gate(safety_, requested_, permitted_);
    plant_.advance(now, safety_.mcr_energized, log_);
    plant_.apply(permitted_, now, log_);
    feedback_ = plant_.feedback();

    last_tick_ = now;
    next_ = now + scenario_.tick;
    ++ticks_;
  }

  // Adds an injection to the schedule; it fires on the first tick at or after
  // its time, after any already scheduled for the same time.
  void schedule(const Injection& inj) {
    const auto first = pending_.begin() + static_cast<std::ptrdiff_t>(next_injection_);
    const auto at = std::upper_bound(first, pending_.end(), inj.time,
                                     [](SimTime t, const Injection& i) { return t < i.time; });
    pending_.insert(at, inj);
  }

  bool injections_pending() const { return next_injection_ < pending_.size(); }

  // The cycle has come to rest and nothing further is scheduled.
  bool terminal() const {
    const auto phase = sequencer_.state().phase;
    const bool resting = phase == seq::Phase::complete || phase == seq::Phase::idle || phase == seq::Phase::faulted;
    return resting && auto_start_consumed_ && !injections_pending() && plant_.quiescent();
  }

  bool timed_out() const { return ticks_ > 0 && last_tick_ >= SimTime{0} + scenario_.max_time; }

  RunResult result() const {
    RunResult r;
    r.phase = sequencer_.state().phase;
    r.end = last_tick_;
    r.ticks = ticks_;
    r.measurements = static_cast<int>(plant_.measurements().size());
    if (!terminal()) r.outcome = RunOutcome::timeout;
    else if (r.phase == seq::Phase::complete) r.outcome = RunOutcome::complete;
    else if (r.phase == seq::Phase::faulted) r.outcome = RunOutcome::faulted;
    else r.outcome = RunOutcome::stopped;
    return r;
  }

  // Logs the end-of-run record once per resting point.
  RunResult finish() {
    const auto r = result();
    if (finished_) return r;
    finished_ = true;
    const auto& c = sequencer_.state();
    log_.emit(last_tick_, "kernel", "run_end",
              {{"outcome", to_string(r.outcome)},
               {"phase", seq::to_string(r.phase)},
               {"parts_done", c.parts_done},
               {"parts_measured", c.parts_measured},
               {"parts_skipped", c.parts_skipped},
               {"reservoir_ml", plant_.reservoir().level_ml},
               {"ticks", ticks_}});
    return r;
  }

  RunResult run() {
    do {
      step();
      if (terminal()) break;
    } while (!timed_out());
    return finish();
  }

  const Scenario& scenario() const { return scenario_; }
  const safety::SafetyState& safety() const { return safety_; }
  const seq::CycleState& cycle() const { return sequencer_.state(); }
  const seq::Sequencer& sequencer() const { return sequencer_; }
  const Plant& plant() const { return plant_; }
  const EventLog& log() const { return log_; }
  EventLog& log() { return log_; }
  const seq::DeviceFeedback& feedback() const { return feedback_; }
  const std::vector<ActuatorCommand>& last_requested() const { return requested_; }
  const std::vector<ActuatorCommand>& last_permitted() const { return permitted_; }
  const safety::SafetyChannelPair& channel_pair(safety::Source s) const {
    return channels_[static_cast<std::size_t>(s)];
  }
  SimTime now() const { return last_tick_; }
  SimTime next_tick() const { return next_; }
  std::uint64_t ticks() const { return ticks_; }

 private:
  void set_channel(safety::Source src, int channel, bool closed, SimTime now) {
    const auto i = static_cast<std::size_t>(src);
    if (stuck_[i][static_cast<std::size_t>(channel)]) return;
    auto& pair = channels_[i];
    auto& sig = channel == 0 ? pair.channel_a : pair.channel_b;
    sig = signals::update_signal(sig, signals::ElectricalMode::sinking_npn,
                                 closed ? signals::Logic::asserted : signals::Logic::deasserted, now);
  }

  void set_pair(safety::Source src, bool closed, SimTime now) {
    set_channel(src, 0, closed, now);
    set_channel(src, 1, closed, now);
  }

  void apply_injection(const Injection& inj, SimTime now, seq::OperatorInput& input, bool& reset) {
    log_.emit(now, "kernel", "injection", {{"kind", to_string(inj.kind)}, {"params", inj.params}});
    switch (inj.kind) {
      case InjectionKind::estop_press: set_pair(inj.source, false, now); break;
      case InjectionKind::estop_release: set_pair(inj.source, true, now); break;
      case InjectionKind::door_open: set_pair(safety::Source::door_interlock, false, now); break;
      case InjectionKind::door_close: set_pair(safety::Source::door_interlock, true, now); break;
      case InjectionKind::channel_stuck:
        stuck_[static_cast<std::size_t>(inj.source)][inj.channel == 'a' ? 0 : 1] = true;
        break;
      case InjectionKind::part_missing: plant_.remove_part(inj.column, inj.row); break;
      case InjectionKind::pump_dry: plant_.pump_dry(); break;
      case InjectionKind::sensor_suppress: plant_.suppress_sensor(inj.sensor); break;
      case InjectionKind::stop_press:
        input = seq::OperatorInput::stop;
        log_.emit(now, "operator", "stop");
        break;
      case InjectionKind::start_press:
        if (input != seq::OperatorInput::stop) input = seq::OperatorInput::start;
        log_.emit(now, "operator", "start", {{"origin", "button"}});
        break;
      case InjectionKind::reset_press:
        reset = true;
        log_.emit(now, "operator", "reset");
        break;
    }
  }

  Scenario scenario_;
  seq::Sequencer sequencer_;
  Plant plant_;
  EventLog log_;
  safety::SafetyState safety_;
  std::array<safety::SafetyChannelPair, 3> channels_{};
  std::array<std::array<bool, 2>, 3> stuck_{};
  std::vector<Injection> pending_;
  std::size_t next_injection_ = 0;
  std::vector<Injection> due_;
  seq::DeviceFeedback feedback_;
  std::vector<ActuatorCommand> requested_;
  std::vector<ActuatorCommand> permitted_;
  SimTime next_{0};
  SimTime last_tick_{0};
  std::uint64_t ticks_ = 0;
  bool auto_start_consumed_ = false;
  bool finished_ = false;
};

inline RunResult run(const Scenario& scenario, EventLog* log_out = nullptr) {
  Simulation sim(scenario);
  const auto r = sim.run();
  if (log_out) *log_out = sim.log();
  return r;
}

}  // namespace acat::sim
