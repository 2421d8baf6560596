#pragma once

// Dual-channel safety relay: E-stops and the door interlock each feed two
// redundant contacts. Opening a pair, or a pair whose contacts disagree for
// longer than the discrepancy window, latches a fault that drops the master
// control relay (MCR) until an explicit reset with all pairs closed.

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acat/commands.hpp"
#include "acat/errors.hpp"
#include "acat/signals.hpp"
#include "acat/time.hpp"

namespace acat::safety {

enum class Source { estop_operator, estop_main, door_interlock };
inline constexpr std::array<Source, 3> kAllSources = {Source::estop_operator, Source::estop_main,
                                                      Source::door_interlock};

enum class Mode { run, faulted, await_reset };
enum class FaultCause { estop, door_open, channel_discrepancy };
enum class ResetPolicy { manual_only };

// Channel logical level: asserted = contact closed (circuit intact).
struct SafetyChannelPair {
  signals::SignalState channel_a;
  signals::SignalState channel_b;
  Source source = Source::estop_operator;

  bool a_closed() const { return channel_a.asserted(); }
  bool b_closed() const { return channel_b.asserted(); }
  bool healthy() const { return a_closed() && b_closed(); }
  bool both_open() const { return !a_closed() && !b_closed(); }
  bool disagree() const { return a_closed() != b_closed(); }

  // The later of the two changes is the one that created the disagreement.
  SimTime disagreement_since() const { return std::max(channel_a.last_change, channel_b.last_change); }
};

inline SafetyChannelPair closed_pair(Source source, SimTime t = SimTime{0}) {
  const auto closed = signals::SignalState::from_logical(signals::ElectricalMode::sinking_npn,
                                                         signals::Logic::asserted, t);
  return {closed, closed, source};
}

struct SafetyState {
  Mode mode = Mode::run;
  std::optional<FaultCause> fault_cause;
  bool mcr_energized = true;
  bool red_light = false;
  std::optional<SimTime> faulted_at;

  friend bool operator==(const SafetyState&, const SafetyState&) = default;
};

struct SafetyConfig {
  Duration discrepancy_window = 500ms;
  ResetPolicy reset_policy = ResetPolicy::manual_only;
  std::string performance_level = "PL c";

  void validate() const {
    if (discrepancy_window <= Duration::zero()) throw ConfigError("discrepancy_window must be > 0");
  }
};

inline bool invariants_hold(const SafetyState& s) {
  const bool running = s.mode == Mode::run;
  return (running || !s.mcr_energized) && (s.red_light == !running) && (s.fault_cause.has_value() == !running);
}

inline FaultCause cause_for(Source s) {
  return s == Source::door_interlock ? FaultCause::door_open : FaultCause::estop;
}

namespace detail {

inline SafetyState faulted(FaultCause cause, SimTime now) {
  return {Mode::faulted, cause, false, true, now};
}

// First fault found in source order, if any.
inline std::optional<FaultCause> detect_fault(std::span<const SafetyChannelPair> channels, SimTime now,
                                              const SafetyConfig& cfg) {
  for (Source src : kAllSources) {
    for (const auto& pair : channels) {
      if (pair.source != src) continue;
      if (pair.both_open()) return cause_for(src);
      if (pair.disagree() && now - pair.disagreement_since() > cfg.discrepancy_window)
        return FaultCause::channel_discrepancy;
    }
  }
  return std::nullopt;
}

}  // namespace detail

inline SafetyState step_safety(const SafetyState& state, std::span<const SafetyChannelPair> channels,
                               bool reset_requested, SimTime now, const SafetyConfig& cfg) {
  cfg.validate();
  for (Source src : kAllSources) {
    const bool present =
        std::any_of(channels.begin(), channels.end(), [&](const auto& p) { return p.source == src; });
    if (!present) throw ConfigError("safety channels missing a source");
  }

  const auto fault = detail::detect_fault(channels, now, cfg);
  const bool all_healthy =
      std::all_of(channels.begin(), channels.end(), [](const auto& p) { return p.healthy(); });

  switch (state.mode) {
    case Mode::run:
      if (fault) return detail::faulted(*fault, now);
      return {Mode::run, std::nullopt, true, false, std::nullopt};
    case Mode::faulted:
      if (reset_requested && all_healthy) {
        SafetyState next = state;
        next.mode = Mode::await_reset;
        return next;
      }
      return state;
    case Mode::await_reset:
      if (all_healthy) return {Mode::run, std::nullopt, true, false, std::nullopt};
      return detail::faulted(fault.value_or(*state.fault_cause), now);
  }
  return state;
}

// Drops power to drives and solenoids while the MCR is open. Every gated
// command becomes a single de-energize for its target; lamps, pilots and the
// tester pass through untouched.
inline void mcr_gate(const SafetyState& state, std::span<const ActuatorCommand> requested,
                     std::vector<ActuatorCommand>& permitted) {
  permitted.clear();
  if (state.mcr_energized) {
    permitted.assign(requested.begin(), requested.end());
    return;
  }
  std::array<bool, kActuatorCount> cut{};
  for (const auto& c : requested) {
    if (!is_power_gated(c.target)) {
      permitted.push_back(c);
      continue;
    }
    auto& done = cut[static_cast<std::size_t>(c.target)];
    if (done) continue;
    done = true;
    permitted.push_back({c.target, CommandKind::de_energize, 0});
  }
}

inline std::vector<ActuatorCommand> mcr_gate(const SafetyState& state, std::span<const ActuatorCommand> requested) {
  std::vector<ActuatorCommand> out;
  mcr_gate(state, requested, out);
  return out;
}

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::run: return "run";
    case Mode::faulted: return "faulted";
    case Mode::await_reset: return "await_reset";
  }
  return "?";
}

inline std::string_view to_string(FaultCause c) {
  switch (c) {
    case FaultCause::estop: return "estop";
    case FaultCause::door_open: return "door_open";
    case FaultCause::channel_discrepancy: return "channel_discrepancy";
  }
  return "?";
}

inline std::string_view to_string(Source s) {
  switch (s) {
    case Source::estop_operator: return "estop_operator";
    case Source::estop_main: return "estop_main";
    case Source::door_interlock: return "door_interlock";
  }
  return "?";
}

}  // namespace acat::safety
