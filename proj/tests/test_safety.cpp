#include <catch_amalgamated.hpp>

#include "acat/random.hpp"
#include "acat/safety.hpp"

using namespace acat;
using namespace acat::safety;

namespace {

using Pairs = std::array<SafetyChannelPair, 3>;

Pairs all_closed() {
  return {closed_pair(Source::estop_operator), closed_pair(Source::estop_main), closed_pair(Source::door_interlock)};
}

void set(SafetyChannelPair& p, bool a_closed, bool b_closed, SimTime t) {
  const auto m = signals::ElectricalMode::sinking_npn;
  p.channel_a = signals::update_signal(p.channel_a, m, a_closed ? signals::Logic::asserted : signals::Logic::deasserted, t);
  p.channel_b = signals::update_signal(p.channel_b, m, b_closed ? signals::Logic::asserted : signals::Logic::deasserted, t);
}

}  // namespace

TEST_CASE("healthy steady state stays in run", "[safety]") {
  const SafetyConfig cfg;
  const auto s = step_safety(SafetyState{}, all_closed(), false, SimTime{1000}, cfg);
  CHECK(s.mode == Mode::run);
  CHECK(s.mcr_energized);
  CHECK_FALSE(s.red_light);
  CHECK(invariants_hold(s));
}

TEST_CASE("E-stop opens both channels and cuts the MCR in the same tick", "[safety]") {
  const SafetyConfig cfg;
  auto pairs = all_closed();
  set(pairs[0], false, false, SimTime{7000});
  const auto s = step_safety(SafetyState{}, pairs, false, SimTime{7000}, cfg);
  CHECK(s.mode == Mode::faulted);
  CHECK(s.fault_cause == FaultCause::estop);
  CHECK_FALSE(s.mcr_energized);
  CHECK(s.red_light);
  CHECK(s.faulted_at == SimTime{7000});
  CHECK(invariants_hold(s));

  auto door = all_closed();
  set(door[2], false, false, SimTime{0});
  CHECK(step_safety(SafetyState{}, door, false, SimTime{0}, cfg).fault_cause == FaultCause::door_open);
}

TEST_CASE("channel discrepancy against a hand-stepped oracle", "[safety]") {
  // Door channel A opens at t=0 while B stays closed, for 600 ms, window 500 ms,
  // 1 ms ticks. The pair disagrees from t=0, so the first tick with
  // now - 0 > 500 ms is t=501 ms.
  SafetyConfig cfg;
  cfg.discrepancy_window = 500ms;
  auto pairs = all_closed();
  set(pairs[2], false, true, SimTime{0});
  SafetyState s;
  std::optional<SimTime> fault_at;
  for (SimTime t{0}; t <= SimTime{600'000}; t += 1ms) {
    s = step_safety(s, pairs, false, t, cfg);
    if (!fault_at && s.mode == Mode::faulted) fault_at = t;
  }
  REQUIRE(fault_at);
  CHECK(*fault_at == SimTime{501'000});
  CHECK(s.fault_cause == FaultCause::channel_discrepancy);
}

TEST_CASE("faults latch until an explicit reset with every pair closed", "[safety]") {
  const SafetyConfig cfg;
  auto pairs = all_closed();
  set(pairs[1], false, false, SimTime{0});
  auto s = step_safety(SafetyState{}, pairs, false, SimTime{0}, cfg);
  REQUIRE(s.mode == Mode::faulted);

  // Reset while the pair is still open does nothing.
  s = step_safety(s, pairs, true, SimTime{1000}, cfg);
  CHECK(s.mode == Mode::faulted);

  // Closing the pair alone does not clear the latch.
  set(pairs[1], true, true, SimTime{2000});
  for (int i = 0; i < 100; ++i) {
    s = step_safety(s, pairs, false, SimTime{3000 + i * 1000}, cfg);
    REQUIRE(s.mode == Mode::faulted);
    REQUIRE_FALSE(s.mcr_energized);
  }
  s = step_safety(s, pairs, true, SimTime{200'000}, cfg);
  CHECK(s.mode == Mode::await_reset);
  CHECK_FALSE(s.mcr_energized);
  s = step_safety(s, pairs, false, SimTime{201'000}, cfg);
  CHECK(s.mode == Mode::run);
  CHECK(s.mcr_energized);
  CHECK(invariants_hold(s));
}

TEST_CASE("random channel traces never leave faulted without reset", "[safety]") {
  const SafetyConfig cfg;
  auto rng = sim::random_stream(99, "latch");
  for (int trace = 0; trace < 200; ++trace) {
    auto pairs = all_closed();
    set(pairs[0], false, false, SimTime{0});
    auto s = step_safety(SafetyState{}, pairs, false, SimTime{0}, cfg);
    for (int i = 1; i < 200; ++i) {
      const SimTime t{i * 1000};
      auto& p = pairs[static_cast<std::size_t>(rng.uniform_int(0, 2))];
      set(p, rng.uniform01() < 0.7, rng.uniform01() < 0.7, t);
      s = step_safety(s, pairs, false, t, cfg);
      REQUIRE(s.mode == Mode::faulted);
      REQUIRE(invariants_hold(s));
    }
  }
}

TEST_CASE("a stuck single channel is always caught within the window plus one tick", "[safety]") {
  SafetyConfig cfg;
  auto rng = sim::random_stream(5, "stuck");
  for (int k = 0; k < 200; ++k) {
    cfg.discrepancy_window = Duration{rng.uniform_int(1, 2000) * 1000};
    const Duration tick = 1ms;
    auto pairs = all_closed();
    const auto src = static_cast<std::size_t>(rng.uniform_int(0, 2));
    const bool stuck_a = rng.uniform01() < 0.5;
    const SimTime open_at{rng.uniform_int(0, 1000) * 1000};
    // the live channel opens; the stuck one stays closed
    set(pairs[src], !stuck_a, stuck_a, open_at);
    SafetyState s;
    SimTime t = open_at;
    while (s.mode == Mode::run && t <= open_at + cfg.discrepancy_window + 10 * tick) {
      s = step_safety(s, pairs, false, t, cfg);
      if (s.mode == Mode::run) t += tick;
    }
    REQUIRE(s.mode == Mode::faulted);
    REQUIRE(s.fault_cause == FaultCause::channel_discrepancy);
    REQUIRE(t <= open_at + cfg.discrepancy_window + tick);
  }
}

TEST_CASE("MCR gate", "[safety]") {
  const std::vector<ActuatorCommand> cmds{{Actuator::x_drive, CommandKind::move, 800},
                                          {Actuator::vacuum_valve, CommandKind::energize, 0},
                                          {Actuator::light_green, CommandKind::energize, 0},
                                          {Actuator::tester, CommandKind::measure, 3}};
  SECTION("run passes everything unchanged") {
    CHECK(mcr_gate(SafetyState{}, cmds) == cmds);
  }
  SECTION("faulted turns a move into a de-energize") {
    SafetyState f{Mode::faulted, FaultCause::estop, false, true, SimTime{0}};
    const auto out = mcr_gate(f, cmds);
    CHECK(std::find(out.begin(), out.end(), ActuatorCommand{Actuator::x_drive, CommandKind::de_energize, 0}) !=
          out.end());
    for (const auto& c : out) CHECK_FALSE(is_energizing(c));
    CHECK(std::count(out.begin(), out.end(), cmds[2]) == 1);
  }
  SECTION("no drive or solenoid energize under fault, 1000 random sets") {
    SafetyState f{Mode::faulted, FaultCause::door_open, false, true, SimTime{0}};
    auto rng = sim::random_stream(3, "gate");
    for (int i = 0; i < 1000; ++i) {
      std::vector<ActuatorCommand> req;
      const auto n = rng.uniform_int(0, 20);
      for (int j = 0; j < n; ++j)
        req.push_back({static_cast<Actuator>(rng.uniform_int(0, kActuatorCount - 1)),
                       static_cast<CommandKind>(rng.uniform_int(0, 4)), rng.uniform_int(-1000, 1000)});
      const auto out = mcr_gate(f, req);
      for (const auto& c : out) REQUIRE_FALSE(is_energizing(c));
      // non-gated commands survive in order
      std::vector<ActuatorCommand> keep_in, keep_out;
      for (const auto& c : req)
        if (!is_power_gated(c.target)) keep_in.push_back(c);
      for (const auto& c : out)
        if (!is_power_gated(c.target)) keep_out.push_back(c);
      REQUIRE(keep_in == keep_out);
    }
  }
}

TEST_CASE("safety configuration is validated", "[safety]") {
  SafetyConfig cfg;
  cfg.discrepancy_window = Duration::zero();
  CHECK_THROWS_AS(step_safety(SafetyState{}, all_closed(), false, SimTime{0}, cfg), ConfigError);
  std::array<SafetyChannelPair, 2> missing{closed_pair(Source::estop_operator), closed_pair(Source::estop_main)};
  CHECK_THROWS_AS(step_safety(SafetyState{}, missing, false, SimTime{0}, SafetyConfig{}), ConfigError);
}
