#include <catch_amalgamated.hpp>

#include <map>

#include "acat/kernel.hpp"

using namespace acat;
using namespace acat::seq;

namespace {

struct Span {
  std::string phase;
  SimTime begin;
  SimTime end;
};

std::vector<Span> phase_spans(const sim::EventLog& log) {
  std::vector<Span> out;
  for (const auto& r : log.records()) {
    if (r.kind != "phase") continue;
    if (!out.empty()) out.back().end = r.time;
    out.push_back({r.payload["to"].get<std::string>(), r.time, r.time});
  }
  return out;
}

sim::Injection at(std::int64_t t_us, sim::InjectionKind kind) {
  sim::Injection i;
  i.time = SimTime{t_us};
  i.kind = kind;
  return i;
}

}  // namespace

TEST_CASE("tray layout", "[sequencer]") {
  const TrayLayout layout;
  const auto o = part_position(layout, 0, 0);
  CHECK(o.x == layout.origin_x_mm);
  CHECK(o.y == layout.origin_y_mm);
  const auto p = part_position(layout, 1, 0);
  CHECK(p.x == layout.origin_x_mm + 60.0);
  CHECK(p.y == layout.origin_y_mm);
  CHECK_THROWS_AS(part_position(layout, 5, 0), IndexError);
  CHECK_THROWS_AS(part_position(layout, 0, -1), IndexError);

  const motion::CellGeometry geo;
  for (int c = 0; c < layout.columns; ++c)
    for (int r = 0; r < layout.rows; ++r) {
      const auto q = part_position(layout, c, r);
      CHECK(q.y >= 0.0);
      CHECK(q.y <= geo.y_travel_mm);
      CHECK(slot_of(layout, part_id(layout, c, r)) == std::pair{c, r});
    }
  CHECK(part_id(layout, 0, 1) == 2);  // column-major
  CHECK(part_id(layout, 1, 0) == 6);
}

TEST_CASE("initialize", "[sequencer]") {
  CycleState dirty;
  dirty.phase = Phase::measuring;
  dirty.column_index = 3;
  dirty.row_index = 2;
  dirty.parts_done = 17;
  dirty.gripper_engaged = true;
  const auto once = initialize(dirty);
  CHECK(once.column_index == 0);
  CHECK(once.row_index == 0);
  CHECK(once.parts_done == 0);
  CHECK_FALSE(once.gripper_engaged);
  CHECK(initialize(once) == once);
}

TEST_CASE("sequencer reacts to start and to safety faults", "[sequencer]") {
  const sim::Scenario scn;
  Sequencer s(scn.sequencer_config());
  sim::EventLog log;
  std::vector<ActuatorCommand> out;
  DeviceFeedback fb;
  fb.reservoir_ml = 100.0;
  const safety::SafetyState run;

  s.step(run, OperatorInput::none, fb, SimTime{0}, out, log);
  CHECK(s.state().phase == Phase::idle);
  s.step(run, OperatorInput::start, fb, SimTime{1000}, out, log);
  CHECK(s.state().phase == Phase::initializing);

  const safety::SafetyState fault{safety::Mode::faulted, safety::FaultCause::estop, false, true, SimTime{2000}};
  s.step(fault, OperatorInput::start, fb, SimTime{2000}, out, log);
  CHECK(s.state().phase == Phase::faulted);
  for (const auto& c : out) CHECK_FALSE(is_energizing(c));
  for (auto a : kGatedActuators)
    CHECK(std::count(out.begin(), out.end(), ActuatorCommand{a, CommandKind::de_energize, 0}) == 1);

  s.step(fault, OperatorInput::start, fb, SimTime{3000}, out, log);
  CHECK(s.state().phase == Phase::faulted);
  CHECK(out.empty());
}

TEST_CASE("healthy run covers the tray column by column", "[sequencer]") {
  sim::Simulation sim{sim::Scenario{}};
  const auto r = sim.run();
  REQUIRE(r.outcome == sim::RunOutcome::complete);
  const auto& ms = sim.plant().measurements();
  REQUIRE(ms.size() == 25);
  for (std::size_t i = 0; i < ms.size(); ++i) {
    CHECK(ms[i].part_id == static_cast<int>(i) + 1);
    CHECK(ms[i].column == static_cast<int>(i) / 5);
    CHECK(ms[i].row == static_cast<int>(i) % 5);
  }
  CHECK(sim.cycle().parts_done == 25);
  CHECK(sim.cycle().phase == Phase::complete);
  CHECK(sim.plant().parts().unloaded == 25);

  // Per part: placed at the station, then a droplet, then the measurement,
  // then the unload.
  std::map<int, std::vector<std::string>> steps;
  int current = 0;
  for (const auto& e : sim.log().records()) {
    if (e.kind == "release" && e.payload["spot"] == "test_station") {
      current = e.payload["part_id"];
      steps[current].push_back("placed");
    } else if (e.kind == "droplet") {
      steps[e.payload["part_id"].get<int>()].push_back("droplet");
    } else if (e.kind == "measurement") {
      steps[e.payload["part_id"].get<int>()].push_back("measured");
    } else if (e.kind == "release" && e.payload["spot"] == "unload") {
      steps[e.payload["part_id"].get<int>()].push_back("unloaded");
    }
  }
  const std::vector<std::string> expected{"placed", "droplet", "measured", "unloaded"};
  REQUIRE(steps.size() == 25);
  for (const auto& [id, seq] : steps) {
    INFO("part " << id);
    CHECK(seq == expected);
  }
}

TEST_CASE("stop reaches idle within the longest phase plus two ticks", "[sequencer]") {
  sim::Simulation ref{sim::Scenario{}};
  ref.run();
  const auto spans = phase_spans(ref.log());
  Duration longest{0};
  for (const auto& s : spans) longest = std::max(longest, s.end - s.begin);
  const Duration bound = longest + 2 * ref.scenario().tick;
  const auto end = ref.now().count();

  auto rng = sim::random_stream(17, "stop-liveness");
  for (int i = 0; i < 60; ++i) {
    sim::Scenario scn;
    const auto t = rng.uniform_int(0, end - 1000) / 1000 * 1000;
    scn.injections.push_back(at(t, sim::InjectionKind::stop_press));
    sim::Simulation s(scn);
    const auto r = s.run();
    INFO("stop at " << t << " us");
    if (r.phase == Phase::complete) continue;  // stop landed after the last slot
    REQUIRE(r.outcome == sim::RunOutcome::stopped);
    SimTime idle_at{-1};
    for (const auto& e : s.log().records())
      if (e.kind == "phase" && e.payload["to"] == "idle" && e.time >= SimTime{t}) idle_at = e.time;
    REQUIRE(idle_at >= SimTime{t});
    REQUIRE(idle_at - SimTime{t} <= bound);
    // parked: axes home, Z up, gripper released
    REQUIRE_FALSE(s.plant().gripper().gripped);
    REQUIRE(s.plant().z().confirmed() == motion::ZConfirmed::up);
    for (auto a : {motion::AxisName::x, motion::AxisName::y, motion::AxisName::dispenser})
      REQUIRE(s.plant().axis(a).axis.position.value_or(-1) == 0);
  }
}

TEST_CASE("restart after a stop leaves nothing in the gripper", "[sequencer]") {
  sim::Scenario scn;
  scn.injections.push_back(at(200'000'000, sim::InjectionKind::stop_press));
  scn.injections.push_back(at(230'000'000, sim::InjectionKind::start_press));
  sim::Simulation s(scn);
  while (s.now() < SimTime{230'002'000}) s.step();
  CHECK(s.cycle().phase != Phase::idle);
  CHECK(s.cycle().parts_done == 0);
  CHECK_FALSE(s.cycle().gripper_engaged);
  CHECK_FALSE(s.plant().gripper().gripped);
}

TEST_CASE("halt policy stops the batch on a device fault", "[sequencer]") {
  sim::Scenario scn;
  scn.policy = FaultPolicy::halt;
  auto miss = at(0, sim::InjectionKind::part_missing);
  miss.column = 0;
  miss.row = 1;
  scn.injections.push_back(miss);
  sim::Simulation s(scn);
  const auto r = s.run();
  CHECK(r.outcome == sim::RunOutcome::stopped);
  CHECK(r.measurements == 1);
  CHECK(s.log().count("halt") == 1);
}
