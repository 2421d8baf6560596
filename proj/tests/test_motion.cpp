#include <catch_amalgamated.hpp>

#include "acat/motion.hpp"
#include "acat/random.hpp"

using namespace acat;
using namespace acat::motion;

namespace {

StepperAxis homed(StepperAxis a, std::int64_t at) {
  a.homed = true;
  a.position = at;
  return a;
}

}  // namespace

TEST_CASE("move duration is exact on the microsecond clock", "[motion]") {
  const auto p = plan_move(homed(StepperAxis::x_axis(), 0), 800);
  CHECK(p.delta_steps == 800);
  CHECK(p.duration == Duration{2'000'000});

  const auto zero = plan_move(homed(StepperAxis::x_axis(), 123), 123);
  CHECK(zero.delta_steps == 0);
  CHECK(zero.duration == Duration::zero());

  const auto back = plan_move(homed(StepperAxis::y_axis(), 6800), 0);
  CHECK(back.direction == StepDirection::negative);
  CHECK(back.duration == Duration{17'000'000});

  CHECK_THROWS_AS(plan_move(StepperAxis::x_axis(), 10), NotHomed);
  CHECK_THROWS_AS(plan_move(homed(StepperAxis::y_axis(), 0), 6801), LimitError);
  CHECK_THROWS_AS(plan_move(homed(StepperAxis::y_axis(), 0), -1), LimitError);
}

TEST_CASE("pulse schedule matches the integer oracle", "[motion]") {
  // Oracle: pulse k fires at floor(k * 1e6 / rate); count by brute force.
  for (int rate : {400, 333, 1000, 7}) {
    for (std::int64_t e = -3; e < 20'000; e += 37) {
      std::int64_t k = 0;
      while (static_cast<std::int64_t>((k + 1) * 1'000'000 / rate) <= e) ++k;
      REQUIRE(pulses_within(Duration{e}, rate) == k);
    }
  }
}

TEST_CASE("executing a profile lands exactly on target", "[motion]") {
  auto rng = sim::random_stream(11, "moves");
  for (int i = 0; i < 500; ++i) {
    const auto axis = homed(StepperAxis::x_axis(), rng.uniform_int(0, 16000));
    const auto target = rng.uniform_int(0, 16000);
    const auto p = plan_move(axis, target);
    MoveRunner run(p, SimTime{0});
    std::int64_t pos = *axis.position;
    SimTime t{0};
    while (run.active()) {
      t += Duration{rng.uniform_int(1, 5000)};
      pos += run.advance(t);
    }
    REQUIRE(pos == target);
    REQUIRE(run.emitted() == p.pulse_count());
    REQUIRE(t >= run.end());
  }
  SECTION("the final pulse fires exactly at the end time") {
    const auto p = plan_move(homed(StepperAxis::x_axis(), 0), 800);
    MoveRunner run(p, SimTime{5});
    CHECK(run.advance(SimTime{5} + Duration{1'999'999}) == 799);
    CHECK(run.active());
    CHECK(run.advance(SimTime{5} + Duration{2'000'000}) == 1);
    CHECK_FALSE(run.active());
  }
  SECTION("exclusive advance holds back a pulse landing on now") {
    const auto p = plan_move(homed(StepperAxis::x_axis(), 0), 4);
    MoveRunner run(p, SimTime{0});
    CHECK(run.advance(SimTime{2500}, true) == 0);
    CHECK(run.advance(SimTime{2500}) == 1);
  }
}

TEST_CASE("step and millimetre conversions", "[motion]") {
  const auto x = StepperAxis::x_axis();
  CHECK(steps_to_mm(x, 200) == 5.0);
  CHECK(steps_to_mm(x, 0) == 0.0);
  CHECK(steps_to_mm(StepperAxis::y_axis(), 6800) == 1360.0);
  // dimensional check: steps * (mm/rev) / (steps/rev) = mm
  CHECK(steps_to_mm(x, 200) == x.travel_per_rev_mm * 200 / x.steps_per_rev);
  for (std::int64_t s = -20000; s <= 20000; s += 7) {
    REQUIRE(mm_to_steps(x, steps_to_mm(x, s)).steps == s);
    REQUIRE(mm_to_steps(StepperAxis::y_axis(), steps_to_mm(StepperAxis::y_axis(), s)).steps == s);
  }
  const auto c = mm_to_steps(x, 5.01);
  CHECK(c.steps == 200);
  CHECK(c.residual_mm == Catch::Approx(0.01));
}

TEST_CASE("homing against a scripted switch", "[motion]") {
  const auto x = StepperAxis::x_axis();
  SECTION("switch after 1200 steps, back-off 50") {
    const auto r = home(x, [](std::int64_t travel) {
      return travel >= 1200 ? signals::Logic::asserted : signals::Logic::deasserted;
    });
    CHECK(r.axis.homed);
    CHECK(r.axis.position == 0);
    CHECK(r.travel_toward_switch == 1200 - 50);
    CHECK(r.pulses == 1250);
    CHECK(r.elapsed == Duration{1250 * 2500});
  }
  SECTION("already on the switch backs off straight away") {
    const auto r = home(x, [](std::int64_t travel) {
      return travel >= 0 ? signals::Logic::asserted : signals::Logic::deasserted;
    });
    CHECK(r.axis.homed);
    CHECK(r.axis.position == 0);
    CHECK(r.pulses == 50);
    CHECK(r.travel_toward_switch == -50);
  }
  SECTION("homing twice leaves position 0 both times") {
    const auto sw = [](std::int64_t t) { return t >= 300 ? signals::Logic::asserted : signals::Logic::deasserted; };
    const auto first = home(x, sw);
    const auto second = home(first.axis, sw);
    CHECK(first.axis.position == 0);
    CHECK(second.axis.position == 0);
  }
  SECTION("a fault mid-home leaves the axis unhomed with no further pulses") {
    const auto r = home(
        x, [](std::int64_t t) { return t >= 1200 ? signals::Logic::asserted : signals::Logic::deasserted; }, true, 50,
        600);
    CHECK_FALSE(r.axis.homed);
    CHECK_FALSE(r.axis.position);
    CHECK(r.pulses == 600);
  }
  SECTION("a dead switch times out") {
    CHECK_THROWS_AS(home(x, [](std::int64_t) { return signals::Logic::deasserted; }), HomingTimeout);
  }
  SECTION("no power, no homing") {
    CHECK_THROWS_AS(home(x, [](std::int64_t) { return signals::Logic::asserted; }, false), StateError);
  }
}

TEST_CASE("pneumatic Z stroke", "[motion]") {
  PneumaticZ z;
  CHECK(z.confirmed() == ZConfirmed::up);
  CHECK_FALSE(z.command(ZPosition::up, SimTime{0}));  // already there: no-op
  CHECK_FALSE(z.busy());

  REQUIRE(z.command(ZPosition::down, SimTime{1000}));
  CHECK(z.confirmed() == ZConfirmed::in_transit);
  CHECK(z.advance(SimTime{300'999}) == PneumaticZ::Event::none);
  CHECK(z.advance(SimTime{301'000}) == PneumaticZ::Event::arrived);
  CHECK(z.confirmed() == ZConfirmed::down);
  CHECK(z.sensor_down().last_change == SimTime{301'000});

  // re-commanding while already in transit does not restart the stroke
  REQUIRE(z.command(ZPosition::up, SimTime{400'000}));
  CHECK_FALSE(z.command(ZPosition::up, SimTime{500'000}));
  CHECK(z.advance(SimTime{700'000}) == PneumaticZ::Event::arrived);

  SECTION("a suppressed end sensor turns into an actuator fault") {
    PneumaticZ s;
    s.suppress_down_sensor(true);
    s.command(ZPosition::down, SimTime{0});
    CHECK(s.advance(SimTime{300'000}) == PneumaticZ::Event::none);
    CHECK(s.physical() == ZPosition::down);
    CHECK(s.advance(SimTime{399'999}) == PneumaticZ::Event::none);
    CHECK(s.advance(SimTime{400'000}) == PneumaticZ::Event::fault);
    CHECK(s.advance(SimTime{500'000}) == PneumaticZ::Event::none);
  }
}
