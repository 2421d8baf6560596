#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "acat/kernel.hpp"

using namespace acat;
using namespace acat::sim;

namespace {

Injection at(std::int64_t t_us, InjectionKind kind) {
  Injection i;
  i.time = SimTime{t_us};
  i.kind = kind;
  return i;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string log_of(const Scenario& s) {
  EventLog log;
  run(s, &log);
  return log.to_jsonl();
}

const std::filesystem::path kRoot{ACAT_SOURCE_DIR};

}  // namespace

TEST_CASE("random streams match the frozen vectors", "[simkernel]") {
  // Published splitmix64 vector for state 0.
  std::uint64_t sm = 0;
  CHECK(splitmix64(sm) == 0xe220a8397b1dcdafULL);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("droplet") == 0x877bc4c5fd7e7b91ULL);

  // Produced by an independent Python implementation of the same recipe.
  auto a = random_stream(1, "droplet");
  CHECK(a.next_u64() == 0x8a57bd34bc5e0317ULL);
  CHECK(a.next_u64() == 0x0a02b27232819339ULL);
  CHECK(a.next_u64() == 0xa49cd388a2b08d6bULL);
  CHECK(a.next_u64() == 0x18856c72e0afcf69ULL);
  auto b = random_stream(0, "");
  CHECK(b.next_u64() == 0x21382ef092ed7068ULL);
  CHECK(b.next_u64() == 0x5b54c052757adf62ULL);
  auto c = random_stream(42, "measure");
  CHECK(c.next_u64() == 0x827c7464952150f5ULL);
  CHECK(c.next_u64() == 0x6b99431e25431176ULL);
  auto u = random_stream(1, "profile");
  CHECK(u.uniform01() == 0.896063352810643);
  CHECK(u.uniform01() == 0.27980463965283875);
}

TEST_CASE("random streams: determinism and independence", "[simkernel]") {
  auto a1 = random_stream(5, "droplet"), a2 = random_stream(5, "droplet");
  for (int i = 0; i < 1000; ++i) REQUIRE(a1.next_u64() == a2.next_u64());

  auto x = random_stream(5, "droplet"), y = random_stream(5, "measure");
  constexpr int n = 10000;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double p = x.uniform01(), q = y.uniform01();
    sx += p;
    sy += q;
    sxx += p * p;
    syy += q * q;
    sxy += p * q;
  }
  const double cov = sxy / n - (sx / n) * (sy / n);
  const double corr = cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
  CHECK(std::abs(corr) < 0.05);

  auto z = random_stream(8, "normals");
  double m = 0, v = 0;
  for (int i = 0; i < n; ++i) {
    const double d = z.normal();
    m += d;
    v += d * d;
  }
  CHECK(std::abs(m / n) < 0.05);
  CHECK(std::abs(v / n - 1.0) < 0.05);
  auto t = random_stream(8, "trunc");
  for (int i = 0; i < 1000; ++i) REQUIRE(std::abs(t.normal_truncated(2.0)) <= 2.0);
  for (int i = 0; i < 1000; ++i) {
    const auto k = t.uniform_int(-3, 3);
    REQUIRE((k >= -3 && k <= 3));
  }
}

TEST_CASE("default scenario completes with 25 measurements", "[simkernel]") {
  Simulation sim{Scenario{}};
  const auto r = sim.run();
  CHECK(r.outcome == RunOutcome::complete);
  CHECK(r.phase == seq::Phase::complete);
  CHECK(r.measurements == 25);
  CHECK(sim.log().count("run_end") == 1);
  CHECK(sim.log().records().back().kind == "run_end");
  // terminal is stable: more ticks change nothing but the clock
  const auto n = sim.log().size();
  for (int i = 0; i < 100; ++i) sim.step();
  CHECK(sim.log().size() == n);
  CHECK(sim.finish().outcome == RunOutcome::complete);
  CHECK(sim.log().size() == n);
}

TEST_CASE("log is deterministic, ordered and well formed", "[simkernel]") {
  Scenario s;
  s.seed = 1234;
  const auto a = log_of(s), b = log_of(s);
  CHECK(a == b);
  Scenario other = s;
  other.seed = 1235;
  CHECK(log_of(other) != a);

  std::istringstream lines(a);
  std::string line;
  std::int64_t prev_t = -1, expect_seq = 0;
  while (std::getline(lines, line)) {
    const auto j = Json::parse(line);
    REQUIRE(j.size() == 5);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    REQUIRE(keys == std::vector<std::string>{"seq", "t_us", "source", "kind", "payload"});
    REQUIRE(j["seq"].get<std::int64_t>() == expect_seq++);
    REQUIRE(j["t_us"].get<std::int64_t>() >= prev_t);
    prev_t = j["t_us"];
  }
}

TEST_CASE("E-stop at t=0 keeps the cell still", "[simkernel]") {
  Scenario s;
  s.injections.push_back(at(0, InjectionKind::estop_press));
  Simulation sim(s);
  const auto r = sim.run();
  CHECK(r.outcome == RunOutcome::faulted);
  for (const auto& e : sim.log().records()) {
    REQUIRE(e.source != "motion");
    REQUIRE(e.source != "pneumatics");
    REQUIRE(e.source != "gripper");
    REQUIRE(e.source != "fluidics");
    if (e.kind == "phase") REQUIRE((e.payload["to"] == "faulted" || e.payload["to"] == "initializing" ||
                                    e.payload["to"] == "idle"));
  }
  CHECK(sim.plant().total_pulses() == 0);
}

TEST_CASE("door injections", "[simkernel]") {
  SECTION("door_open opens both door channels") {
    Scenario s;
    s.auto_start = false;
    s.injections.push_back(at(5000, InjectionKind::door_open));
    Simulation sim(s);
    while (sim.now() < SimTime{5000}) sim.step();
    const auto& pair = sim.channel_pair(safety::Source::door_interlock);
    CHECK(pair.both_open());
    CHECK(sim.safety().fault_cause == safety::FaultCause::door_open);
  }
  SECTION("a stuck-closed channel is caught as a discrepancy when the door opens") {
    Scenario s;
    auto stuck = at(50'000'000, InjectionKind::channel_stuck);
    stuck.source = safety::Source::door_interlock;
    stuck.channel = 'a';
    s.injections.push_back(stuck);
    s.injections.push_back(at(50'000'000, InjectionKind::door_open));
    Simulation sim(s);
    sim.run();
    CHECK(sim.safety().fault_cause == safety::FaultCause::channel_discrepancy);
    CHECK(*sim.safety().faulted_at == SimTime{50'000'000} + s.safety.discrepancy_window + s.tick);
  }
  SECTION("a stuck-open channel blocks reset after the door closes") {
    Scenario s;
    s.auto_start = false;
    s.injections.push_back(at(1000, InjectionKind::door_open));
    auto stuck = at(2000, InjectionKind::channel_stuck);
    stuck.source = safety::Source::door_interlock;
    stuck.channel = 'a';
    s.injections.push_back(stuck);
    s.injections.push_back(at(3000, InjectionKind::door_close));
    s.injections.push_back(at(4000, InjectionKind::reset_press));
    Simulation sim(s);
    while (sim.now() < SimTime{10'000}) sim.step();
    const auto& pair = sim.channel_pair(safety::Source::door_interlock);
    CHECK_FALSE(pair.a_closed());
    CHECK(pair.b_closed());
    CHECK(sim.safety().mode == safety::Mode::faulted);
  }
}

TEST_CASE("recovery after E-stop needs release, reset and start", "[simkernel]") {
  Scenario s;
  s.injections.push_back(at(100'000'000, InjectionKind::estop_press));
  s.injections.push_back(at(101'000'000, InjectionKind::reset_press));  // still pressed: refused
  s.injections.push_back(at(102'000'000, InjectionKind::estop_release));
  s.injections.push_back(at(103'000'000, InjectionKind::start_press));  // still latched: ignored
  s.injections.push_back(at(104'000'000, InjectionKind::reset_press));
  s.injections.push_back(at(105'000'000, InjectionKind::start_press));
  Simulation sim(s);
  while (sim.now() < SimTime{104'500'000}) {
    sim.step();
    if (sim.now() > SimTime{100'000'000}) REQUIRE(sim.cycle().phase != seq::Phase::homing);
  }
  CHECK(sim.safety().mode == safety::Mode::run);
  CHECK(sim.cycle().phase == seq::Phase::idle);
  while (sim.now() < SimTime{106'000'000}) sim.step();
  CHECK(seq::is_active(sim.cycle().phase));
  const auto r = sim.run();
  CHECK(r.outcome == RunOutcome::complete);
}

TEST_CASE("restart after an interruption accounts for every part", "[simkernel]") {
  auto rng = random_stream(17, "interrupt");
  for (int run = 0; run < 40; ++run) {
    Scenario s;
    const std::int64_t t = rng.uniform_int(10'000'000, 700'000'000);
    if (run % 2 == 0) {
      s.injections.push_back(at(t, InjectionKind::estop_press));
      s.injections.push_back(at(t + 1'000'000, InjectionKind::estop_release));
      s.injections.push_back(at(t + 2'000'000, InjectionKind::reset_press));
    } else {
      s.injections.push_back(at(t, InjectionKind::stop_press));
    }
    s.injections.push_back(at(t + 60'000'000, InjectionKind::start_press));
    Simulation sim(s);
    const auto r = sim.run();
    INFO("run " << run << " interrupted at " << t);
    REQUIRE(r.outcome == RunOutcome::complete);
    std::set<int> measured;
    int elsewhere = 0, cleared = 0;
    for (const auto& e : sim.log().records()) {
      if (e.kind == "measurement") CHECK(measured.insert(e.payload["part_id"].get<int>()).second);
      if (e.kind == "device_fault") CHECK(e.payload["fault"] == "PickMiss");
      if (e.kind == "release" && e.payload["spot"] == "elsewhere") ++elsewhere;
      if (e.kind == "station_clear") ++cleared;
    }
    CHECK(elsewhere <= 1);
    CHECK(cleared <= 1);
    const auto& parts = sim.plant().parts();
    CHECK_FALSE(parts.at_station);
    CHECK_FALSE(parts.held);
    int in_tray = 0;
    for (auto p : parts.in_tray) in_tray += p != 0;
    CHECK(in_tray == 0);
    CHECK(parts.dropped == elsewhere);
    CHECK(parts.unloaded + elsewhere == 25);
    // Only a part dropped or cleared off the station can miss its measurement.
    CHECK(static_cast<int>(measured.size()) >= 25 - elsewhere - cleared);
  }
}

TEST_CASE("part_missing is skipped and logged", "[simkernel]") {
  const auto s = load_scenario(kRoot / "data/scenarios/part_missing.json");
  Simulation sim(s);
  const auto r = sim.run();
  CHECK(r.outcome == RunOutcome::complete);
  CHECK(r.measurements == 24);
  CHECK(sim.cycle().parts_skipped == 1);
  int faults = 0, skipped = 0;
  for (const auto& e : sim.log().records()) {
    if (e.kind == "device_fault") {
      ++faults;
      CHECK(e.payload["fault"] == "PickMiss");
    }
    if (e.kind == "part_skipped") {
      ++skipped;
      CHECK(e.payload["part_id"] == 18);
      CHECK(e.payload["column"] == 3);
      CHECK(e.payload["row"] == 2);
    }
  }
  CHECK(faults == 1);
  CHECK(skipped == 1);
  for (const auto& m : sim.plant().measurements()) CHECK(m.part_id != 18);
}

TEST_CASE("pump_dry turns every later dispense into a skip", "[simkernel]") {
  Scenario s;
  s.injections.push_back(at(300'000'000, InjectionKind::pump_dry));
  Simulation sim(s);
  const auto r = sim.run();
  CHECK(r.outcome == RunOutcome::complete);
  CHECK(r.measurements < 25);
  CHECK(sim.cycle().parts_skipped == 25 - r.measurements);
  SimTime last_droplet{0};
  for (const auto& e : sim.log().records())
    if (e.kind == "droplet") last_droplet = e.time;
  CHECK(last_droplet < SimTime{300'000'000});
  CHECK(sim.log().count("part_skipped") == static_cast<std::size_t>(25 - r.measurements));
}

TEST_CASE("suppressed Z sensor reports an actuator fault", "[simkernel]") {
  Scenario s;
  auto sup = at(0, InjectionKind::sensor_suppress);
  sup.sensor = "z_down";
  s.injections.push_back(sup);
  Simulation sim(s);
  sim.run();
  bool seen = false;
  for (const auto& e : sim.log().records())
    if (e.kind == "device_fault" && e.payload["fault"] == "ActuatorFault") seen = true;
  CHECK(seen);
}

TEST_CASE("suppressed home switch times out homing", "[simkernel]") {
  Scenario s;
  auto sup = at(0, InjectionKind::sensor_suppress);
  sup.sensor = "dispenser_home";
  s.injections.push_back(sup);
  Simulation sim(s);
  const auto r = sim.run();
  CHECK(r.outcome == RunOutcome::stopped);
  CHECK(r.measurements == 0);
  CHECK(sim.log().count("halt") == 1);
}

TEST_CASE("reservoir bookkeeping balances", "[simkernel]") {
  Scenario s;
  s.reservoir.level_ml = 2.0;  // below the prime threshold: the cycle tops up first
  Simulation sim(s);
  const auto r = sim.run();
  CHECK(r.outcome == RunOutcome::complete);
  CHECK(sim.plant().pumped_ml() > 0);
  const double delta = sim.plant().reservoir().level_ml - 2.0;
  CHECK(std::abs(delta - (sim.plant().pumped_ml() - sim.plant().dispensed_ml())) < 1e-9);
  CHECK(std::abs(sim.plant().dispensed_ml() - 0.25) < 1e-9);
}

TEST_CASE("scenario files", "[simkernel]") {
  const auto file = load_scenario(kRoot / "data/scenarios/default.json");
  CHECK(log_of(file) == log_of(Scenario{}));
  for (const auto& entry : std::filesystem::directory_iterator(kRoot / "data/scenarios")) {
    INFO(entry.path());
    CHECK_NOTHROW(load_scenario(entry.path()));
  }

  const auto err = [](std::string_view text) -> std::string {
    try {
      parse_scenario(text);
    } catch (const ScenarioError& e) {
      return e.what();
    }
    return "";
  };
  CHECK(err(R"({"v":1,"sede":3})").find("/sede") != std::string::npos);
  CHECK(err(R"({"v":2})").find("/v") != std::string::npos);
  CHECK(err(R"({"tick_us":0})") != "");
  CHECK(err(R"({"layout":{"columns":0}})") != "");
  CHECK(err(R"({"layout":{"rows":40}})") != "");  // off the Y travel
  CHECK(err(R"({"injections":[{"t_us":5,"kind":"estop_press"},{"t_us":4,"kind":"door_open"}]})") != "");
  CHECK(err(R"({"injections":[{"t_us":5,"kind":"meteor"}]})").find("/injections/0/kind") != std::string::npos);
  CHECK(err(R"({"injections":[{"t_us":5,"kind":"part_missing","params":{"column":9,"row":0}}]})") != "");
  CHECK(err(R"({"injections":[{"t_us":5,"kind":"sensor_suppress","params":{"sensor":"nose"}}]})") != "");
  CHECK(err(R"({"fluidics":{"reservoir_level_ml":300}})") != "");
  CHECK(err("{not json") != "");
  CHECK(err(R"({"measurement":{"theta_overrides":[{"column":0,"row":0,"theta_deg":190}]}})") != "");
  CHECK_THROWS_AS(load_scenario(kRoot / "no/such/file.json"), IOError);
}

TEST_CASE("no wall-clock reads outside the gateway", "[simkernel]") {
  const std::regex wall(R"(steady_clock|system_clock|high_resolution_clock|\btime\(|gettimeofday|clock_gettime)");
  for (const auto& entry : std::filesystem::directory_iterator(kRoot / "include/acat")) {
    if (!entry.is_regular_file()) continue;
    INFO(entry.path());
    CHECK_FALSE(std::regex_search(slurp(entry.path()), wall));
  }
}
