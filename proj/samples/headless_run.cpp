// Runs the default cell scenario with a mid-run E-stop and prints where the
// cycle stopped. Build target: sample_headless_run.

#include <iostream>

#include "acat/kernel.hpp"

int main() {
  acat::sim::Scenario scenario;  // 5x5 tray, seed 1
  acat::sim::Injection estop;
  estop.time = acat::SimTime{std::chrono::seconds(120)};
  estop.kind = acat::sim::InjectionKind::estop_press;
  estop.source = acat::safety::Source::estop_operator;
  scenario.injections.push_back(estop);

  acat::sim::Simulation sim(scenario);
  const auto result = sim.run();
  std::cout << "outcome " << to_string(result.outcome) << " at t=" << acat::to_seconds(result.end) << " s, "
            << result.measurements << " measurements, " << sim.log().size() << " events\n";
  for (const auto& m : sim.plant().measurements())
    std::cout << "  part " << m.part_id << " (" << m.column << "," << m.row << ") theta "
              << acat::goniometry::round3(m.theta_measured_deg) << "\n";
  return result.outcome == acat::sim::RunOutcome::faulted ? 0 : 1;
}
