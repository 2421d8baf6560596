#pragma once

#include <chrono>
#include <cstdint>

namespace acat {

// Simulated time. Every timestamp in the library is microseconds since run
// start on the virtual clock; nothing here reads the wall clock.
using SimTime = std::chrono::microseconds;
using Duration = std::chrono::microseconds;

using namespace std::chrono_literals;

constexpr double to_seconds(Duration d) { return static_cast<double>(d.count()) * 1e-6; }

constexpr Duration from_seconds(double s) {
  return Duration{static_cast<std::int64_t>(s * 1e6 + (s >= 0 ? 0.5 : -0.5))};
}

}  // namespace acat
