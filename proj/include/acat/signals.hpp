#pragma once

// Logic-level I/O model: power rails, pin labels (I:<block>/<gpio>),
// polarity of sinking inputs and sourcing outputs, edges and debounce.

#include <charconv>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "acat/errors.hpp"
#include "acat/time.hpp"

namespace acat::signals {

enum class RailVoltage { ac120, dc24, dc12, dc5, dc3v3 };

inline double nominal_volts(RailVoltage v) {
  switch (v) {
    case RailVoltage::ac120: return 120.0;
    case RailVoltage::dc24: return 24.0;
    case RailVoltage::dc12: return 12.0;
    case RailVoltage::dc5: return 5.0;
    case RailVoltage::dc3v3: return 3.3;
  }
  return 0.0;
}

inline bool is_ac(RailVoltage v) { return v == RailVoltage::ac120; }

struct PowerRail {
  std::string name;
  RailVoltage nominal_voltage = RailVoltage::dc24;
  bool energized = true;
};

enum class Direction { input, output };
enum class ElectricalMode { sinking_npn, sourcing_pnp };
enum class Level { low, high };
enum class Logic { deasserted, asserted };
enum class Edge { none, rising, falling };

struct PinAssignment {
  Direction direction = Direction::input;
  int block = 1;
  int gpio = 0;

  // Inputs are always NPN sinking, outputs always PNP sourcing, so the mode is
  // a function of direction rather than a free field.
  ElectricalMode electrical_mode() const {
    return direction == Direction::input ? ElectricalMode::sinking_npn : ElectricalMode::sourcing_pnp;
  }

  friend auto operator<=>(const PinAssignment&, const PinAssignment&) = default;
};

// Sinking inputs are active-low (the sensor pulls the line to common);
// sourcing outputs are active-high.
inline Level physical_for(ElectricalMode mode, Logic logical) {
  const bool asserted = logical == Logic::asserted;
  if (mode == ElectricalMode::sinking_npn) return asserted ? Level::low : Level::high;
  return asserted ? Level::high : Level::low;
}

inline Logic logical_for(ElectricalMode mode, Level physical) {
  const bool low = physical == Level::low;
  if (mode == ElectricalMode::sinking_npn) return low ? Logic::asserted : Logic::deasserted;
  return low ? Logic::deasserted : Logic::asserted;
}

struct SignalState {
  Level physical_level = Level::high;
  Logic logical = Logic::deasserted;
  SimTime last_change{0};

  static SignalState from_logical(ElectricalMode mode, Logic logical, SimTime t) {
    return {physical_for(mode, logical), logical, t};
  }
  static SignalState from_physical(ElectricalMode mode, Level level, SimTime t) {
    return {level, logical_for(mode, level), t};
  }

  bool asserted() const { return logical == Logic::asserted; }

  friend bool operator==(const SignalState&, const SignalState&) = default;
};

// Returns `current` unchanged when the logical level matches, otherwise the
// new level stamped with `now`.
inline SignalState update_signal(const SignalState& current, ElectricalMode mode, Logic logical,
                                 SimTime now) {
  if (current.logical == logical) return current;
  return SignalState::from_logical(mode, logical, now);
}

inline std::string format_label(const PinAssignment& pin) {
  std::string out;
  out += pin.direction == Direction::input ? 'I' : 'O';
  out += ':';
  out += std::to_string(pin.block);
  out += '/';
  out += std::to_string(pin.gpio);
  return out;
}

namespace detail {

inline std::optional<int> parse_decimal(std::string_view s) {
  if (s.empty() || s.size() > 9) return std::nullopt;
  for (char c : s)
    if (c < '0' || c > '9') return std::nullopt;
  int value = 0;
  std::from_chars(s.data(), s.data() + s.size(), value);
  return value;
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline PinAssignment parse_label(std::string_view text) {
  if (text.empty()) throw ParseError("empty pin label", "");
  PinAssignment pin;
  const char prefix = text.front();
  if (prefix == 'I')
    pin.direction = Direction::input;
  else if (prefix == 'O')
    pin.direction = Direction::output;
  else
    throw ParseError("pin label must start with I or O", std::string(1, prefix));

  if (text.size() < 2 || text[1] != ':')
    throw ParseError("expected ':' after prefix", std::string(text.substr(1, 1)));

  const auto rest = text.substr(2);
  const auto slash = rest.find('/');
  if (slash == std::string_view::npos) throw ParseError("missing '/' between block and gpio", std::string(rest));

  const auto block_text = rest.substr(0, slash);
  const auto gpio_text = rest.substr(slash + 1);
  const auto block = detail::parse_decimal(block_text);
  if (!block || *block < 1) throw ParseError("block must be a positive integer", std::string(block_text));
  const auto gpio = detail::parse_decimal(gpio_text);
  if (!gpio) throw ParseError("gpio must be a non-negative integer", std::string(gpio_text));

  pin.block = *block;
  pin.gpio = *gpio;
  return pin;
}

inline Edge detect_edge(const SignalState& previous, const SignalState& current) {
  if (previous.logical == current.logical) return Edge::none;
  return current.logical == Logic::asserted ? Edge::rising : Edge::falling;
}

struct RawSample {
  SimTime time{0};
  Logic logical = Logic::deasserted;
};

// Streaming debouncer. The stable output follows the raw input only after
// the raw level has held for at least `window`.
class Debouncer {
 public:
  Debouncer(ElectricalMode mode, Logic initial, Duration window = 5ms, SimTime start = SimTime{0})
      : mode_(mode), window_(window), stable_(SignalState::from_logical(mode, initial, start)),
        raw_(initial), raw_since_(start) {
    if (window_ < Duration::zero()) throw InputError("debounce window must be non-negative");
  }

  // Feeds a sample and returns the stable state once it changes. Samples must
  // be time-ordered; the raw level is assumed to hold between samples.
  std::optional<SignalState> push(const RawSample& sample) {
    if (sample.time < last_time_) throw InputError("debounce samples must be time-ordered");
    std::optional<SignalState> changed = settle(sample.time);
    last_time_ = sample.time;
    if (sample.logical != raw_) {
      raw_ = sample.logical;
      raw_since_ = sample.time;
    }
    if (auto again = settle(sample.time)) changed = again;
    return changed;
  }

  // Advances time without a new sample.
  std::optional<SignalState> advance(SimTime now) {
    if (now < last_time_) throw InputError("debounce time must be monotone");
    last_time_ = now;
    return settle(now);
  }

  // Time at which the current raw level would become stable, if it differs
  // from the stable output.
  std::optional<SimTime> pending_until() const {
    if (raw_ == stable_.logical) return std::nullopt;
    return raw_since_ + window_;
  }

  const SignalState& stable() const { return stable_; }

 private:
  std::optional<SignalState> settle(SimTime now) {
    if (raw_ != stable_.logical && now - raw_since_ >= window_) {
      stable_ = SignalState::from_logical(mode_, raw_, raw_since_ + window_);
      return stable_;
    }
    return std::nullopt;
  }

  ElectricalMode mode_;
  Duration window_;
  SignalState stable_;
  Logic raw_;
  SimTime raw_since_;
  SimTime last_time_{std::numeric_limits<SimTime::rep>::min()};
};

// Batch debounce. The output starts with the stable state at the first
// sample, followed by one entry per stable transition. The final raw level is
// taken to persist, so a trailing transition is reported at its settle time.
inline std::vector<SignalState> debounce(std::span<const RawSample> raw_samples, ElectricalMode mode,
                                         Duration window = 5ms) {
  std::vector<SignalState> out;
  if (raw_samples.empty()) return out;
  for (std::size_t i = 1; i < raw_samples.size(); ++i)
    if (raw_samples[i].time < raw_samples[i - 1].time)
      throw InputError("debounce samples must be time-ordered");

  Debouncer d(mode, raw_samples.front().logical, window, raw_samples.front().time);
  out.push_back(d.stable());
  for (const auto& s : raw_samples.subspan(1))
    if (auto c = d.push(s)) out.push_back(*c);
  if (auto p = d.pending_until())
    if (auto c = d.advance(*p)) out.push_back(*c);
  return out;
}

// Output referenced to a rail. When the rail drops, the output reads
// deasserted regardless of what the processor commands.
struct OutputChannel {
  PinAssignment pin{Direction::output, 1, 0};
  std::string rail;
  Logic commanded = Logic::deasserted;
  SignalState state{};
};

inline void apply_rail(std::span<OutputChannel> outputs, const PowerRail& rail, SimTime now) {
  for (auto& out : outputs) {
    if (out.rail != rail.name) continue;
    const Logic effective = rail.energized ? out.commanded : Logic::deasserted;
    out.state = update_signal(out.state, out.pin.electrical_mode(), effective, now);
  }
}

struct PinEntry {
  PinAssignment pin;
  std::string name;
  std::string description;
};

// Cell-wide pin registry. Built once, then read-only.
class PinRegistry {
 public:
  void insert(PinEntry entry) {
    const auto key = std::tuple{entry.pin.direction, entry.pin.block, entry.pin.gpio};
    if (by_pin_.contains(key))
      throw DuplicatePin("pin " + format_label(entry.pin) + " already assigned to '" +
                         entries_[by_pin_.at(key)].name + "'");
    if (by_name_.contains(entry.name)) throw DuplicatePin("pin name '" + entry.name + "' already used");
    by_pin_.emplace(key, entries_.size());
    by_name_.emplace(entry.name, entries_.size());
    entries_.push_back(std::move(entry));
  }

  const PinEntry* find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    return it == by_name_.end() ? nullptr : &entries_[it->second];
  }

  const PinEntry& at(std::string_view name) const {
    if (auto* e = find(name)) return *e;
    throw InputError("no pin named '" + std::string(name) + "'");
  }

  std::string label(std::string_view name) const {
    auto* e = find(name);
    return e ? format_label(e->pin) : std::string{};
  }

  const std::vector<PinEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<PinEntry> entries_;
  std::map<std::tuple<Direction, int, int>, std::size_t> by_pin_;
  std::map<std::string, std::size_t> by_name_;
};

// Pin-map text: one `LABEL,NAME,DESCRIPTION` per line, `#` starts a comment.
// The description may itself contain commas.
inline PinRegistry parse_pin_map(std::istream& in) {
  PinRegistry reg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto c1 = text.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : text.find(',', c1 + 1);
    if (c2 == std::string_view::npos)
      throw ParseError("pin map line " + std::to_string(line_no) + ": expected LABEL,NAME,DESCRIPTION",
                       std::string(text));
    PinEntry e;
    try {
      e.pin = parse_label(detail::trim(text.substr(0, c1)));
    } catch (const ParseError& err) {
      throw ParseError("pin map line " + std::to_string(line_no) + ": " + err.what(), err.token());
    }
    e.name = std::string(detail::trim(text.substr(c1 + 1, c2 - c1 - 1)));
    e.description = std::string(detail::trim(text.substr(c2 + 1)));
    if (e.name.empty()) throw ParseError("pin map line " + std::to_string(line_no) + ": empty name", "");
    try {
      reg.insert(std::move(e));
    } catch (const DuplicatePin& err) {
      throw DuplicatePin("pin map line " + std::to_string(line_no) + ": " + err.what());
    }
  }
  return reg;
}

inline PinRegistry parse_pin_map(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_pin_map(in);
}

// Best-effort default map; the full sheet-level assignment is not legible in
// the source schematics, so treat these numbers as placeholders.
inline constexpr std::string_view kDefaultPinMap = R"(# ACAT default pin map (non-authoritative placeholder assignments)
# LABEL,NAME,DESCRIPTION
I:1/2,start_button,operator start
I:1/3,stop_button,operator stop
I:1/4,x_home,X axis home limit switch
I:1/5,y_home,Y axis home limit switch
I:1/6,dispenser_home,dispenser axis home limit switch
I:1/7,z_up,Z cylinder retracted sensor
I:1/8,z_down,Z cylinder extended sensor
I:2/9,part_present,vacuum cup part sensor
I:2/10,safety_ok,safety relay status (MCR energized)
O:1/17,x_pulse,X drive pulse
O:1/18,x_dir,X drive direction
O:1/19,y_pulse,Y drive pulse
O:1/20,y_dir,Y drive direction
O:1/21,dispenser_pulse,dispenser drive pulse
O:1/22,dispenser_dir,dispenser drive direction
O:2/5,z_valve,Z cylinder solenoid
O:2/6,vacuum_valve,venturi vacuum solenoid
O:2/12,dispense_valve,dispense valve air burst solenoid
O:2/13,pump_relay,diaphragm pump relay
O:2/16,light_green,light tower green
O:2/19,light_amber,light tower amber
O:2/20,pilot_start,start pilot light
O:2/21,pilot_stop,stop pilot light
)";

}  // namespace acat::signals
