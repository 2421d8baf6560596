#pragma once

// Operator wire protocol (JSON text frames, "v":1):
//   server -> client  {"type":"snapshot","v":1,...}
//                     {"type":"ack","v":1,"kind":...,"client_id":...}
//                     {"type":"error","v":1,"message":...}
//   client -> server  {"type":"command","v":1,"kind":"start","params":{},"client_id":"..."}
// See docs/protocol.md for the field list.

#include <algorithm>
#include <array>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "acat/kernel.hpp"

namespace acat::gateway {

using sim::Json;

inline constexpr int kProtocolVersion = 1;

class ProtocolError : public Error {
 public:
  using Error::Error;
};

struct LightTower {
  bool green = false;
  bool amber = false;
  bool red = false;

  friend bool operator==(const LightTower&, const LightTower&) = default;
};

// red: safety relay not in run. green: cycle running. amber: idle, complete
// or stopping, i.e. waiting on the operator.
inline LightTower light_tower(seq::Phase phase, const safety::SafetyState& safety) {
  LightTower t;
  t.red = safety.mode != safety::Mode::run;
  if (t.red) return t;
  t.green = seq::is_active(phase);
  t.amber = phase == seq::Phase::idle || phase == seq::Phase::complete || phase == seq::Phase::stopping;
  return t;
}

inline Json measurement_json(const goniometry::MeasurementRecord& m) {
  return {{"part_id", m.part_id},
          {"column", m.column},
          {"row", m.row},
          {"theta_deg", goniometry::round3(m.theta_measured_deg)},
          {"theta_true_deg", m.theta_true_deg},
          {"droplet_ul", m.droplet_ul},
          {"t_us", m.timestamp.count()}};
}

inline Json snapshot_json(const sim::Simulation& s) {
  const auto& safety = s.safety();
  const auto& cycle = s.cycle();
  const auto& plant = s.plant();
  Json axes = Json::object();
  for (auto name : {motion::AxisName::x, motion::AxisName::y, motion::AxisName::dispenser}) {
    const auto& a = plant.axis(name).axis;
    axes[std::string(motion::to_string(name))] = {
        {"mm", a.position ? Json(motion::steps_to_mm(a, *a.position)) : Json(nullptr)},
        {"homed", a.homed},
        {"busy", plant.axis(name).busy()}};
  }
  const auto tower = light_tower(cycle.phase, safety);
  const auto& ms = plant.measurements();
  Json j;
  j["type"] = "snapshot";
  j["v"] = kProtocolVersion;
  j["t_us"] = s.now().count();
  j["safety"] = {{"mode", safety::to_string(safety.mode)},
                 {"cause", safety.fault_cause ? Json(safety::to_string(*safety.fault_cause)) : Json(nullptr)},
                 {"mcr", safety.mcr_energized}};
  j["cycle"] = {{"phase", seq::to_string(cycle.phase)},
                {"column", cycle.column_index},
                {"row", cycle.row_index},
                {"parts_done", cycle.parts_done},
                {"parts_measured", cycle.parts_measured},
                {"parts_skipped", cycle.parts_skipped},
                {"total_parts", cycle.total_parts}};
  j["axes"] = std::move(axes);
  j["z"] = motion::to_string(plant.z().confirmed());
  j["light_tower"] = {{"green", tower.green}, {"amber", tower.amber}, {"red", tower.red}};
  j["parts_done"] = cycle.parts_done;
  j["total_parts"] = cycle.total_parts;
  j["reservoir_ml"] = plant.reservoir().level_ml;
  j["last_measurement"] = ms.empty() ? Json(nullptr) : measurement_json(ms.back());
  j["terminal"] = s.terminal();
  return j;
}

enum class CommandKind { start, stop, estop, estop_release, reset, door_open, door_close, inject };

inline constexpr std::array<std::pair<CommandKind, std::string_view>, 8> kCommandNames = {{
    {CommandKind::start, "start"},
    {CommandKind::stop, "stop"},
    {CommandKind::estop, "estop"},
    {CommandKind::estop_release, "estop_release"},
    {CommandKind::reset, "reset"},
    {CommandKind::door_open, "door_open"},
    {CommandKind::door_close, "door_close"},
    {CommandKind::inject, "inject"},
}};

inline std::string_view to_string(CommandKind k) {
  for (auto [kind, name] : kCommandNames)
    if (kind == k) return name;
  return "?";
}

struct CommandMessage {
  CommandKind kind = CommandKind::start;
  Json params = Json::object();
  std::string client_id;
};

// Maps an operator command onto the kernel's input vocabulary.
inline sim::Injection to_injection(const CommandMessage& msg, SimTime now) {
  Json inj = {{"t_us", now.count()}};
  switch (msg.kind) {
    case CommandKind::start: inj["kind"] = "start_press"; break;
    case CommandKind::stop: inj["kind"] = "stop_press"; break;
    case CommandKind::reset: inj["kind"] = "reset_press"; break;
    case CommandKind::door_open: inj["kind"] = "door_open"; break;
    case CommandKind::door_close: inj["kind"] = "door_close"; break;
    case CommandKind::estop:
    case CommandKind::estop_release:
      inj["kind"] = msg.kind == CommandKind::estop ? "estop_press" : "estop_release";
      inj["params"] = Json::object();
      if (msg.params.contains("station")) inj["params"]["station"] = msg.params["station"];
      break;
    case CommandKind::inject:
      if (!msg.params.contains("kind")) throw ProtocolError("inject needs params.kind");
      inj["kind"] = msg.params["kind"];
      if (msg.params.contains("params")) inj["params"] = msg.params["params"];
      break;
  }
  try {
    return sim::detail::read_injection(sim::detail::Reader(inj, "/command"));
  } catch (const sim::ScenarioError& e) {
    throw ProtocolError(e.what());
  }
}

inline CommandMessage parse_command(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error&) {
    throw ProtocolError("message is not valid JSON");
  }
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");
  if (!j.contains("type") || j["type"] != "command") throw ProtocolError("expected \"type\":\"command\"");
  if (j.contains("v") && j["v"] != kProtocolVersion)
    throw ProtocolError("unsupported protocol version " + j["v"].dump());
  for (const auto& [key, value] : j.items())
    if (key != "type" && key != "v" && key != "kind" && key != "params" && key != "client_id")
      throw ProtocolError("unknown field '" + key + "'");
  if (!j.contains("kind") || !j["kind"].is_string()) throw ProtocolError("missing command kind");
  const auto name = j["kind"].get<std::string>();
  CommandMessage msg;
  bool known = false;
  for (auto [kind, n] : kCommandNames)
    if (n == name) {
      msg.kind = kind;
      known = true;
    }
  if (!known) throw ProtocolError("unknown command kind '" + name + "'");
  if (j.contains("params")) {
    if (!j["params"].is_object()) throw ProtocolError("params must be an object");
    msg.params = j["params"];
  }
  if (j.contains("client_id")) {
    if (!j["client_id"].is_string()) throw ProtocolError("client_id must be a string");
    msg.client_id = j["client_id"].get<std::string>();
  }
  // Validate now so that a bad command is refused to the client rather than
  // dropped later on the simulation thread.
  (void)to_injection(msg, SimTime{0});
  return msg;
}

inline std::string error_reply(std::string_view message) {
  return Json{{"type", "error"}, {"v", kProtocolVersion}, {"message", message}}.dump();
}

inline std::string ack_reply(const CommandMessage& msg) {
  return Json{{"type", "ack"}, {"v", kProtocolVersion}, {"kind", to_string(msg.kind)}, {"client_id", msg.client_id}}
      .dump();
}

// The single ordered path from clients to the simulation. drain() hands over
// everything received since the last tick with E-stop presses first and
// arrival order kept otherwise.
class CommandQueue {
 public:
  void push(CommandMessage msg) {
    std::lock_guard lock(mutex_);
    queue_.push_back(std::move(msg));
  }

  std::vector<CommandMessage> drain() {
    std::vector<CommandMessage> out;
    {
      std::lock_guard lock(mutex_);
      out.assign(std::make_move_iterator(queue_.begin()), std::make_move_iterator(queue_.end()));
      queue_.clear();
    }
    std::stable_partition(out.begin(), out.end(),
                          [](const CommandMessage& m) { return m.kind == CommandKind::estop; });
    return out;
  }

  bool empty() const {
    std::lock_guard lock(mutex_);
    return queue_.empty();
  }

 private:
  mutable std::mutex mutex_;
  std::deque<CommandMessage> queue_;
};

}  // namespace acat::gateway
