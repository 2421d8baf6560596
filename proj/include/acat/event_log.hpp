#pragma once

// Append-only simulation log. Serialised as JSON Lines, one record per line
// with exactly the fields {seq, t_us, source, kind, payload}.

#include "json.hpp"

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "acat/time.hpp"

namespace acat::sim {

using Json = nlohmann::ordered_json;

struct EventRecord {
  std::uint64_t sequence = 0;
  SimTime time{0};
  std::string source;
  std::string kind;
  Json payload = Json::object();

  Json to_json() const {
    Json j;
    j["seq"] = sequence;
    j["t_us"] = time.count();
    j["source"] = source;
    j["kind"] = kind;
    j["payload"] = payload;
    return j;
  }
};

class EventLog {
 public:
  // Optional mirror stream: records are written as they are emitted.
  void stream_to(std::ostream* out) { out_ = out; }

  const EventRecord& emit(SimTime t, std::string_view source, std::string_view kind, Json payload = Json::object()) {
    records_.push_back({next_seq_++, t, std::string(source), std::string(kind), std::move(payload)});
    if (out_) *out_ << records_.back().to_json().dump() << '\n';
    return records_.back();
  }

  const std::vector<EventRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  std::string to_jsonl() const {
    std::string out;
    for (const auto& r : records_) {
      out += r.to_json().dump();
      out += '\n';
    }
    return out;
  }

  std::size_t count(std::string_view kind) const {
    std::size_t n = 0;
    for (const auto& r : records_)
      if (r.kind == kind) ++n;
    return n;
  }

 private:
  std::vector<EventRecord> records_;
  std::uint64_t next_seq_ = 0;
  std::ostream* out_ = nullptr;
};

}  // namespace acat::sim
