#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "shadowsim/errors.hpp"

namespace shadowsim {

using json = nlohmann::json;

using Tick = std::int64_t;
using Seq = std::int64_t;

enum class EventType {
  Header,
  AccountRegistered,
  PostPublished,
  AdPosted,
  PostRemoved,
  AccountBanned,
  Followed,
  Engaged,
  TopicSubjectSet,
  DMSent,
  DMBlocked,
  ChatTurn,
  CardUpdated,
  TransferRequest,
  TransferCompleted,
  CallScreened,
  StageEntered,
  BackendCall,
  Error,
};

inline const char* to_string(EventType t) {
  switch (t) {
    case EventType::Header: return "Header";
    case EventType::AccountRegistered: return "AccountRegistered";
    case EventType::PostPublished: return "PostPublished";
    case EventType::AdPosted: return "AdPosted";
    case EventType::PostRemoved: return "PostRemoved";
    case EventType::AccountBanned: return "AccountBanned";
    case EventType::Followed: return "Followed";
    case EventType::Engaged: return "Engaged";
    case EventType::TopicSubjectSet: return "TopicSubjectSet";
    case EventType::DMSent: return "DMSent";
    case EventType::DMBlocked: return "DMBlocked";
    case EventType::ChatTurn: return "ChatTurn";
    case EventType::CardUpdated: return "CardUpdated";
    case EventType::TransferRequest: return "TransferRequest";
    case EventType::TransferCompleted: return "TransferCompleted";
    case EventType::CallScreened: return "CallScreened";
    case EventType::StageEntered: return "StageEntered";
    case EventType::BackendCall: return "BackendCall";
    case EventType::Error: return "Error";
  }
  return "Unknown";
}

inline EventType event_type_from_string(const std::string& s) {
  static const std::vector<EventType> all = {
      EventType::Header,          EventType::AccountRegistered,
      EventType::PostPublished,   EventType::AdPosted,
      EventType::PostRemoved,     EventType::AccountBanned,
      EventType::Followed,        EventType::Engaged,
      EventType::TopicSubjectSet, EventType::DMSent,
      EventType::DMBlocked,       EventType::ChatTurn,
      EventType::CardUpdated,     EventType::TransferRequest,
      EventType::TransferCompleted, EventType::CallScreened,
      EventType::StageEntered,    EventType::BackendCall,
      EventType::Error,
  };
  for (EventType t : all)
    if (s == to_string(t)) return t;
  throw SimError("unknown event type: " + s);
}

struct SimEvent {
  Tick tick = 0;
  Seq seq = 0;
  EventType type = EventType::Error;
  json payload;

  json to_json() const {
    return json{{"tick", tick}, {"seq", seq}, {"type", to_string(type)}, {"payload", payload}};
  }

  static SimEvent from_json(const json& j) {
    SimEvent e;
    e.tick = j.at("tick").get<Tick>();
    e.seq = j.at("seq").get<Seq>();
    e.type = event_type_from_string(j.at("type").get<std::string>());
    e.payload = j.at("payload");
    return e;
  }

  bool operator==(const SimEvent& other) const {
    return tick == other.tick && seq == other.seq && type == other.type &&
           payload == other.payload;
  }
};

// Append-only event log. seq is assigned on append, strictly increasing and
// contiguous; tick must be non-decreasing.
class EventLog {
 public:
  const SimEvent& append(Tick tick, EventType type, json payload) {
    if (!events_.empty() && tick < events_.back().tick)
      throw SimError("event tick must be non-decreasing");
    SimEvent e;
    e.tick = tick;
    e.seq = next_seq_++;
    e.type = type;
    e.payload = std::move(payload);
    events_.push_back(std::move(e));
    return events_.back();
  }

  const std::vector<SimEvent>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }
  const SimEvent& at(std::size_t i) const { return events_.at(i); }

  std::size_t count(EventType t) const {
    std::size_t n = 0;
    for (const auto& e : events_)
      if (e.type == t) ++n;
    return n;
  }

  void write_jsonl(std::ostream& os) const {
    for (const auto& e : events_) os << e.to_json().dump() << '\n';
  }

  std::string to_jsonl() const {
    std::ostringstream oss;
    write_jsonl(oss);
    return oss.str();
  }

  // Parses one JSON-Lines stream. Malformed lines raise SimError with the
  // 1-based line number.
  static EventLog read_jsonl(std::istream& is) {
    EventLog log;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (trim_copy(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& ex) {
        throw SimError("malformed log line " + std::to_string(lineno) + ": " + ex.what());
      }
      SimEvent e;
      try {
        e = SimEvent::from_json(j);
      } catch (const std::exception& ex) {
        throw SimError("malformed log line " + std::to_string(lineno) + ": " + ex.what());
      }
      log.events_.push_back(std::move(e));
    }
    log.next_seq_ = log.events_.empty() ? 0 : log.events_.back().seq + 1;
    return log;
  }

  static EventLog from_jsonl(const std::string& text) {
    std::istringstream iss(text);
    return read_jsonl(iss);
  }

 private:
  static std::string trim_copy(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::vector<SimEvent> events_;
  Seq next_seq_ = 0;
};

}  // namespace shadowsim
