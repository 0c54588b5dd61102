#include "upolicy/events.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

#include "upolicy/error.hpp"

namespace upolicy {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::optional<Initiator> parse_initiator(const std::string& text) {
  if (text == "AE" || text == "ae") return Initiator::AE;
  if (text == "Lead" || text == "lead") return Initiator::Lead;
  if (text == "System" || text == "system") return Initiator::System;
  return std::nullopt;
}

std::optional<bool> parse_bool(const std::string& text) {
  if (text == "1" || text == "true" || text == "True") return true;
  if (text == "0" || text == "false" || text == "False" || text.empty()) return false;
  return std::nullopt;
}

}  // namespace

std::string to_string(ActionLabel label) {
  switch (label) {
    case ActionLabel::NoContact:
      return "no_contact";
    case ActionLabel::Contact:
      return "contact";
    case ActionLabel::Excluded:
      return "excluded";
  }
  return "excluded";
}

std::optional<std::chrono::sys_days> parse_date(const std::string& text) {
  int y = 0;
  unsigned m = 0, d = 0;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2u-%2u%n", &y, &m, &d, &consumed) != 3 ||
      consumed != static_cast<int>(text.size()))
    return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd};
}

std::optional<std::chrono::sys_seconds> parse_timestamp(const std::string& text) {
  if (text.size() < 16 || (text[10] != 'T' && text[10] != ' ')) return std::nullopt;
  auto day = parse_date(text.substr(0, 10));
  if (!day) return std::nullopt;
  std::string rest = text.substr(11);
  if (!rest.empty() && rest.back() == 'Z') rest.pop_back();
  unsigned hh = 0, mm = 0, ss = 0;
  int consumed = 0;
  if (std::sscanf(rest.c_str(), "%2u:%2u:%2u%n", &hh, &mm, &ss, &consumed) == 3 &&
      consumed == static_cast<int>(rest.size())) {
  } else if (std::sscanf(rest.c_str(), "%2u:%2u%n", &hh, &mm, &consumed) == 2 &&
             consumed == static_cast<int>(rest.size())) {
    ss = 0;
  } else {
    return std::nullopt;
  }
  if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  return std::chrono::sys_seconds{*day} + std::chrono::hours{hh} + std::chrono::minutes{mm} + std::chrono::seconds{ss};
}

ActionLabel label_actions(const std::vector<CommunicationEvent>& events, std::chrono::sys_days decision_day,
                          int decision_hour) {
  const auto window_start = std::chrono::sys_seconds{decision_day} + std::chrono::hours{decision_hour};
  const auto window_end = std::chrono::sys_seconds{decision_day + std::chrono::days{1}};
  const CommunicationEvent* first = nullptr;
  for (const auto& ev : events) {
    if (ev.initiator == Initiator::System) continue;
    if (ev.timestamp < window_start || ev.timestamp >= window_end) continue;
    // Simultaneous events resolve toward exclusion so the label never depends on log order.
    const bool earlier = !first || ev.timestamp < first->timestamp ||
                         (ev.timestamp == first->timestamp && first->initiator == Initiator::AE &&
                          !first->prescheduled && (ev.initiator != Initiator::AE || ev.prescheduled));
    if (earlier) first = &ev;
  }
  if (!first) return ActionLabel::NoContact;
  if (first->initiator == Initiator::AE && !first->prescheduled) return ActionLabel::Contact;
  return ActionLabel::Excluded;
}

std::vector<CommunicationEvent> parse_events(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("event log is empty (header required)");
  const auto header = split_fields(line);
  const std::vector<std::string> expected = {"lead_id", "timestamp_iso8601", "initiator", "channel", "prescheduled"};
  if (header != expected)
    throw DataError("event log header must be lead_id,timestamp_iso8601,initiator,channel,prescheduled");
  std::vector<CommunicationEvent> events;
  std::int64_t row_number = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row_number;
    const auto f = split_fields(line);
    const std::string where = "event row " + std::to_string(row_number) + ": ";
    if (f.size() != expected.size()) throw DataError(where + "expected 5 fields");
    if (f[0].empty()) throw DataError(where + "empty lead_id");
    auto ts = parse_timestamp(f[1]);
    if (!ts) throw DataError(where + "malformed timestamp '" + f[1] + "'");
    auto who = parse_initiator(f[2]);
    if (!who) throw DataError(where + "initiator must be AE, Lead or System, got '" + f[2] + "'");
    auto pre = parse_bool(f[4]);
    if (!pre) throw DataError(where + "prescheduled must be 0/1/true/false, got '" + f[4] + "'");
    events.push_back({f[0], *ts, *who, f[3], *pre});
  }
  return events;
}

std::vector<CommunicationEvent> load_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event log " + path.string());
  return parse_events(in);
}

std::vector<LeadLabel> label_all(const std::vector<CommunicationEvent>& events, std::chrono::sys_days decision_day,
                                 int decision_hour) {
  std::map<std::string, std::vector<CommunicationEvent>> by_lead;
  for (const auto& ev : events) by_lead[ev.lead_id].push_back(ev);
  std::vector<LeadLabel> labels;
  for (const auto& [lead, lead_events] : by_lead)
    labels.push_back({lead, label_actions(lead_events, decision_day, decision_hour)});
  return labels;
}

}  // namespace upolicy
