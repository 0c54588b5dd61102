#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "upolicy/data.hpp"

namespace upolicy {

enum class Initiator { AE, Lead, System };

struct CommunicationEvent {
  std::string lead_id;
  std::chrono::sys_seconds timestamp;
  Initiator initiator = Initiator::AE;
  std::string channel;
  bool prescheduled = false;
};

enum class ActionLabel { NoContact, Contact, Excluded };

std::string to_string(ActionLabel label);

inline constexpr int kDefaultDecisionHour = 9;

/// Labels one lead's decision on `decision_day` from its communication log.
///
/// Only events on the decision day at or after `decision_hour` count; automated
/// (System) messages are not decisions and are skipped. No remaining event gives
/// NoContact. If the first remaining event was AE-initiated and not prescheduled
/// the action is Contact; a Lead-initiated or prescheduled first event is Excluded.
ActionLabel label_actions(const std::vector<CommunicationEvent>& events, std::chrono::sys_days decision_day,
                          int decision_hour = kDefaultDecisionHour);

/// Parses `YYYY-MM-DDTHH:MM[:SS][Z]`. Returns nullopt on malformed input.
std::optional<std::chrono::sys_seconds> parse_timestamp(const std::string& text);
std::optional<std::chrono::sys_days> parse_date(const std::string& text);

/// Event-log CSV: lead_id,timestamp_iso8601,initiator,channel,prescheduled.
std::vector<CommunicationEvent> load_events(const std::filesystem::path& path);
std::vector<CommunicationEvent> parse_events(std::istream& in);

struct LeadLabel {
  std::string lead_id;
  ActionLabel label;
};

/// Labels every lead present in the log for the same decision day, ordered by lead id.
std::vector<LeadLabel> label_all(const std::vector<CommunicationEvent>& events, std::chrono::sys_days decision_day,
                                 int decision_hour = kDefaultDecisionHour);

}  // namespace upolicy
