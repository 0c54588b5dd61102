#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "upolicy/error.hpp"
#include "upolicy/events.hpp"

using namespace upolicy;
using namespace std::chrono;

namespace {

const sys_days kDay = sys_days{year{2024} / 3 / 5};

CommunicationEvent at(int hour, int minute, Initiator who, bool prescheduled = false) {
  return {"L1", sys_seconds{kDay} + hours{hour} + minutes{minute}, who, "phone", prescheduled};
}

}  // namespace

TEST(LabelActions, SingleAeCallIsContact) {
  EXPECT_EQ(label_actions({at(11, 0, Initiator::AE)}, kDay), ActionLabel::Contact);
}

TEST(LabelActions, NoEventsIsNoContact) { EXPECT_EQ(label_actions({}, kDay), ActionLabel::NoContact); }

TEST(LabelActions, LeadFirstIsExcluded) {
  EXPECT_EQ(label_actions({at(10, 0, Initiator::Lead), at(14, 0, Initiator::AE)}, kDay), ActionLabel::Excluded);
}

TEST(LabelActions, PrescheduledFirstIsExcluded) {
  EXPECT_EQ(label_actions({at(10, 0, Initiator::AE, true), at(12, 0, Initiator::AE)}, kDay), ActionLabel::Excluded);
}

TEST(LabelActions, SystemMessagesAndOutOfWindowEventsIgnored) {
  const sys_seconds previous_evening = sys_seconds{kDay} - hours{2};
  const sys_seconds next_day = sys_seconds{kDay} + hours{25};
  std::vector<CommunicationEvent> events = {at(9, 30, Initiator::System), at(8, 59, Initiator::Lead),
                                            {"L1", previous_evening, Initiator::Lead, "sms", false},
                                            {"L1", next_day, Initiator::Lead, "sms", false}, at(13, 0, Initiator::AE)};
  EXPECT_EQ(label_actions(events, kDay), ActionLabel::Contact);
  EXPECT_EQ(label_actions({at(8, 0, Initiator::AE)}, kDay), ActionLabel::NoContact);
  EXPECT_EQ(label_actions({at(8, 0, Initiator::AE)}, kDay, 7), ActionLabel::Contact);
}

TEST(LabelActions, InsensitiveToOrderOfLaterEvents) {
  std::vector<CommunicationEvent> events = {at(10, 0, Initiator::AE), at(12, 0, Initiator::Lead),
                                            at(15, 0, Initiator::AE, true), at(16, 0, Initiator::System)};
  const auto expected = label_actions(events, kDay);
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.timestamp > b.timestamp; });
  do {
    EXPECT_EQ(label_actions(events, kDay), expected);
  } while (std::next_permutation(events.begin() + 1, events.end(),
                                 [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; }));
}

TEST(LabelActions, SimultaneousEventsResolveTowardExclusion) {
  std::vector<CommunicationEvent> events = {at(10, 0, Initiator::AE), at(10, 0, Initiator::Lead)};
  EXPECT_EQ(label_actions(events, kDay), ActionLabel::Excluded);
  std::reverse(events.begin(), events.end());
  EXPECT_EQ(label_actions(events, kDay), ActionLabel::Excluded);
}

TEST(Timestamps, Parsing) {
  EXPECT_EQ(parse_timestamp("2024-03-05T11:00:00Z"), sys_seconds{kDay} + hours{11});
  EXPECT_EQ(parse_timestamp("2024-03-05T11:00"), sys_seconds{kDay} + hours{11});
  EXPECT_FALSE(parse_timestamp("2024-03-05"));
  EXPECT_FALSE(parse_timestamp("2024-13-05T11:00"));
  EXPECT_FALSE(parse_timestamp("2024-03-05T25:00"));
  EXPECT_EQ(parse_date("2024-03-05"), kDay);
  EXPECT_FALSE(parse_date("2024-02-30"));
}

TEST(EventLog, ParseAndLabelAll) {
  std::istringstream in(
      "lead_id,timestamp_iso8601,initiator,channel,prescheduled\n"
      "b,2024-03-05T10:00:00Z,Lead,phone,0\n"
      "a,2024-03-05T11:00:00Z,AE,phone,0\n"
      "b,2024-03-05T14:00:00Z,AE,phone,0\n"
      "c,2024-03-04T14:00:00Z,AE,phone,0\n");
  const auto labels = label_all(parse_events(in), kDay);
  ASSERT_EQ(labels.size(), 3u);
  EXPECT_EQ(labels[0].lead_id, "a");
  EXPECT_EQ(labels[0].label, ActionLabel::Contact);
  EXPECT_EQ(labels[1].label, ActionLabel::Excluded);
  EXPECT_EQ(labels[2].label, ActionLabel::NoContact);
}

TEST(EventLog, MalformedRowsRejected) {
  std::istringstream bad_header("lead,timestamp\n");
  EXPECT_THROW(parse_events(bad_header), DataError);
  std::istringstream bad_initiator(
      "lead_id,timestamp_iso8601,initiator,channel,prescheduled\n"
      "a,2024-03-05T11:00:00Z,Robot,phone,0\n");
  EXPECT_THROW(parse_events(bad_initiator), DataError);
}
