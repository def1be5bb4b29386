#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "advrep/model.hpp"

namespace advrep {

enum class ReportState {
  filed,
  assembling,
  under_review,
  decided,
  notified,
  appeal_open,
  appeal_resolved,
  closed,
  dismissed,
  terminated
};

NLOHMANN_JSON_SERIALIZE_ENUM(ReportState, {{ReportState::filed, "filed"},
                                           {ReportState::assembling, "assembling"},
                                           {ReportState::under_review, "under_review"},
                                           {ReportState::decided, "decided"},
                                           {ReportState::notified, "notified"},
                                           {ReportState::appeal_open, "appeal_open"},
                                           {ReportState::appeal_resolved, "appeal_resolved"},
                                           {ReportState::closed, "closed"},
                                           {ReportState::dismissed, "dismissed"},
                                           {ReportState::terminated, "terminated"}})

inline constexpr std::array kAllStates{ReportState::filed,        ReportState::assembling, ReportState::under_review,
                                       ReportState::decided,      ReportState::notified,   ReportState::appeal_open,
                                       ReportState::appeal_resolved, ReportState::closed,  ReportState::dismissed,
                                       ReportState::terminated};

// Operations that move (or keep) a report in the state machine.
enum class LifecycleOp {
  begin_assembly,
  edit_evidence,
  assign,
  investigate,  // disclosure requests, bystander invites, findings, tags
  decide,
  notify,
  appeal,
  lapse_appeal_window,
  affirm_appeal,
  reverse_appeal,
  close,
  terminate
};

NLOHMANN_JSON_SERIALIZE_ENUM(LifecycleOp, {{LifecycleOp::begin_assembly, "begin_assembly"},
                                           {LifecycleOp::edit_evidence, "edit_evidence"},
                                           {LifecycleOp::assign, "assign"},
                                           {LifecycleOp::investigate, "investigate"},
                                           {LifecycleOp::decide, "decide"},
                                           {LifecycleOp::notify, "notify"},
                                           {LifecycleOp::appeal, "appeal"},
                                           {LifecycleOp::lapse_appeal_window, "lapse_appeal_window"},
                                           {LifecycleOp::affirm_appeal, "affirm_appeal"},
                                           {LifecycleOp::reverse_appeal, "reverse_appeal"},
                                           {LifecycleOp::close, "close"},
                                           {LifecycleOp::terminate, "terminate"}})

inline constexpr std::array kAllOps{LifecycleOp::begin_assembly, LifecycleOp::edit_evidence,
                                    LifecycleOp::assign,         LifecycleOp::investigate,
                                    LifecycleOp::decide,         LifecycleOp::notify,
                                    LifecycleOp::appeal,         LifecycleOp::lapse_appeal_window,
                                    LifecycleOp::affirm_appeal,  LifecycleOp::reverse_appeal,
                                    LifecycleOp::close,          LifecycleOp::terminate};

inline bool is_terminal(ReportState s) {
  return s == ReportState::closed || s == ReportState::dismissed || s == ReportState::terminated ||
         s == ReportState::appeal_resolved;
}

// The published transition table.
inline const std::vector<std::tuple<ReportState, LifecycleOp, ReportState>>& transition_table() {
  using S = ReportState;
  using O = LifecycleOp;
  static const std::vector<std::tuple<S, O, S>> kTable{
      {S::filed, O::begin_assembly, S::assembling},
      {S::filed, O::terminate, S::terminated},
      {S::assembling, O::edit_evidence, S::assembling},
      {S::assembling, O::assign, S::under_review},
      {S::assembling, O::terminate, S::terminated},
      {S::under_review, O::investigate, S::under_review},
      {S::under_review, O::decide, S::decided},
      {S::under_review, O::terminate, S::terminated},
      {S::decided, O::notify, S::notified},
      {S::decided, O::terminate, S::terminated},
      {S::notified, O::appeal, S::appeal_open},
      {S::notified, O::lapse_appeal_window, S::closed},
      {S::notified, O::terminate, S::terminated},
      {S::appeal_open, O::affirm_appeal, S::appeal_resolved},
      {S::appeal_open, O::reverse_appeal, S::dismissed},
      {S::appeal_open, O::terminate, S::terminated},
      {S::appeal_resolved, O::close, S::closed},
  };
  return kTable;
}

inline std::optional<ReportState> next_state(ReportState from, LifecycleOp op) {
  for (const auto& [f, o, t] : transition_table())
    if (f == from && o == op) return t;
  return std::nullopt;
}

inline ReportState require_transition(ReportState from, LifecycleOp op) {
  auto to = next_state(from, op);
  if (!to)
    throw Error(errc::kInvalidState,
                "operation " + json(op).get<std::string>() + " not allowed in state " + json(from).get<std::string>());
  return *to;
}

inline json transition_table_json() {
  json rows = json::array();
  for (const auto& [f, o, t] : transition_table()) rows.push_back({{"from", f}, {"op", o}, {"to", t}});
  return json{{"states", kAllStates}, {"terminal", {"closed", "dismissed", "terminated", "appeal_resolved"}},
              {"transitions", rows}};
}

// ---------------------------------------------------------------------------
// Decisions and notifications
// ---------------------------------------------------------------------------

enum class Outcome { uphold, dismiss };
enum class Punishment { none, warn, mute, ban };
enum class PunishmentTiming { immediate, delayed_until_appeal };

NLOHMANN_JSON_SERIALIZE_ENUM(Outcome, {{Outcome::uphold, "uphold"}, {Outcome::dismiss, "dismiss"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Punishment, {{Punishment::none, "none"},
                                          {Punishment::warn, "warn"},
                                          {Punishment::mute, "mute"},
                                          {Punishment::ban, "ban"}})
NLOHMANN_JSON_SERIALIZE_ENUM(PunishmentTiming, {{PunishmentTiming::immediate, "immediate"},
                                                {PunishmentTiming::delayed_until_appeal, "delayed_until_appeal"}})

struct Decision {
  Outcome outcome = Outcome::dismiss;
  std::optional<std::string> policy_violated;
  Punishment punishment = Punishment::none;
  PunishmentTiming punishment_timing = PunishmentTiming::immediate;
  std::string rationale;
  std::vector<std::string> offending_messages;  // msg_ids cited for message-level notices

  void validate() const {
    if (outcome == Outcome::dismiss && punishment != Punishment::none)
      throw Error(errc::kValidation, "a dismissal carries no punishment");
    if (outcome == Outcome::uphold && (!policy_violated || policy_violated->empty()))
      throw Error(errc::kValidation, "an upheld report must name the violated policy");
  }
};

inline void to_json(json& j, const Decision& d) {
  j = json{{"outcome", d.outcome},
           {"policy_violated", d.policy_violated ? json(*d.policy_violated) : json(nullptr)},
           {"punishment", d.punishment},
           {"punishment_timing", d.punishment_timing},
           {"rationale", d.rationale},
           {"offending_messages", d.offending_messages}};
}

inline void from_json(const json& j, Decision& d) {
  d.outcome = enum_from<Outcome>(j.at("outcome"), "outcome");
  if (j.contains("policy_violated") && !j.at("policy_violated").is_null())
    d.policy_violated = j.at("policy_violated").get<std::string>();
  d.punishment = enum_from<Punishment>(j.value("punishment", json("none")), "punishment");
  d.punishment_timing = enum_from<PunishmentTiming>(j.value("punishment_timing", json("immediate")), "punishment_timing");
  d.rationale = j.value("rationale", std::string{});
  d.offending_messages = j.value("offending_messages", std::vector<std::string>{});
}

enum class Granularity { generic, policy_only, message_level };

NLOHMANN_JSON_SERIALIZE_ENUM(Granularity, {{Granularity::generic, "generic"},
                                           {Granularity::policy_only, "policy_only"},
                                           {Granularity::message_level, "message_level"}})

// Reports touching a direct conversation always get generic notices, since
// the reported person could otherwise infer who reported them.
inline Granularity effective_granularity(Granularity requested, bool involves_direct) {
  return involves_direct ? Granularity::generic : requested;
}

// ---------------------------------------------------------------------------
// Moderator assignment
// ---------------------------------------------------------------------------

struct ModeratorProfile {
  std::string handle;
  std::int64_t tenure_days = 0;
  std::int64_t reports_reviewed = 0;
  std::vector<std::string> endorsed_values;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModeratorProfile, handle, tenure_days, reports_reviewed, endorsed_values)

struct ModeratorRecord {
  AccountId account;
  ModeratorProfile profile;
};

struct Exclusion {
  std::string moderator;  // handle
  std::string justification;
};

struct AssignmentRequest {
  std::vector<std::string> preferred;  // handles
  std::vector<Exclusion> excluded;
};

inline void from_json(const json& j, AssignmentRequest& r) {
  r.preferred = j.value("preferred", std::vector<std::string>{});
  r.excluded.clear();
  for (const auto& e : j.value("excluded", json::array()))
    r.excluded.push_back({e.at("moderator").get<std::string>(), e.value("justification", std::string{})});
}

// Picks `count` moderators from the pool: conflicted moderators and justified
// exclusions are removed, available preferred moderators go first, the rest
// are filled in pool order.
inline std::vector<ModeratorRecord> choose_moderators(const std::vector<ModeratorRecord>& pool,
                                                      const AssignmentRequest& request,
                                                      const std::set<AccountId>& conflicted, std::size_t count) {
  std::set<std::string> excluded;
  for (const auto& e : request.excluded) {
    if (e.justification.empty())
      throw Error(errc::kValidation, "exclusion of " + e.moderator + " needs a justification");
    excluded.insert(e.moderator);
  }
  std::vector<ModeratorRecord> eligible;
  for (const auto& m : pool) {
    if (conflicted.count(m.account) || excluded.count(m.profile.handle)) continue;
    eligible.push_back(m);
  }
  if (eligible.empty()) throw Error(errc::kAssignmentImpossible, "no eligible moderator remains after exclusions");
  std::vector<ModeratorRecord> chosen;
  auto take = [&](const ModeratorRecord& m) {
    if (chosen.size() >= count) return;
    for (const auto& c : chosen)
      if (c.account == m.account) return;
    chosen.push_back(m);
  };
  for (const auto& handle : request.preferred) {
    auto it = std::find_if(eligible.begin(), eligible.end(), [&](const auto& m) { return m.profile.handle == handle; });
    if (it != eligible.end()) take(*it);
  }
  for (const auto& m : eligible) take(m);
  return chosen;
}

}  // namespace advrep
