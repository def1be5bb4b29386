#pragma once

#include <optional>
#include <string>
#include <vector>

#include "advrep/minimizer.hpp"
#include "advrep/model.hpp"

namespace advrep {

enum class Criticality { informational, critical };
enum class RequestState { pending, granted, denied, withdrawn };

NLOHMANN_JSON_SERIALIZE_ENUM(Criticality, {{Criticality::informational, "informational"},
                                           {Criticality::critical, "critical"}})
NLOHMANN_JSON_SERIALIZE_ENUM(RequestState, {{RequestState::pending, "pending"},
                                            {RequestState::granted, "granted"},
                                            {RequestState::denied, "denied"},
                                            {RequestState::withdrawn, "withdrawn"}})

inline std::string default_consequence_note(Criticality c) {
  return c == Criticality::critical
             ? "This request is critical: if you deny it, the report may be dismissed for non-disclosure."
             : "You may deny this request; denial is noted and may reduce the credibility of your evidence.";
}

// A moderator's ask to see more of a minimized conversation. Only the
// reporter can grant or deny it.
struct DisclosureRequest {
  std::string request_id;
  std::string report_id;
  AccountId requester;
  std::string requester_handle;
  std::vector<std::string> targets;
  VisibilityLevel requested_level = VisibilityLevel::full();
  std::string justification;
  Criticality criticality = Criticality::informational;
  std::string consequence_note;
  RequestState state = RequestState::pending;
};

// Rendered for reporters and moderators; the requester appears by handle.
inline json render_request(const DisclosureRequest& r) {
  return json{{"request_id", r.request_id},
              {"report_id", r.report_id},
              {"requester", r.requester_handle},
              {"targets", r.targets},
              {"requested_level", r.requested_level},
              {"justification", r.justification},
              {"criticality", r.criticality},
              {"consequence_note", r.consequence_note},
              {"state", r.state}};
}

inline void transition_request(DisclosureRequest& r, RequestState to) {
  if (r.state != RequestState::pending || to == RequestState::pending)
    throw Error(errc::kInvalidState, "request " + r.request_id + " is already " + json(r.state).get<std::string>());
  r.state = to;
}

// ---------------------------------------------------------------------------
// Bystander cross-examination
// ---------------------------------------------------------------------------

enum class Involvement { yes_no, flag_suspicious, disclose_messages };
enum class Consent { awaiting_reporter, reporter_approved, reporter_declined };

NLOHMANN_JSON_SERIALIZE_ENUM(Involvement, {{Involvement::yes_no, "yes_no"},
                                           {Involvement::flag_suspicious, "flag_suspicious"},
                                           {Involvement::disclose_messages, "disclose_messages"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Consent, {{Consent::awaiting_reporter, "awaiting_reporter"},
                                       {Consent::reporter_approved, "reporter_approved"},
                                       {Consent::reporter_declined, "reporter_declined"}})

struct BystanderDisclosure {
  std::string msg_id;
  std::string account;  // the bystander's own description, not the message text
};

struct BystanderFinding {
  std::string invite_id;
  std::optional<bool> verdict;
  std::vector<std::string> flags;
  std::vector<BystanderDisclosure> disclosures;
};

inline void from_json(const json& j, BystanderFinding& f) {
  f = BystanderFinding{};
  if (j.contains("verdict")) f.verdict = j.at("verdict").get<bool>();
  if (j.contains("flags")) f.flags = j.at("flags").get<std::vector<std::string>>();
  if (j.contains("disclosures")) {
    for (const auto& d : j.at("disclosures"))
      f.disclosures.push_back({d.at("msg_id").get<std::string>(), d.value("account", std::string{})});
  }
}

inline void validate_finding_shape(Involvement involvement, const BystanderFinding& f) {
  const bool yes_no = f.verdict.has_value();
  const bool flags = !f.flags.empty();
  const bool disclosures = !f.disclosures.empty();
  bool ok = false;
  switch (involvement) {
    case Involvement::yes_no: ok = yes_no && !flags && !disclosures; break;
    case Involvement::flag_suspicious: ok = !yes_no && flags && !disclosures; break;
    case Involvement::disclose_messages: ok = !yes_no && !flags && disclosures; break;
  }
  if (!ok)
    throw Error(errc::kValidation, "finding shape does not match involvement " + json(involvement).get<std::string>());
}

struct BystanderInvite {
  std::string invite_id;
  std::string report_id;
  AccountId bystander;
  Involvement involvement = Involvement::yes_no;
  Consent consent = Consent::awaiting_reporter;
  bool contacted = false;
  std::optional<BystanderFinding> finding;
};

}  // namespace advrep
