#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "advrep/authenticator.hpp"
#include "advrep/model.hpp"

namespace advrep {

struct Violation {
  std::string object;     // e.g. "message:m3"
  std::string invariant;  // short name of the broken invariant

  bool operator==(const Violation&) const = default;
};

inline void to_json(json& j, const Violation& v) { j = json{{"object", v.object}, {"invariant", v.invariant}}; }

// Checks every domain-type invariant over a message store. An empty result
// means the store is consistent.
inline std::vector<Violation> validate_store(const std::vector<Conversation>& conversations,
                                             const std::vector<Message>& messages,
                                             const std::vector<UserProfile>& profiles, const KeyStore& keys) {
  std::vector<Violation> out;
  std::map<std::string, const Conversation*> convs;
  for (const auto& c : conversations) {
    const auto obj = "conversation:" + c.conv_id;
    if (!convs.emplace(c.conv_id, &c).second) out.push_back({obj, "conv_id unique"});
    if (c.participants.size() < 2) out.push_back({obj, "at least two participants"});
    if (c.kind == ConversationKind::direct && c.participants.size() != 2)
      out.push_back({obj, "direct conversation has exactly two participants"});
  }
  std::map<AccountId, const UserProfile*> users;
  for (const auto& p : profiles) {
    const auto obj = "profile:" + p.account_id.value;
    if (!p.account_id.valid()) out.push_back({obj, "account id is 1-64 visible ASCII characters"});
    if (!users.emplace(p.account_id, &p).second) out.push_back({obj, "account id unique"});
    if (p.roles.empty()) out.push_back({obj, "roles non-empty"});
  }
  std::optional<PlatformKey> key;
  try {
    key = keys.active();
  } catch (const Error&) {
  }
  std::set<std::string> seen;
  for (const auto& m : messages) {
    const auto obj = "message:" + m.msg_id;
    if (!seen.insert(m.msg_id).second) out.push_back({obj, "msg_id unique"});
    if (m.sent_at <= 0) out.push_back({obj, "sent_at strictly positive"});
    if (m.body.size() > kMaxBodyBytes) out.push_back({obj, "body within 16 KiB"});
    if (!key || !verify_frank(m, *key)) out.push_back({obj, "frank_tag verifies"});
    auto c = convs.find(m.conversation_id);
    if (c == convs.end()) out.push_back({obj, "conversation exists"});
    else if (!c->second->has_participant(m.sender)) out.push_back({obj, "sender is a participant"});
    auto u = users.find(m.sender);
    if (u != users.end() && u->second->join_date > m.sent_at) out.push_back({obj, "sent after sender joined"});
  }
  return out;
}

}  // namespace advrep
