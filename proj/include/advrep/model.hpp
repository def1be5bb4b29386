#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "advrep/bytes.hpp"
#include "advrep/error.hpp"

namespace advrep {

using json = nlohmann::json;

// Enum parse that rejects unknown names instead of falling back to the first
// enumerator.
template <typename E>
E enum_from(const json& j, std::string_view what) {
  const E e = j.get<E>();
  if (json(e) != j) throw Error(errc::kValidation, std::string(what) + ": unknown value " + j.dump());
  return e;
}

inline constexpr std::size_t kMaxBodyBytes = 16 * 1024;
inline constexpr std::size_t kMaxIdBytes = 256;

// Stable account identifier. Display names are not identities; this is.
struct AccountId {
  std::string value;

  bool valid() const {
    if (value.empty() || value.size() > 64) return false;
    return std::all_of(value.begin(), value.end(), [](char c) { return c > 0x20 && c < 0x7F; });
  }

  auto operator<=>(const AccountId&) const = default;
};

inline void to_json(json& j, const AccountId& a) { j = a.value; }
inline void from_json(const json& j, AccountId& a) { a.value = j.get<std::string>(); }

enum class Role { member, community_moderator, senior_moderator, platform_moderator };

NLOHMANN_JSON_SERIALIZE_ENUM(Role, {{Role::member, "member"},
                                    {Role::community_moderator, "community_moderator"},
                                    {Role::senior_moderator, "senior_moderator"},
                                    {Role::platform_moderator, "platform_moderator"}})

struct UserProfile {
  AccountId account_id;
  std::string display_name;
  std::string avatar_ref;
  Millis join_date = 0;
  std::set<Role> roles;

  bool has_role(Role r) const { return roles.count(r) > 0; }
  bool is_moderator() const {
    return has_role(Role::community_moderator) || has_role(Role::senior_moderator) ||
           has_role(Role::platform_moderator);
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(UserProfile, account_id, display_name, avatar_ref, join_date, roles)

struct Message {
  std::string msg_id;
  std::string conversation_id;
  AccountId sender;
  Millis sent_at = 0;
  std::string body;
  Bytes frank_tag;
  bool deleted = false;
  bool edited = false;

  bool operator==(const Message&) const = default;
};

inline void to_json(json& j, const Message& m) {
  j = json{{"msg_id", m.msg_id},   {"conversation_id", m.conversation_id},
           {"sender", m.sender},   {"sent_at", m.sent_at},
           {"body", m.body},       {"frank_tag", base64_encode(m.frank_tag)},
           {"deleted", m.deleted}, {"edited", m.edited}};
}

inline void from_json(const json& j, Message& m) {
  j.at("msg_id").get_to(m.msg_id);
  j.at("conversation_id").get_to(m.conversation_id);
  j.at("sender").get_to(m.sender);
  j.at("sent_at").get_to(m.sent_at);
  j.at("body").get_to(m.body);
  m.frank_tag = base64_decode(j.value("frank_tag", std::string{}));
  m.deleted = j.value("deleted", false);
  m.edited = j.value("edited", false);
}

// Messages within a conversation are ordered by (sent_at, msg_id).
inline bool message_order(const Message& a, const Message& b) {
  return std::tie(a.sent_at, a.msg_id) < std::tie(b.sent_at, b.msg_id);
}

struct EphemeralWindow {
  enum class Mode { seconds, messages };
  Mode mode = Mode::seconds;
  std::int64_t n = 1;

  static EphemeralWindow seconds(std::int64_t n) { return make(Mode::seconds, n); }
  static EphemeralWindow messages(std::int64_t n) { return make(Mode::messages, n); }

  static EphemeralWindow make(Mode mode, std::int64_t n) {
    if (n < 1) throw Error(errc::kValidation, "ephemeral window n must be >= 1");
    return EphemeralWindow{mode, n};
  }

  bool operator==(const EphemeralWindow&) const = default;
};

NLOHMANN_JSON_SERIALIZE_ENUM(EphemeralWindow::Mode, {{EphemeralWindow::Mode::seconds, "seconds"},
                                                     {EphemeralWindow::Mode::messages, "messages"}})

inline void to_json(json& j, const EphemeralWindow& w) { j = json{{"mode", w.mode}, {"n", w.n}}; }
inline void from_json(const json& j, EphemeralWindow& w) {
  w = EphemeralWindow::make(enum_from<EphemeralWindow::Mode>(j.at("mode"), "ephemeral.mode"),
                            j.at("n").get<std::int64_t>());
}

enum class ConversationKind { public_channel, private_group, direct };

NLOHMANN_JSON_SERIALIZE_ENUM(ConversationKind, {{ConversationKind::public_channel, "public_channel"},
                                                {ConversationKind::private_group, "private_group"},
                                                {ConversationKind::direct, "direct"}})

struct Conversation {
  std::string conv_id;
  ConversationKind kind = ConversationKind::private_group;
  std::set<AccountId> participants;
  std::optional<EphemeralWindow> ephemeral_policy;

  bool has_participant(const AccountId& a) const { return participants.count(a) > 0; }
};

inline void to_json(json& j, const Conversation& c) {
  j = json{{"conv_id", c.conv_id}, {"kind", c.kind}, {"participants", c.participants}};
  if (c.ephemeral_policy) j["ephemeral"] = *c.ephemeral_policy;
}

inline void from_json(const json& j, Conversation& c) {
  j.at("conv_id").get_to(c.conv_id);
  c.kind = enum_from<ConversationKind>(j.at("kind"), "kind");
  j.at("participants").get_to(c.participants);
  if (j.contains("ephemeral")) c.ephemeral_policy = j.at("ephemeral").get<EphemeralWindow>();
}

// ---------------------------------------------------------------------------
// Canonical serialization
//
// msg_id, conversation_id and sender are 4-byte big-endian length-prefixed;
// sent_at is a fixed 8-byte big-endian field; body is length-prefixed last.
// ---------------------------------------------------------------------------

struct CanonicalFields {
  std::string msg_id;
  std::string conversation_id;
  std::string sender;
  Millis sent_at = 0;
  std::string body;

  bool operator==(const CanonicalFields&) const = default;
};

inline Bytes canonical_serialize(const Message& m) {
  if (m.body.size() > kMaxBodyBytes)
    throw Error(errc::kOversize, "body of " + m.msg_id + " exceeds 16 KiB");
  for (const auto* f : {&m.msg_id, &m.conversation_id, &m.sender.value}) {
    if (f->size() > kMaxIdBytes) throw Error(errc::kOversize, "identifier field exceeds 256 bytes");
  }
  Bytes out;
  out.reserve(28 + m.msg_id.size() + m.conversation_id.size() + m.sender.value.size() + m.body.size());
  put_field(out, m.msg_id);
  put_field(out, m.conversation_id);
  put_field(out, m.sender.value);
  put_u64_be(out, static_cast<std::uint64_t>(m.sent_at));
  put_field(out, m.body);
  return out;
}

inline CanonicalFields parse_canonical(std::span<const std::uint8_t> in) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > in.size()) throw Error(errc::kValidation, "truncated canonical bytes");
  };
  auto field = [&](std::size_t bound) {
    need(4);
    const auto len = get_u32_be(in.subspan(pos));
    pos += 4;
    if (len > bound) throw Error(errc::kOversize, "canonical field exceeds bound");
    need(len);
    std::string s(in.begin() + static_cast<std::ptrdiff_t>(pos),
                  in.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
    return s;
  };
  CanonicalFields f;
  f.msg_id = field(kMaxIdBytes);
  f.conversation_id = field(kMaxIdBytes);
  f.sender = field(kMaxIdBytes);
  need(8);
  f.sent_at = static_cast<Millis>(get_u64_be(in.subspan(pos)));
  pos += 8;
  f.body = field(kMaxBodyBytes);
  if (pos != in.size()) throw Error(errc::kValidation, "trailing bytes after canonical message");
  return f;
}

inline Bytes canonical_serialize(const CanonicalFields& f) {
  Message m;
  m.msg_id = f.msg_id;
  m.conversation_id = f.conversation_id;
  m.sender = AccountId{f.sender};
  m.sent_at = f.sent_at;
  m.body = f.body;
  return canonical_serialize(m);
}

}  // namespace advrep
