#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "advrep/model.hpp"

namespace advrep {

// Structural filter selecting which messages a report may draw from.
class ScopePolicy {
 public:
  enum class Mode { all_in_conversation, last_n, time_window, participants, cross_conversation };

  static ScopePolicy all() { return ScopePolicy(Mode::all_in_conversation); }

  static ScopePolicy last_n(std::int64_t n) {
    if (n < 1) throw Error(errc::kValidation, "last_n requires n >= 1");
    ScopePolicy p(Mode::last_n);
    p.n_ = n;
    return p;
  }

  static ScopePolicy time_window(Millis start_ms, Millis end_ms) {
    if (start_ms > end_ms) throw Error(errc::kValidation, "time_window requires start <= end");
    ScopePolicy p(Mode::time_window);
    p.window_ = {start_ms, end_ms};
    return p;
  }

  static ScopePolicy participants(std::set<AccountId> senders) {
    ScopePolicy p(Mode::participants);
    p.senders_ = std::move(senders);
    return p;
  }

  static ScopePolicy cross_conversation(const ScopePolicy& inner) {
    if (inner.mode_ == Mode::cross_conversation)
      throw Error(errc::kValidation, "cross_conversation cannot nest cross_conversation");
    ScopePolicy p(Mode::cross_conversation);
    p.inner_ = std::make_shared<const ScopePolicy>(inner);
    return p;
  }

  Mode mode() const { return mode_; }
  std::int64_t n() const { return n_; }
  std::pair<Millis, Millis> window() const { return window_; }
  const std::set<AccountId>& senders() const { return senders_; }
  const ScopePolicy& inner() const { return *inner_; }

  bool operator==(const ScopePolicy& o) const {
    if (mode_ != o.mode_ || n_ != o.n_ || window_ != o.window_ || senders_ != o.senders_) return false;
    if (!inner_ || !o.inner_) return !inner_ && !o.inner_;
    return *inner_ == *o.inner_;
  }

 private:
  explicit ScopePolicy(Mode m) : mode_(m) {}

  Mode mode_;
  std::int64_t n_ = 0;
  std::pair<Millis, Millis> window_{0, 0};
  std::set<AccountId> senders_;
  std::shared_ptr<const ScopePolicy> inner_;
};

NLOHMANN_JSON_SERIALIZE_ENUM(ScopePolicy::Mode,
                             {{ScopePolicy::Mode::all_in_conversation, "all_in_conversation"},
                              {ScopePolicy::Mode::last_n, "last_n"},
                              {ScopePolicy::Mode::time_window, "time_window"},
                              {ScopePolicy::Mode::participants, "participants"},
                              {ScopePolicy::Mode::cross_conversation, "cross_conversation"}})

inline json scope_to_json(const ScopePolicy& p) {
  json j{{"mode", p.mode()}};
  switch (p.mode()) {
    case ScopePolicy::Mode::last_n: j["n"] = p.n(); break;
    case ScopePolicy::Mode::time_window: j["window"] = {p.window().first, p.window().second}; break;
    case ScopePolicy::Mode::participants: j["senders"] = p.senders(); break;
    case ScopePolicy::Mode::cross_conversation: j["inner"] = scope_to_json(p.inner()); break;
    case ScopePolicy::Mode::all_in_conversation: break;
  }
  return j;
}

inline ScopePolicy scope_from_json(const json& j) {
  if (!j.is_object() || !j.contains("mode")) throw Error(errc::kValidation, "scope policy needs a mode");
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "all_in_conversation") return ScopePolicy::all();
  if (mode == "last_n") return ScopePolicy::last_n(j.at("n").get<std::int64_t>());
  if (mode == "time_window") {
    const auto& w = j.at("window");
    if (!w.is_array() || w.size() != 2) throw Error(errc::kValidation, "window must be [start, end]");
    return ScopePolicy::time_window(w[0].get<Millis>(), w[1].get<Millis>());
  }
  if (mode == "participants") return ScopePolicy::participants(j.at("senders").get<std::set<AccountId>>());
  if (mode == "cross_conversation") return ScopePolicy::cross_conversation(scope_from_json(j.at("inner")));
  throw Error(errc::kValidation, "unknown scope mode '" + mode + "'");
}

struct ScopePreset {
  std::string name;
  ScopePolicy policy;
};

inline std::vector<ScopePreset> shipped_presets() {
  return {{"google-chat-50", ScopePolicy::last_n(50)},
          {"messenger-30", ScopePolicy::last_n(30)},
          {"whatsapp-5", ScopePolicy::last_n(5)}};
}

struct ConversationMessages {
  Conversation conversation;
  std::vector<Message> messages;  // ordered by (sent_at, msg_id)
};

// The two parties of a report; cross_conversation scopes target every
// conversation both of them take part in.
struct ScopeParties {
  AccountId reporter;
  AccountId reported;
};

namespace detail {

inline std::vector<Message> apply_single(const ScopePolicy& policy, const std::vector<Message>& msgs) {
  std::vector<Message> out;
  switch (policy.mode()) {
    case ScopePolicy::Mode::all_in_conversation: out = msgs; break;
    case ScopePolicy::Mode::last_n: {
      const auto keep = std::min<std::size_t>(static_cast<std::size_t>(policy.n()), msgs.size());
      out.assign(msgs.end() - static_cast<std::ptrdiff_t>(keep), msgs.end());
      break;
    }
    case ScopePolicy::Mode::time_window: {
      const auto [lo, hi] = policy.window();
      std::copy_if(msgs.begin(), msgs.end(), std::back_inserter(out),
                   [lo = lo, hi = hi](const Message& m) { return lo <= m.sent_at && m.sent_at <= hi; });
      break;
    }
    case ScopePolicy::Mode::participants:
      std::copy_if(msgs.begin(), msgs.end(), std::back_inserter(out),
                   [&](const Message& m) { return policy.senders().count(m.sender) > 0; });
      break;
    case ScopePolicy::Mode::cross_conversation:
      throw Error(errc::kValidation, "cross_conversation must be applied across conversations");
  }
  return out;
}

}  // namespace detail

// Non-cross policies apply to each conversation and concatenate in input
// order. cross_conversation applies its inner policy to every conversation
// shared by both parties and merges the results by (sent_at, msg_id).
inline std::vector<Message> apply_scope(const ScopePolicy& policy,
                                        const std::vector<ConversationMessages>& conversations,
                                        const std::optional<ScopeParties>& parties = std::nullopt) {
  std::vector<Message> out;
  if (policy.mode() != ScopePolicy::Mode::cross_conversation) {
    for (const auto& c : conversations) {
      auto part = detail::apply_single(policy, c.messages);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }
  for (const auto& c : conversations) {
    if (parties && !(c.conversation.has_participant(parties->reporter) &&
                     c.conversation.has_participant(parties->reported)))
      continue;
    auto part = detail::apply_single(policy.inner(), c.messages);
    out.insert(out.end(), part.begin(), part.end());
  }
  std::stable_sort(out.begin(), out.end(), message_order);
  return out;
}

}  // namespace advrep
