#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "advrep/model.hpp"

namespace advrep {

// ---------------------------------------------------------------------------
// View-limited, expiring access grants
// ---------------------------------------------------------------------------

struct AccessGrant {
  std::string grant_id;
  std::string report_id;
  std::set<AccountId> grantees;
  std::optional<Millis> expires_at;
  std::optional<std::int64_t> remaining_views;  // nullopt = unlimited
  bool revoked = false;

  bool expired(Millis now) const { return expires_at && now > *expires_at; }
  bool exhausted() const { return remaining_views && *remaining_views <= 0; }
};

inline void to_json(json& j, const AccessGrant& g) {
  j = json{{"grant_id", g.grant_id},
           {"report_id", g.report_id},
           {"grantees", g.grantees},
           {"expires_at", g.expires_at ? json(*g.expires_at) : json(nullptr)},
           {"remaining_views", g.remaining_views ? json(*g.remaining_views) : json("unlimited")},
           {"revoked", g.revoked}};
}

// Grant bookkeeping is linearizable: a fetch's check, render and decrement
// happen under one lock, so concurrent fetches never overspend a grant.
class GrantTable {
 public:
  AccessGrant add(std::string grant_id, std::string report_id, std::set<AccountId> grantees,
                  std::optional<Millis> expires_at, std::optional<std::int64_t> view_limit) {
    if (view_limit && *view_limit < 1) throw Error(errc::kValidation, "view_limit must be positive");
    if (grantees.empty()) throw Error(errc::kValidation, "grant needs at least one grantee");
    std::lock_guard lock(mu_);
    AccessGrant g{std::move(grant_id), std::move(report_id), std::move(grantees), expires_at, view_limit, false};
    grants_.push_back(g);
    return g;
  }

  // Runs `render` against the first live grant covering `moderator` and
  // spends one view only if it returns normally. Denials throw no-grant,
  // grant-expired or grant-exhausted.
  template <typename Render>
  auto fetch(const std::string& report_id, const AccountId& moderator, Millis now, Render&& render) {
    std::lock_guard lock(mu_);
    AccessGrant* live = nullptr;
    bool any_expired = false;
    bool any_exhausted = false;
    for (auto& g : grants_) {
      if (g.report_id != report_id || g.revoked || !g.grantees.count(moderator)) continue;
      if (g.expired(now)) any_expired = true;
      else if (g.exhausted()) any_exhausted = true;
      else if (!live) live = &g;
    }
    if (!live) {
      if (any_expired) throw Error(errc::kGrantExpired, "grant for " + report_id + " has expired");
      if (any_exhausted) throw Error(errc::kGrantExhausted, "grant for " + report_id + " has no views left");
      throw Error(errc::kNoGrant, moderator.value + " holds no grant for " + report_id);
    }
    auto result = render(*live);
    if (live->remaining_views) --*live->remaining_views;
    return result;
  }

  std::vector<std::string> revoke_all(const std::string& report_id) {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (auto& g : grants_) {
      if (g.report_id == report_id && !g.revoked) {
        g.revoked = true;
        out.push_back(g.grant_id);
      }
    }
    return out;
  }

  std::vector<AccessGrant> for_report(const std::string& report_id) const {
    std::lock_guard lock(mu_);
    std::vector<AccessGrant> out;
    for (const auto& g : grants_)
      if (g.report_id == report_id) out.push_back(g);
    return out;
  }

 private:
  mutable std::mutex mu_;
  std::vector<AccessGrant> grants_;
};

// ---------------------------------------------------------------------------
// Identifier disclosure
// ---------------------------------------------------------------------------

enum class IdentifierPolicy { immediate, delayed_until_decision, senior_only };

NLOHMANN_JSON_SERIALIZE_ENUM(IdentifierPolicy, {{IdentifierPolicy::immediate, "immediate"},
                                                {IdentifierPolicy::delayed_until_decision, "delayed_until_decision"},
                                                {IdentifierPolicy::senior_only, "senior_only"}})

// Whether a caller sees raw account identifiers under `policy`.
// `decided` is true once the report has reached a decision.
inline bool identifiers_visible(IdentifierPolicy policy, bool decided, bool caller_is_senior) {
  switch (policy) {
    case IdentifierPolicy::immediate: return true;
    case IdentifierPolicy::delayed_until_decision: return decided;
    case IdentifierPolicy::senior_only: return caller_is_senior;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Report-scoped pseudonyms
// ---------------------------------------------------------------------------

enum class PartyRole { reporter, reported, bystander };

NLOHMANN_JSON_SERIALIZE_ENUM(PartyRole, {{PartyRole::reporter, "reporter"},
                                         {PartyRole::reported, "reported"},
                                         {PartyRole::bystander, "bystander"}})

struct Pseudonym {
  std::string label;
  PartyRole role = PartyRole::bystander;

  bool operator==(const Pseudonym&) const = default;
};

// Ordinal labels: Participant-1 is always the reporter, Participant-2 the
// reported party, then bystanders in order of first appearance.
class PseudonymTable {
 public:
  PseudonymTable() = default;
  PseudonymTable(const AccountId& reporter, const AccountId& reported) {
    add(reporter, PartyRole::reporter);
    add(reported, PartyRole::reported);
  }

  const Pseudonym& add(const AccountId& account, PartyRole role) {
    auto it = by_account_.find(account);
    if (it != by_account_.end()) return entries_[it->second].second;
    entries_.push_back({account, Pseudonym{"Participant-" + std::to_string(entries_.size() + 1), role}});
    by_account_[account] = entries_.size() - 1;
    return entries_.back().second;
  }

  std::optional<Pseudonym> of(const AccountId& account) const {
    auto it = by_account_.find(account);
    if (it == by_account_.end()) return std::nullopt;
    return entries_[it->second].second;
  }

  std::optional<AccountId> resolve(const std::string& label) const {
    for (const auto& [acct, p] : entries_)
      if (p.label == label) return acct;
    return std::nullopt;
  }

  const std::vector<std::pair<AccountId, Pseudonym>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<AccountId, Pseudonym>> entries_;
  std::map<AccountId, std::size_t> by_account_;
};

// ---------------------------------------------------------------------------
// Moderator tags
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxTagChars = 64;

struct ModeratorTag {
  AccountId subject;
  std::string label;
  std::string author;  // moderator handle, never an account id
  Millis created_at = 0;
};

class TagStore {
 public:
  void assign(const AccountId& subject, std::string label, std::string author, Millis at) {
    if (label.empty()) throw Error(errc::kValidation, "tag label must be non-empty");
    if (label.size() > kMaxTagChars) throw Error(errc::kValidation, "tag label exceeds 64 characters");
    std::lock_guard lock(mu_);
    tags_[subject].push_back({subject, std::move(label), std::move(author), at});
  }

  std::vector<ModeratorTag> list(const AccountId& subject) const {
    std::lock_guard lock(mu_);
    auto it = tags_.find(subject);
    return it == tags_.end() ? std::vector<ModeratorTag>{} : it->second;
  }

 private:
  mutable std::mutex mu_;
  std::map<AccountId, std::vector<ModeratorTag>> tags_;
};

}  // namespace advrep
