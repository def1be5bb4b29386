#pragma once

#include <functional>
#include <map>
#include <optional>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "advrep/crypto.hpp"
#include "advrep/model.hpp"

namespace advrep {

struct PlatformKey {
  std::string key_id;
  Digest secret{};
};

// ---------------------------------------------------------------------------
// Franking
// ---------------------------------------------------------------------------

inline Bytes frank(const Message& m, const PlatformKey& key) {
  return digest_bytes(hmac_sha256(key.secret, canonical_serialize(m)));
}

inline bool verify_frank(const Message& m, const PlatformKey& key) {
  if (m.frank_tag.size() != 32) return false;
  try {
    return constant_time_equal(frank(m, key), m.frank_tag);
  } catch (const Error&) {
    return false;
  }
}

// Keys are retained read-only after rotation so older tokens keep verifying.
class KeyStore {
 public:
  KeyStore() = default;
  explicit KeyStore(PlatformKey active) { add(std::move(active), true); }

  void add(PlatformKey key, bool make_active) {
    std::unique_lock lock(mu_);
    if (make_active) active_ = key.key_id;
    keys_[key.key_id] = std::move(key);
  }

  // Installs a new signing key; previous keys stay available for verification.
  void rotate(PlatformKey next) { add(std::move(next), true); }

  PlatformKey active() const {
    std::shared_lock lock(mu_);
    if (!active_) throw Error(errc::kConfig, "key store has no active key");
    return keys_.at(*active_);
  }

  std::optional<PlatformKey> find(const std::string& key_id) const {
    std::shared_lock lock(mu_);
    auto it = keys_.find(key_id);
    if (it == keys_.end()) return std::nullopt;
    return it->second;
  }

  // Only the key store file ever holds secrets.
  json to_file_json() const {
    std::shared_lock lock(mu_);
    json keys = json::array();
    for (const auto& [id, k] : keys_)
      keys.push_back({{"key_id", id}, {"secret", base64_encode(k.secret)}, {"active", active_ && *active_ == id}});
    return json{{"keys", keys}};
  }

  static KeyStore from_file_json(const json& j) {
    KeyStore ks;
    for (const auto& k : j.at("keys")) {
      PlatformKey key;
      key.key_id = k.at("key_id").get<std::string>();
      const auto secret = base64_decode(k.at("secret").get<std::string>());
      if (secret.size() != key.secret.size()) throw Error(errc::kConfig, "key " + key.key_id + ": secret must be 32 bytes");
      std::copy(secret.begin(), secret.end(), key.secret.begin());
      ks.add(std::move(key), k.value("active", false));
    }
    if (!ks.active_) throw Error(errc::kConfig, "key store has no active key");
    return ks;
  }

  KeyStore(const KeyStore& o) {
    std::shared_lock lock(o.mu_);
    keys_ = o.keys_;
    active_ = o.active_;
  }
  KeyStore& operator=(const KeyStore& o) {
    if (this != &o) {
      std::scoped_lock lock(mu_, o.mu_);
      keys_ = o.keys_;
      active_ = o.active_;
    }
    return *this;
  }

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, PlatformKey> keys_;
  std::optional<std::string> active_;
};

// ---------------------------------------------------------------------------
// Bundle attestation
// ---------------------------------------------------------------------------

struct AttestationToken {
  Digest bundle_digest{};
  std::string report_id;
  Millis issued_at = 0;
  std::string key_id;
  Digest mac{};

  bool operator==(const AttestationToken&) const = default;
};

inline void to_json(json& j, const AttestationToken& t) {
  j = json{{"bundle_digest", base64_encode(t.bundle_digest)},
           {"report_id", t.report_id},
           {"issued_at", t.issued_at},
           {"key_id", t.key_id},
           {"mac", base64_encode(t.mac)}};
}

inline void from_json(const json& j, AttestationToken& t) {
  auto digest_field = [&](const char* name) {
    const auto raw = base64_decode(j.at(name).get<std::string>());
    if (raw.size() != 32) throw Error(errc::kValidation, std::string(name) + " must be 32 bytes");
    Digest d{};
    std::copy(raw.begin(), raw.end(), d.begin());
    return d;
  };
  t.bundle_digest = digest_field("bundle_digest");
  t.report_id = j.at("report_id").get<std::string>();
  t.issued_at = j.at("issued_at").get<Millis>();
  t.key_id = j.at("key_id").get<std::string>();
  t.mac = digest_field("mac");
}

// SHA-256 over the concatenated compact, key-sorted JSON of each view.
inline Digest bundle_digest(const json& bundle) {
  std::string buf;
  for (const auto& view : bundle) buf += view.dump();
  return sha256(buf);
}

inline Digest token_mac(const Digest& digest, const std::string& report_id, Millis issued_at, const PlatformKey& key) {
  Bytes msg(digest.begin(), digest.end());
  put_field(msg, report_id);
  put_u64_be(msg, static_cast<std::uint64_t>(issued_at));
  return hmac_sha256(key.secret, msg);
}

// Returns true when the stored source of a rendered item (message or
// ephemeral segment) carries a valid frank tag.
using SourceVerifier = std::function<bool(const json& item)>;

inline std::string item_ref(const json& item) {
  if (item.contains("msg_id")) return item.at("msg_id").get<std::string>();
  if (item.contains("seg_id")) return item.at("seg_id").get<std::string>();
  return "<unknown>";
}

inline AttestationToken attest_bundle(const json& bundle, const std::string& report_id, const PlatformKey& key,
                                      Millis issued_at, const SourceVerifier& verify_source) {
  for (const auto& item : bundle) {
    if (!verify_source(item))
      throw Error(errc::kAttestationRefused, "source of " + item_ref(item) + " is missing or fails frank verification");
  }
  AttestationToken t;
  t.bundle_digest = bundle_digest(bundle);
  t.report_id = report_id;
  t.issued_at = issued_at;
  t.key_id = key.key_id;
  t.mac = token_mac(t.bundle_digest, report_id, issued_at, key);
  return t;
}

inline bool verify_bundle(const json& bundle, const AttestationToken& token, const PlatformKey& key) {
  if (token.key_id != key.key_id) return false;
  const auto digest = bundle_digest(bundle);
  if (!constant_time_equal(digest, token.bundle_digest)) return false;
  return constant_time_equal(token_mac(digest, token.report_id, token.issued_at, key), token.mac);
}

struct VerificationReport {
  bool mac_valid = false;
  std::string report_id;
  bool pseudonymized = false;
  std::vector<std::string> identity_attribution;  // sender AccountId per view
  std::vector<std::string> anonymized_roles;      // role per view when pseudonymized
};

inline void to_json(json& j, const VerificationReport& r) {
  j = json{{"mac_valid", r.mac_valid}, {"report_id", r.report_id}, {"pseudonymized", r.pseudonymized}};
  if (r.pseudonymized) j["anonymized_roles"] = r.anonymized_roles;
  else j["identity_attribution"] = r.identity_attribution;
}

// Verifies a forwarded bundle. Attribution always uses the account identifier
// carried in the bundle, never a display name; pseudonymized bundles expose
// only the verified roles.
inline VerificationReport verify_forwarded(const json& bundle, const AttestationToken& token, const KeyStore& keys,
                                           const std::optional<std::string>& expected_report_id = std::nullopt) {
  const auto key = keys.find(token.key_id);
  if (!key) throw Error(errc::kUnknownKey, "unknown key_id '" + token.key_id + "'");
  VerificationReport r;
  r.report_id = token.report_id;
  r.mac_valid = bundle.is_array() && verify_bundle(bundle, token, *key) &&
                (!expected_report_id || *expected_report_id == token.report_id);
  for (const auto& view : bundle) {
    if (view.contains("sender_role")) r.pseudonymized = true;
  }
  for (const auto& view : bundle) {
    const std::string who = view.contains("sender") ? view.at("sender").get<std::string>()
                                                    : view.value("speaker", std::string{});
    if (r.pseudonymized) r.anonymized_roles.push_back(view.value("sender_role", std::string("unknown")));
    else r.identity_attribution.push_back(who);
  }
  return r;
}

// Free media (screenshots, recordings) is always unattested; only items that
// pass token or frank verification are attested.
enum class ProvenanceClass { attested, unattested };

NLOHMANN_JSON_SERIALIZE_ENUM(ProvenanceClass,
                             {{ProvenanceClass::attested, "attested"}, {ProvenanceClass::unattested, "unattested"}})

// ---------------------------------------------------------------------------
// Impersonation
// ---------------------------------------------------------------------------

enum class IdentityMatch { match, mismatch };

NLOHMANN_JSON_SERIALIZE_ENUM(IdentityMatch, {{IdentityMatch::match, "match"}, {IdentityMatch::mismatch, "mismatch"}})

// Identity is the account identifier alone; a shared display name never
// establishes a match.
inline IdentityMatch detect_impersonation(const UserProfile& claimed, const AccountId& evidence_sender) {
  return claimed.account_id == evidence_sender ? IdentityMatch::match : IdentityMatch::mismatch;
}

}  // namespace advrep
