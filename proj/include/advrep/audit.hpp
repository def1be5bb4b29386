#pragma once

#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "advrep/crypto.hpp"
#include "advrep/model.hpp"

namespace advrep {

// One append-only, hash-chained record. `detail` carries the compact JSON
// parameters of the action so the log alone can replay what happened.
struct AuditEvent {
  std::uint64_t seq = 0;
  std::string actor;
  std::string action;
  std::string object;
  std::string detail;
  Millis at = 0;
  Digest prev_hash{};
  Digest hash{};

  bool operator==(const AuditEvent&) const = default;

  json detail_json() const { return detail.empty() ? json::object() : json::parse(detail); }
};

inline Digest audit_hash(std::uint64_t seq, const std::string& actor, const std::string& action,
                         const std::string& object, const std::string& detail, Millis at, const Digest& prev) {
  Bytes buf;
  put_u64_be(buf, seq);
  put_field(buf, actor);
  put_field(buf, action);
  put_field(buf, object);
  put_field(buf, detail);
  put_u64_be(buf, static_cast<std::uint64_t>(at));
  buf.insert(buf.end(), prev.begin(), prev.end());
  return sha256(buf);
}

inline Digest audit_hash(const AuditEvent& e) {
  return audit_hash(e.seq, e.actor, e.action, e.object, e.detail, e.at, e.prev_hash);
}

inline void to_json(json& j, const AuditEvent& e) {
  j = json{{"seq", e.seq},       {"actor", e.actor}, {"action", e.action},
           {"object", e.object}, {"detail", e.detail}, {"at", e.at},
           {"prev_hash", base64_encode(e.prev_hash)}, {"hash", base64_encode(e.hash)}};
}

inline void from_json(const json& j, AuditEvent& e) {
  auto digest = [&](const char* name) {
    const auto raw = base64_decode(j.at(name).get<std::string>());
    Digest d{};
    if (raw.size() != d.size()) throw Error(errc::kValidation, std::string(name) + " must be 32 bytes");
    std::copy(raw.begin(), raw.end(), d.begin());
    return d;
  };
  e.seq = j.at("seq").get<std::uint64_t>();
  e.actor = j.at("actor").get<std::string>();
  e.action = j.at("action").get<std::string>();
  e.object = j.at("object").get<std::string>();
  e.detail = j.value("detail", std::string{});
  e.at = j.at("at").get<Millis>();
  e.prev_hash = digest("prev_hash");
  e.hash = digest("hash");
}

struct ChainCheck {
  bool ok = true;
  std::optional<std::uint64_t> first_broken;  // 1-based position where the check first fails
};

// True iff seq runs gaplessly from 1 and every hash recomputes and links.
inline ChainCheck verify_audit_chain(const std::vector<AuditEvent>& log) {
  Digest prev{};
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& e = log[i];
    const auto expected_seq = static_cast<std::uint64_t>(i + 1);
    if (e.seq != expected_seq || e.prev_hash != prev || audit_hash(e) != e.hash) return {false, expected_seq};
    prev = e.hash;
  }
  return {true, std::nullopt};
}

// Linearizable append-only log; readers get a prefix-consistent copy.
class AuditLog {
 public:
  AuditEvent append(std::string actor, std::string action, std::string object, const json& detail, Millis at) {
    std::lock_guard lock(mu_);
    AuditEvent e;
    e.seq = events_.size() + 1;
    e.actor = std::move(actor);
    e.action = std::move(action);
    e.object = std::move(object);
    e.detail = detail.is_null() ? std::string{} : detail.dump();
    e.at = at;
    e.prev_hash = events_.empty() ? Digest{} : events_.back().hash;
    e.hash = audit_hash(e);
    events_.push_back(std::move(e));
    return events_.back();
  }

  std::vector<AuditEvent> snapshot() const {
    std::lock_guard lock(mu_);
    return events_;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return events_.size();
  }

  Digest head() const {
    std::lock_guard lock(mu_);
    return events_.empty() ? Digest{} : events_.back().hash;
  }

 private:
  mutable std::mutex mu_;
  std::vector<AuditEvent> events_;
};

inline std::string to_ndjson(const std::vector<AuditEvent>& events) {
  std::string out;
  for (const auto& e : events) out += json(e).dump() + "\n";
  return out;
}

inline std::vector<AuditEvent> from_ndjson(const std::string& text) {
  std::vector<AuditEvent> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line).get<AuditEvent>());
  }
  return out;
}

}  // namespace advrep
