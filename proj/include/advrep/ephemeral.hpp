#pragma once

#include <algorithm>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "advrep/authenticator.hpp"
#include "advrep/model.hpp"

namespace advrep {

struct EphemeralSegment {
  std::string seg_id;
  std::string conversation_id;
  AccountId speaker;
  Millis captured_at = 0;
  Bytes payload;
  Bytes frank_tag;

  bool operator==(const EphemeralSegment&) const = default;
};

// Purged segments leave only their id and purge time.
struct Tombstone {
  std::string seg_id;
  Millis purged_at = 0;

  bool operator==(const Tombstone&) const = default;
};

inline Bytes canonical_segment(const EphemeralSegment& s) {
  Bytes out;
  put_field(out, "segment");
  put_field(out, s.seg_id);
  put_field(out, s.conversation_id);
  put_field(out, s.speaker.value);
  put_u64_be(out, static_cast<std::uint64_t>(s.captured_at));
  put_u32_be(out, static_cast<std::uint32_t>(s.payload.size()));
  out.insert(out.end(), s.payload.begin(), s.payload.end());
  return out;
}

inline Bytes frank_segment(const EphemeralSegment& s, const PlatformKey& key) {
  return digest_bytes(hmac_sha256(key.secret, canonical_segment(s)));
}

inline bool verify_segment(const EphemeralSegment& s, const PlatformKey& key) {
  return s.frank_tag.size() == 32 && constant_time_equal(frank_segment(s, key), s.frank_tag);
}

inline json render_segment(const EphemeralSegment& s) {
  return json{{"kind", "segment"},
              {"seg_id", s.seg_id},
              {"conversation_id", s.conversation_id},
              {"speaker", s.speaker.value},
              {"captured_at", s.captured_at},
              {"payload", base64_encode(s.payload)}};
}

// Inclusive window predicate for the seconds mode.
inline bool within_seconds(const EphemeralWindow& w, Millis captured_at, Millis now) {
  return now - captured_at <= w.n * 1000;
}

// Sliding window over one conversation's segments. Holds no clock: every
// purge decision is made against the `now` passed in.
class EphemeralBuffer {
 public:
  explicit EphemeralBuffer(EphemeralWindow window) : window_(window) {}

  const EphemeralWindow& window() const { return window_; }

  void append(EphemeralSegment segment, const PlatformKey& key, Millis now) {
    if (segment.captured_at > now)
      throw Error(errc::kClock, "segment " + segment.seg_id + " captured in the future");
    for (const auto& slot : slots_) {
      if (id_of(slot) == segment.seg_id) throw Error(errc::kValidation, "duplicate seg_id " + segment.seg_id);
    }
    segment.frank_tag = frank_segment(segment, key);
    slots_.emplace_back(std::move(segment));
    purge(now);
  }

  void purge(Millis now) {
    std::size_t live_from_end = 0;
    for (auto it = slots_.rbegin(); it != slots_.rend(); ++it) {
      auto* seg = std::get_if<EphemeralSegment>(&*it);
      if (!seg) continue;
      bool keep = true;
      if (window_.mode == EphemeralWindow::Mode::seconds) {
        keep = within_seconds(window_, seg->captured_at, now);
      } else {
        keep = live_from_end < static_cast<std::size_t>(window_.n);
      }
      if (keep) {
        ++live_from_end;
      } else {
        *it = Tombstone{seg->seg_id, now};
      }
    }
  }

  std::vector<EphemeralSegment> reportable(Millis now) {
    purge(now);
    std::vector<EphemeralSegment> out;
    for (const auto& slot : slots_) {
      if (const auto* seg = std::get_if<EphemeralSegment>(&slot)) out.push_back(*seg);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.captured_at < b.captured_at; });
    return out;
  }

  std::vector<Tombstone> tombstones() const {
    std::vector<Tombstone> out;
    for (const auto& slot : slots_) {
      if (const auto* t = std::get_if<Tombstone>(&slot)) out.push_back(*t);
    }
    return out;
  }

  // Copies of the named live segments; purged ids are reported together.
  std::vector<EphemeralSegment> pin(const std::vector<std::string>& seg_ids, Millis now) {
    purge(now);
    std::vector<EphemeralSegment> out;
    std::vector<std::string> expired;
    for (const auto& id : seg_ids) {
      auto it = std::find_if(slots_.begin(), slots_.end(), [&](const Slot& s) { return id_of(s) == id; });
      if (it == slots_.end()) throw Error(errc::kNotFound, "unknown segment " + id);
      if (const auto* seg = std::get_if<EphemeralSegment>(&*it)) out.push_back(*seg);
      else expired.push_back(id);
    }
    if (!expired.empty()) {
      std::string list;
      for (const auto& id : expired) list += (list.empty() ? "" : ",") + id;
      throw Error(errc::kWindowExpired, list);
    }
    return out;
  }

 private:
  using Slot = std::variant<EphemeralSegment, Tombstone>;

  static const std::string& id_of(const Slot& s) {
    return std::visit([](const auto& v) -> const std::string& { return v.seg_id; }, s);
  }

  EphemeralWindow window_;
  std::vector<Slot> slots_;
};

// Per-conversation buffers; appends to one conversation are serialized.
class EphemeralStore {
 public:
  void open(const std::string& conv_id, EphemeralWindow window) {
    std::unique_lock lock(mu_);
    if (buffers_.count(conv_id)) throw Error(errc::kValidation, "ephemeral window for " + conv_id + " is immutable");
    buffers_.emplace(conv_id, EphemeralBuffer(window));
  }

  bool has(const std::string& conv_id) const {
    std::shared_lock lock(mu_);
    return buffers_.count(conv_id) > 0;
  }

  void append(EphemeralSegment segment, const PlatformKey& key, Millis now) {
    std::unique_lock lock(mu_);
    buffer(segment.conversation_id).append(std::move(segment), key, now);
  }

  std::vector<EphemeralSegment> reportable(const std::string& conv_id, Millis now) {
    std::unique_lock lock(mu_);
    return buffer(conv_id).reportable(now);
  }

  std::vector<EphemeralSegment> attach(const std::string& conv_id, const std::vector<std::string>& seg_ids, Millis now) {
    std::unique_lock lock(mu_);
    return buffer(conv_id).pin(seg_ids, now);
  }

  std::vector<Tombstone> tombstones(const std::string& conv_id) const {
    std::shared_lock lock(mu_);
    auto it = buffers_.find(conv_id);
    if (it == buffers_.end()) throw Error(errc::kNotFound, "no ephemeral buffer for " + conv_id);
    return it->second.tombstones();
  }

 private:
  EphemeralBuffer& buffer(const std::string& conv_id) {
    auto it = buffers_.find(conv_id);
    if (it == buffers_.end()) throw Error(errc::kNotFound, "no ephemeral buffer for " + conv_id);
    return it->second;
  }

  mutable std::shared_mutex mu_;
  std::map<std::string, EphemeralBuffer> buffers_;
};

}  // namespace advrep
