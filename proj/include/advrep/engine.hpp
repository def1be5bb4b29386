#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "advrep/access.hpp"
#include "advrep/audit.hpp"
#include "advrep/authenticator.hpp"
#include "advrep/disclosure.hpp"
#include "advrep/ephemeral.hpp"
#include "advrep/lifecycle.hpp"
#include "advrep/minimizer.hpp"
#include "advrep/model.hpp"
#include "advrep/scope.hpp"

namespace advrep {

inline constexpr Millis kMinuteMs = 60'000;
inline constexpr Millis kDayMs = 86'400'000;
inline const AccountId kSystem{"system"};

struct EngineConfig {
  std::map<std::string, ScopePolicy> presets = [] {
    std::map<std::string, ScopePolicy> m;
    for (auto& p : shipped_presets()) m.emplace(p.name, p.policy);
    return m;
  }();
  MinimizerConfig minimizer;
  IdentifierPolicy identifier_policy = IdentifierPolicy::delayed_until_decision;
  std::optional<EphemeralWindow> ephemeral_default;
  std::map<std::string, EphemeralWindow> conversation_windows;
  std::int64_t appeal_window_days = 7;
  std::size_t moderators_per_report = 1;
  std::int64_t flood_threshold_per_minute = 10;
};

// One engine call: who, when, what. The HTTP layer, the persistence journal
// and the harness all drive the engine through commands.
struct Command {
  std::string op;
  AccountId principal;
  Millis now = 0;
  json args = json::object();

  bool operator==(const Command&) const = default;
};

inline void to_json(json& j, const Command& c) {
  j = json{{"op", c.op}, {"principal", c.principal}, {"now", c.now}, {"args", c.args}};
}
inline void from_json(const json& j, Command& c) {
  c.op = j.at("op").get<std::string>();
  c.principal = j.at("principal").get<AccountId>();
  c.now = j.at("now").get<Millis>();
  c.args = j.value("args", json::object());
}

// Commands that neither change state nor append audit events.
inline bool is_read_only(const std::string& op) {
  static const std::set<std::string> kReads{"report.get",     "moderator.profile", "audit.report", "audit.full",
                                            "inbox.list",     "tag.list",          "lifecycle.table",
                                            "state.dump"};
  return kReads.count(op) > 0;
}

struct FreeMediaItem {
  std::string item_id;
  AccountId submitted_by;
  std::string claimed_sender;
  std::string description;
  std::string content;
  Millis submitted_at = 0;
  ProvenanceClass provenance = ProvenanceClass::unattested;
};

struct Testimony {
  std::string invite_id;
  AccountId bystander;
  std::string msg_id;
  std::string account;
  ProvenanceClass provenance = ProvenanceClass::unattested;
};

struct Notice {
  AccountId recipient;
  std::string kind;
  json body;
  Millis at = 0;
};

struct Report {
  std::string report_id;
  AccountId reporter;
  AccountId reported;
  std::string reason;
  ScopePolicy scope = ScopePolicy::all();
  std::vector<std::string> conversation_ids;
  std::vector<std::string> candidates;  // in-scope msg_ids, conversation order
  std::map<std::string, VisibilityLevel> levels;
  std::vector<EphemeralSegment> pinned;
  std::vector<FreeMediaItem> free_media;
  IdentifierPolicy identifier_policy = IdentifierPolicy::delayed_until_decision;
  PseudonymTable pseudonyms;
  ReportState state = ReportState::filed;
  Millis filed_at = 0;
  std::vector<ModeratorRecord> assigned;
  std::set<std::string> flags;
  std::vector<std::string> annotations;
  std::vector<std::string> request_ids;
  std::vector<std::string> invite_ids;
  std::vector<Testimony> testimony;
  std::vector<json> identity_mismatches;
  std::optional<AttestationToken> attestation;
  std::optional<Decision> decision;
  std::optional<Millis> notified_at;
  std::optional<Millis> punishment_applied_at;
  bool punishment_lifted = false;
  std::optional<std::string> appeal_statement;
  std::optional<std::string> termination_reason;
};

inline bool is_decided(ReportState s) {
  switch (s) {
    case ReportState::decided:
    case ReportState::notified:
    case ReportState::appeal_open:
    case ReportState::appeal_resolved:
    case ReportState::closed:
    case ReportState::dismissed: return true;
    default: return false;
  }
}

class Engine {
 public:
  explicit Engine(EngineConfig config, KeyStore keys, std::unique_ptr<Answerer> answerer = nullptr)
      : config_(std::move(config)),
        keys_(std::move(keys)),
        answerer_(answerer ? std::move(answerer) : std::make_unique<StubAnswerer>()) {}

  const EngineConfig& config() const { return config_; }
  const KeyStore& keys() const { return keys_; }

  json execute(const Command& cmd) {
    std::lock_guard lock(mu_);
    if (!is_read_only(cmd.op)) sweep(cmd.now);
    const auto& handlers = dispatch();
    auto it = handlers.find(cmd.op);
    if (it == handlers.end()) throw Error(errc::kNotFound, "unknown operation '" + cmd.op + "'");
    try {
      return (this->*(it->second))(cmd.principal, cmd.args, cmd.now);
    } catch (const Error& e) {
      if (e.code() == errc::kForbidden || e.code() == errc::kUnauthorized) {
        audit_.append(cmd.principal.value, "access.denied", object_for(cmd),
                      json{{"op", cmd.op}, {"error", e.code()}, {"detail", e.detail()}}, cmd.now);
      }
      throw;
    }
  }

  // Convenience wrapper used by tests and the harness.
  json run(const std::string& op, const AccountId& principal, Millis now, json args = json::object()) {
    return execute(Command{op, principal, now, std::move(args)});
  }

  std::vector<AuditEvent> audit_log() const { return audit_.snapshot(); }
  Digest audit_head() const { return audit_.head(); }

  // Read accessors for tests; copies so callers never observe mutation.
  std::optional<Report> report(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = reports_.find(id);
    if (it == reports_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<Message> message(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = messages_.find(id);
    if (it == messages_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<DisclosureRequest> request(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = requests_.find(id);
    if (it == requests_.end()) return std::nullopt;
    return it->second;
  }
  std::vector<AccessGrant> grants(const std::string& report_id) const { return grants_.for_report(report_id); }
  std::vector<Notice> inbox(const AccountId& who) const {
    std::lock_guard lock(mu_);
    auto it = inbox_.find(who);
    return it == inbox_.end() ? std::vector<Notice>{} : it->second;
  }

  // Replaces a stored message body without re-franking; models storage
  // corruption for attestation tests.
  void corrupt_message_for_testing(const std::string& msg_id, const std::string& body) {
    std::lock_guard lock(mu_);
    messages_.at(msg_id).body = body;
  }

 private:
  using Handler = json (Engine::*)(const AccountId&, const json&, Millis);

  static const std::map<std::string, Handler>& dispatch() {
    static const std::map<std::string, Handler> kHandlers{
        {"profile.add", &Engine::op_profile_add},
        {"conversation.add", &Engine::op_conversation_add},
        {"message.post", &Engine::op_message_post},
        {"segment.append", &Engine::op_segment_append},
        {"segment.reportable", &Engine::op_segment_reportable},
        {"report.file", &Engine::op_report_file},
        {"report.scope", &Engine::op_report_scope},
        {"report.views", &Engine::op_report_views},
        {"report.get", &Engine::op_report_get},
        {"report.grant", &Engine::op_report_grant},
        {"report.evidence", &Engine::op_report_evidence},
        {"report.export", &Engine::op_report_export},
        {"report.resolve", &Engine::op_report_resolve},
        {"report.assign", &Engine::op_report_assign},
        {"report.decide", &Engine::op_report_decide},
        {"report.notify", &Engine::op_report_notify},
        {"report.appeal", &Engine::op_report_appeal},
        {"report.resolve_appeal", &Engine::op_report_resolve_appeal},
        {"report.close", &Engine::op_report_close},
        {"report.terminate", &Engine::op_report_terminate},
        {"disclosure.open", &Engine::op_disclosure_open},
        {"disclosure.respond", &Engine::op_disclosure_respond},
        {"disclosure.withdraw", &Engine::op_disclosure_withdraw},
        {"invite.create", &Engine::op_invite_create},
        {"invite.consent", &Engine::op_invite_consent},
        {"invite.finding", &Engine::op_invite_finding},
        {"tag.assign", &Engine::op_tag_assign},
        {"tag.list", &Engine::op_tag_list},
        {"bundle.import", &Engine::op_bundle_import},
        {"moderator.profile", &Engine::op_moderator_profile},
        {"audit.report", &Engine::op_audit_report},
        {"audit.full", &Engine::op_audit_full},
        {"inbox.list", &Engine::op_inbox_list},
        {"lifecycle.table", &Engine::op_lifecycle_table},
        {"state.dump", &Engine::op_state_dump},
    };
    return kHandlers;
  }

  static std::string object_for(const Command& cmd) {
    if (cmd.args.contains("report_id")) return "report/" + cmd.args.at("report_id").get<std::string>();
    if (cmd.args.contains("request_id")) return "request/" + cmd.args.at("request_id").get<std::string>();
    if (cmd.args.contains("invite_id")) return "invite/" + cmd.args.at("invite_id").get<std::string>();
    return "op/" + cmd.op;
  }

  // -------------------------------------------------------------------------
  // Helpers
  // -------------------------------------------------------------------------

  const UserProfile& profile(const AccountId& a) const {
    auto it = profiles_.find(a);
    if (it == profiles_.end()) throw Error(errc::kNotFound, "unknown account " + a.value);
    return it->second;
  }

  bool is_moderator(const AccountId& a) const {
    auto it = profiles_.find(a);
    return it != profiles_.end() && it->second.is_moderator();
  }

  bool has_role(const AccountId& a, Role r) const {
    auto it = profiles_.find(a);
    return it != profiles_.end() && it->second.has_role(r);
  }

  void require_system(const AccountId& p) const {
    if (p != kSystem) throw Error(errc::kForbidden, "platform-only operation");
  }

  Report& report_ref(const json& args) {
    const auto id = args.at("report_id").get<std::string>();
    auto it = reports_.find(id);
    if (it == reports_.end()) throw Error(errc::kNotFound, "unknown report " + id);
    return it->second;
  }

  static bool is_assigned(const Report& r, const AccountId& a) {
    return std::any_of(r.assigned.begin(), r.assigned.end(), [&](const auto& m) { return m.account == a; });
  }

  static void require_reporter(const Report& r, const AccountId& p) {
    if (r.reporter != p) throw Error(errc::kForbidden, p.value + " is not the reporter of " + r.report_id);
  }

  static void require_assigned(const Report& r, const AccountId& p) {
    if (!is_assigned(r, p)) throw Error(errc::kForbidden, p.value + " is not assigned to " + r.report_id);
  }

  static std::string report_object(const Report& r) { return "report/" + r.report_id; }

  std::string handle_of(const AccountId& a) const {
    for (const auto& m : pool_)
      if (m.account == a) return m.profile.handle;
    return a.value;
  }

  std::optional<ModeratorRecord> moderator_by_handle_or_id(const std::string& s) const {
    for (const auto& m : pool_)
      if (m.profile.handle == s || m.account.value == s) return m;
    return std::nullopt;
  }

  void notify_inbox(const AccountId& who, std::string kind, json body, Millis now) {
    inbox_[who].push_back({who, std::move(kind), std::move(body), now});
  }

  std::vector<ConversationMessages> conversations_for(const std::vector<std::string>& ids) const {
    std::vector<ConversationMessages> out;
    for (const auto& id : ids) {
      auto c = conversations_.find(id);
      if (c == conversations_.end()) throw Error(errc::kNotFound, "unknown conversation " + id);
      ConversationMessages cm{c->second, {}};
      auto ms = conv_messages_.find(id);
      if (ms != conv_messages_.end())
        for (const auto& mid : ms->second) cm.messages.push_back(messages_.at(mid));
      out.push_back(std::move(cm));
    }
    return out;
  }

  bool in_scoped_conversations(const Report& r, const AccountId& a) const {
    for (const auto& id : r.conversation_ids)
      if (conversations_.at(id).has_participant(a)) return true;
    return false;
  }

  bool identifiers_visible_to(const Report& r, const AccountId& caller) const {
    if (caller == r.reporter) return true;
    return identifiers_visible(r.identifier_policy, is_decided(r.state), has_role(caller, Role::senior_moderator));
  }

  std::string party(const Report& r, const AccountId& a, bool visible) const {
    if (visible) return a.value;
    auto p = r.pseudonyms.of(a);
    return p ? p->label : std::string("Participant-?");
  }

  std::optional<MinimizedView> view_of(const Report& r, const std::string& msg_id) const {
    const auto& m = messages_.at(msg_id);
    auto lvl = r.levels.find(msg_id);
    return minimize(m, lvl == r.levels.end() ? VisibilityLevel::full() : lvl->second, config_.minimizer,
                    answerer_.get());
  }

  json render_bundle_for(const Report& r, bool visible) const {
    json bundle = json::array();
    for (const auto& id : r.candidates) {
      auto v = view_of(r, id);
      if (!v) continue;
      std::optional<SenderLabel> label;
      if (!visible) {
        auto p = r.pseudonyms.of(v->sender);
        label = SenderLabel{p ? p->label : "Participant-?", p ? json(p->role).get<std::string>() : "bystander"};
      }
      bundle.push_back(render_view(*v, label));
    }
    for (const auto& s : r.pinned) {
      auto item = render_segment(s);
      if (!visible) {
        auto p = r.pseudonyms.of(s.speaker);
        item["speaker"] = p ? p->label : "Participant-?";
        item["sender_role"] = p ? json(p->role).get<std::string>() : "bystander";
      }
      bundle.push_back(item);
    }
    return bundle;
  }

  SourceVerifier source_verifier(const Report& r) const {
    return [this, &r](const json& item) {
      const auto key = keys_.active();
      if (item.value("kind", std::string{}) == "segment") {
        const auto id = item.at("seg_id").get<std::string>();
        for (const auto& s : r.pinned)
          if (s.seg_id == id) return verify_segment(s, key);
        return false;
      }
      auto it = messages_.find(item.value("msg_id", std::string{}));
      return it != messages_.end() && verify_frank(it->second, key);
    };
  }

  AttestationToken attest(const Report& r, const json& bundle, Millis now) const {
    return attest_bundle(bundle, r.report_id, keys_.active(), now, source_verifier(r));
  }

  // Replaces every party account id in a JSON tree with its report pseudonym.
  json pseudonymize(const Report& r, json j) const {
    if (j.is_string()) {
      const auto s = j.get<std::string>();
      for (const auto& [acct, p] : r.pseudonyms.entries())
        if (s == acct.value) return p.label;
      return j;
    }
    if (j.is_array() || j.is_object())
      for (auto& child : j) child = pseudonymize(r, child);
    return j;
  }

  std::vector<std::string> revoke(Report& r) { return grants_.revoke_all(r.report_id); }

  void apply_punishment(Report& r, Millis now) {
    if (r.decision && r.decision->outcome == Outcome::uphold && r.decision->punishment != Punishment::none &&
        !r.punishment_applied_at)
      r.punishment_applied_at = now;
  }

  void transition(Report& r, LifecycleOp op) { r.state = require_transition(r.state, op); }

  // Closes reports whose appeal window lapsed; delayed punishments apply then.
  void sweep(Millis now) {
    const Millis window = config_.appeal_window_days * kDayMs;
    for (auto& [id, r] : reports_) {
      if (r.state != ReportState::notified || !r.notified_at || now <= *r.notified_at + window) continue;
      const Millis lapse_at = *r.notified_at + window;
      transition(r, LifecycleOp::lapse_appeal_window);
      apply_punishment(r, lapse_at);
      const auto revoked = revoke(r);
      audit_.append(kSystem.value, "report.lapse", report_object(r),
                    json{{"state", r.state}, {"punishment_applied", r.punishment_applied_at.has_value()},
                         {"revoked_grants", revoked}},
                    now);
    }
  }

  // -------------------------------------------------------------------------
  // Store operations
  // -------------------------------------------------------------------------

  json op_profile_add(const AccountId& p, const json& args, Millis now) {
    require_system(p);
    auto prof = args.at("profile").get<UserProfile>();
    for (const auto& role : args.at("profile").at("roles")) enum_from<Role>(role, "role");
    if (!prof.account_id.valid() || prof.account_id == kSystem)
      throw Error(errc::kValidation, "invalid account id '" + prof.account_id.value + "'");
    if (prof.roles.empty()) throw Error(errc::kValidation, "profile needs at least one role");
    if (profiles_.count(prof.account_id)) throw Error(errc::kValidation, "account already exists");
    if (args.contains("moderator_profile")) {
      if (!prof.is_moderator()) throw Error(errc::kValidation, "moderator profile on a non-moderator account");
      auto mp = args.at("moderator_profile").get<ModeratorProfile>();
      if (mp.handle.empty() || mp.handle == prof.account_id.value || mp.handle == prof.display_name)
        throw Error(errc::kValidation, "moderator handle must be a pseudonym");
      pool_.push_back({prof.account_id, mp});
    }
    profiles_.emplace(prof.account_id, prof);
    audit_.append(p.value, "profile.add", "profile/" + prof.account_id.value, nullptr, now);
    return json{{"account_id", prof.account_id}};
  }

  json op_conversation_add(const AccountId& p, const json& args, Millis now) {
    require_system(p);
    auto c = args.at("conversation").get<Conversation>();
    if (conversations_.count(c.conv_id)) throw Error(errc::kValidation, "conversation exists");
    if (c.participants.size() < 2) throw Error(errc::kValidation, "conversation needs two participants");
    if (c.kind == ConversationKind::direct && c.participants.size() != 2)
      throw Error(errc::kValidation, "direct conversation needs exactly two participants");
    for (const auto& a : c.participants) profile(a);
    if (!c.ephemeral_policy) {
      auto w = config_.conversation_windows.find(c.conv_id);
      if (w != config_.conversation_windows.end()) c.ephemeral_policy = w->second;
      else if (args.value("ephemeral_default", false)) c.ephemeral_policy = config_.ephemeral_default;
    }
    if (c.ephemeral_policy) ephemeral_.open(c.conv_id, *c.ephemeral_policy);
    conversations_.emplace(c.conv_id, c);
    audit_.append(p.value, "conversation.add", "conversation/" + c.conv_id, nullptr, now);
    return json(c);
  }

  json op_message_post(const AccountId& p, const json& args, Millis now) {
    Message m;
    m.msg_id = args.at("msg_id").get<std::string>();
    m.conversation_id = args.at("conversation_id").get<std::string>();
    m.body = args.at("body").get<std::string>();
    m.sender = p;
    m.sent_at = args.contains("sent_at") && p == kSystem ? args.at("sent_at").get<Millis>() : now;
    if (p == kSystem) m.sender = args.at("sender").get<AccountId>();
    auto c = conversations_.find(m.conversation_id);
    if (c == conversations_.end()) throw Error(errc::kNotFound, "unknown conversation " + m.conversation_id);
    if (!c->second.has_participant(m.sender)) throw Error(errc::kForbidden, "sender is not a participant");
    if (m.msg_id.empty() || messages_.count(m.msg_id)) throw Error(errc::kValidation, "msg_id must be new");
    if (m.sent_at <= 0) throw Error(errc::kValidation, "sent_at must be positive");
    if (profile(m.sender).join_date > m.sent_at) throw Error(errc::kValidation, "message predates sender account");
    utf8::split(m.body);
    m.frank_tag = frank(m, keys_.active());
    auto& order = conv_messages_[m.conversation_id];
    messages_.emplace(m.msg_id, m);
    order.push_back(m.msg_id);
    std::sort(order.begin(), order.end(),
              [&](const auto& a, const auto& b) { return message_order(messages_.at(a), messages_.at(b)); });
    audit_.append(m.sender.value, "message.post", "message/" + m.msg_id, nullptr, now);
    return json{{"msg_id", m.msg_id}, {"sent_at", m.sent_at}, {"frank_tag", base64_encode(m.frank_tag)}};
  }

  json op_segment_append(const AccountId& p, const json& args, Millis now) {
    EphemeralSegment s;
    s.conversation_id = args.at("conversation_id").get<std::string>();
    s.seg_id = args.at("seg_id").get<std::string>();
    s.speaker = p;
    s.captured_at = args.value("captured_at", now);
    s.payload = args.contains("payload_b64") ? base64_decode(args.at("payload_b64").get<std::string>())
                                             : to_bytes(args.value("text", std::string{}));
    auto c = conversations_.find(s.conversation_id);
    if (c == conversations_.end()) throw Error(errc::kNotFound, "unknown conversation " + s.conversation_id);
    if (!c->second.has_participant(p)) throw Error(errc::kForbidden, "speaker is not a participant");
    ephemeral_.append(s, keys_.active(), now);
    audit_.append(p.value, "segment.append", "conversation/" + s.conversation_id + "/segment/" + s.seg_id, nullptr,
                  now);
    return json{{"seg_id", s.seg_id}, {"captured_at", s.captured_at}};
  }

  json op_segment_reportable(const AccountId& p, const json& args, Millis now) {
    const auto conv = args.at("conversation_id").get<std::string>();
    auto c = conversations_.find(conv);
    if (c == conversations_.end()) throw Error(errc::kNotFound, "unknown conversation " + conv);
    if (!c->second.has_participant(p)) throw Error(errc::kForbidden, "not a participant of " + conv);
    json out = json::array();
    for (const auto& s : ephemeral_.reportable(conv, now)) out.push_back(render_segment(s));
    return out;
  }

  // -------------------------------------------------------------------------
  // Report assembly
  // -------------------------------------------------------------------------

  ScopePolicy scope_arg(const json& args) const {
    if (args.contains("preset")) {
      const auto name = args.at("preset").get<std::string>();
      auto it = config_.presets.find(name);
      if (it == config_.presets.end()) throw Error(errc::kValidation, "unknown scope preset '" + name + "'");
      return it->second;
    }
    if (args.contains("scope")) return scope_from_json(args.at("scope"));
    return ScopePolicy::all();
  }

  std::vector<std::string> shared_conversations(const AccountId& a, const AccountId& b) const {
    std::vector<std::string> out;
    for (const auto& [id, c] : conversations_)
      if (c.has_participant(a) && c.has_participant(b)) out.push_back(id);
    return out;
  }

  void rescope(Report& r, const ScopePolicy& policy, std::vector<std::string> conv_ids) {
    if (conv_ids.empty()) conv_ids = shared_conversations(r.reporter, r.reported);
    auto convs = conversations_for(conv_ids);
    bool reporter_in_any = false;
    for (const auto& c : convs) reporter_in_any |= c.conversation.has_participant(r.reporter);
    if (!reporter_in_any) throw Error(errc::kForbidden, "reporter is not a participant of any scoped conversation");
    const auto msgs = apply_scope(policy, convs, ScopeParties{r.reporter, r.reported});
    r.scope = policy;
    r.conversation_ids = conv_ids;
    r.candidates.clear();
    std::map<std::string, VisibilityLevel> levels;
    for (const auto& m : msgs) {
      r.candidates.push_back(m.msg_id);
      auto old = r.levels.find(m.msg_id);
      levels[m.msg_id] = old == r.levels.end() ? VisibilityLevel::full() : old->second;
    }
    r.levels = std::move(levels);
    for (const auto& m : msgs) r.pseudonyms.add(m.sender, PartyRole::bystander);
    std::set<AccountId> rest;
    for (const auto& c : convs) rest.insert(c.conversation.participants.begin(), c.conversation.participants.end());
    for (const auto& a : rest) r.pseudonyms.add(a, PartyRole::bystander);
  }

  // Applies the reporter's own level choices; returns what was set.
  json apply_views(Report& r, const json& args, Millis now) {
    json changed = json::object();
    if (args.contains("views")) {
      for (const auto& [msg_id, lvl_json] : args.at("views").items()) {
        if (!r.levels.count(msg_id)) throw Error(errc::kInvalidTarget, msg_id + " is not in the report scope");
        auto lvl = lvl_json.get<VisibilityLevel>();
        minimize(messages_.at(msg_id), lvl, config_.minimizer, answerer_.get());
        r.levels[msg_id] = lvl;
        changed[msg_id] = lvl;
      }
    }
    if (args.contains("auto_redact")) {
      for (const auto& msg_id : args.at("auto_redact").get<std::vector<std::string>>()) {
        if (!r.levels.count(msg_id)) throw Error(errc::kInvalidTarget, msg_id + " is not in the report scope");
        const auto spans = auto_redact(messages_.at(msg_id), config_.minimizer.detectors);
        r.levels[msg_id] = spans.empty() ? VisibilityLevel::full() : VisibilityLevel::redacted(spans);
        changed[msg_id] = r.levels[msg_id];
      }
    }
    json attached = json::array();
    if (args.contains("segments")) {
      for (const auto& group : args.at("segments")) {
        const auto conv = group.at("conversation_id").get<std::string>();
        if (std::find(r.conversation_ids.begin(), r.conversation_ids.end(), conv) == r.conversation_ids.end() &&
            !conversations_.at(conv).has_participant(r.reporter))
          throw Error(errc::kForbidden, "reporter is not a participant of " + conv);
        if (!conversations_.count(conv) || !conversations_.at(conv).has_participant(r.reporter))
          throw Error(errc::kForbidden, "reporter is not a participant of " + conv);
        const auto ids = group.at("seg_ids").get<std::vector<std::string>>();
        for (auto& s : ephemeral_.attach(conv, ids, now)) {
          if (std::none_of(r.pinned.begin(), r.pinned.end(), [&](const auto& x) { return x.seg_id == s.seg_id; })) {
            r.pseudonyms.add(s.speaker, PartyRole::bystander);
            attached.push_back({{"seg_id", s.seg_id}, {"captured_at", s.captured_at}});
            r.pinned.push_back(std::move(s));
          }
        }
      }
    }
    json media = json::array();
    if (args.contains("free_media")) {
      for (const auto& item : args.at("free_media")) {
        FreeMediaItem f;
        f.item_id = "F-" + std::to_string(++media_counter_);
        f.submitted_by = r.reporter;
        f.claimed_sender = item.value("claimed_sender", std::string{});
        f.description = item.value("description", std::string{});
        f.content = item.value("content", std::string{});
        f.submitted_at = now;
        media.push_back({{"item_id", f.item_id}, {"provenance", f.provenance}});
        r.free_media.push_back(std::move(f));
      }
    }
    return json{{"levels", changed}, {"segments", attached}, {"free_media", media}};
  }

  json op_report_file(const AccountId& p, const json& args, Millis now) {
    Report r;
    r.reporter = p;
    r.reported = args.at("reported").get<AccountId>();
    profile(p);
    profile(r.reported);
    if (r.reported == r.reporter) throw Error(errc::kValidation, "cannot report yourself");
    r.reason = args.value("reason", std::string{});
    r.identifier_policy = args.contains("identifier_policy")
                              ? enum_from<IdentifierPolicy>(args.at("identifier_policy"), "identifier_policy")
                              : config_.identifier_policy;
    r.pseudonyms = PseudonymTable(r.reporter, r.reported);
    r.filed_at = now;
    r.report_id = "R-" + std::to_string(reports_.size() + 1);
    rescope(r, scope_arg(args), args.value("conversations", std::vector<std::string>{}));
    transition(r, LifecycleOp::begin_assembly);
    const auto applied = apply_views(r, args, now);
    if (r.candidates.empty() && r.pinned.empty())
      throw Error(errc::kEmptyScope, "scope selects no messages and no ephemeral segments");

    // Identity check: senders sharing the reported party's display name but
    // not its account are impersonation candidates.
    const auto& claimed = profile(r.reported);
    std::set<AccountId> senders;
    for (const auto& id : r.candidates) senders.insert(messages_.at(id).sender);
    for (const auto& s : r.pinned) senders.insert(s.speaker);
    for (const auto& s : senders) {
      if (s == r.reported || s == r.reporter) continue;
      if (profile(s).display_name == claimed.display_name && detect_impersonation(claimed, s) == IdentityMatch::mismatch)
        r.identity_mismatches.push_back(json{{"claimed", r.reported}, {"evidence_sender", s}, {"result", "mismatch"}});
    }

    auto& times = filings_[p];
    times.push_back(now);
    const auto recent = std::count_if(times.begin(), times.end(), [&](Millis t) { return now - t < kMinuteMs; });
    const bool flood = recent > config_.flood_threshold_per_minute;
    if (flood) r.flags.insert("filer_flood_signal");

    json levels = json::object();
    for (const auto& [id, l] : r.levels) levels[id] = l;
    audit_.append(p.value, "report.file", report_object(r),
                  json{{"reported", r.reported},
                       {"scope", scope_to_json(r.scope)},
                       {"conversations", r.conversation_ids},
                       {"candidates", r.candidates},
                       {"levels", levels},
                       {"segments", applied.at("segments")},
                       {"free_media", applied.at("free_media")},
                       {"identity_mismatches", r.identity_mismatches},
                       {"flood_signal", flood},
                       {"recent_filings", recent}},
                  now);
    const auto id = r.report_id;
    reports_.emplace(id, std::move(r));
    return render_report(reports_.at(id), p);
  }

  json op_report_scope(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    require_reporter(r, p);
    transition(r, LifecycleOp::edit_evidence);
    auto copy = r;
    rescope(copy, scope_arg(args), args.value("conversations", std::vector<std::string>{}));
    if (copy.candidates.empty() && copy.pinned.empty()) throw Error(errc::kEmptyScope, "scope selects nothing");
    r = std::move(copy);
    json levels = json::object();
    for (const auto& [id, l] : r.levels) levels[id] = l;
    audit_.append(p.value, "report.scope", report_object(r),
                  json{{"scope", scope_to_json(r.scope)}, {"candidates", r.candidates}, {"levels", levels}}, now);
    return render_report(r, p);
  }

  json op_report_views(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    require_reporter(r, p);
    transition(r, LifecycleOp::edit_evidence);
    auto copy = r;
    const auto applied = apply_views(copy, args, now);
    r = std::move(copy);
    audit_.append(p.value, "report.views", report_object(r), applied, now);
    return render_report(r, p);
  }

  // -------------------------------------------------------------------------
  // Report reads and access
  // -------------------------------------------------------------------------

  json render_report(const Report& r, const AccountId& caller) const {
    const bool visible = identifiers_visible_to(r, caller);
    json j{{"report_id", r.report_id},
           {"state", r.state},
           {"reason", r.reason},
           {"reporter", party(r, r.reporter, visible)},
           {"reported", party(r, r.reported, visible)},
           {"identifier_policy", r.identifier_policy},
           {"flags", r.flags},
           {"annotations", r.annotations}};
    json participants = json::array();
    for (const auto& [acct, ps] : r.pseudonyms.entries()) {
      json pj{{"label", ps.label}, {"role", ps.role}};
      if (visible) pj["account_id"] = acct;
      participants.push_back(pj);
    }
    j["participants"] = participants;
    json mods = json::array();
    for (const auto& m : r.assigned) mods.push_back(m.profile);
    j["moderators"] = mods;
    json reqs = json::array();
    for (const auto& id : r.request_ids) reqs.push_back(render_request(requests_.at(id)));
    j["disclosure_requests"] = reqs;
    json invs = json::array();
    json flagged = json::array();
    for (const auto& id : r.invite_ids) {
      const auto& inv = invites_.at(id);
      json ij{{"invite_id", inv.invite_id},
              {"bystander", party(r, inv.bystander, visible)},
              {"involvement", inv.involvement},
              {"consent", inv.consent},
              {"contacted", inv.contacted}};
      if (inv.finding) {
        if (inv.finding->verdict) ij["verdict"] = *inv.finding->verdict;
        if (!inv.finding->flags.empty()) {
          // Flagged ids with their current minimized views only.
          json fl = json::array();
          for (const auto& mid : inv.finding->flags) {
            // Identifiers only; content stays behind the reporter's levels.
            json entry{{"msg_id", mid}};
            if (r.levels.count(mid)) entry["level"] = r.levels.at(mid).kind;
            else entry["level"] = "out_of_scope";
            fl.push_back(entry);
            flagged.push_back(mid);
          }
          ij["flags"] = fl;
        }
      }
      invs.push_back(ij);
    }
    j["bystander_invites"] = invs;
    json testimony = json::array();
    for (const auto& t : r.testimony)
      testimony.push_back({{"invite_id", t.invite_id},
                           {"bystander", party(r, t.bystander, visible)},
                           {"msg_id", t.msg_id},
                           {"account", t.account},
                           {"provenance", t.provenance},
                           {"kind", "testimonial"}});
    j["testimony"] = testimony;
    json mismatches = json::array();
    for (const auto& m : r.identity_mismatches) mismatches.push_back(visible ? m : pseudonymize(r, m));
    j["identity_mismatches"] = mismatches;
    if (r.decision) j["decision"] = *r.decision;
    j["punishment_applied"] = r.punishment_applied_at.has_value() && !r.punishment_lifted;
    if (caller == r.reporter) {
      j["candidates"] = r.candidates;
      json levels = json::object();
      for (const auto& [id, l] : r.levels) levels[id] = l;
      j["levels"] = levels;
      j["preview"] = render_bundle_for(r, identifiers_visible(r.identifier_policy, is_decided(r.state), false));
      json media = json::array();
      for (const auto& f : r.free_media)
        media.push_back({{"item_id", f.item_id}, {"claimed_sender", f.claimed_sender},
                         {"description", f.description}, {"provenance", f.provenance}});
      j["free_media"] = media;
      if (r.attestation) j["attestation"] = *r.attestation;
    }
    return j;
  }

  json op_report_get(const AccountId& p, const json& args, Millis) {
    auto& r = report_ref(args);
    const bool can_read = p == r.reporter || is_assigned(r, p) || has_role(p, Role::platform_moderator);
    if (p == r.reported && r.notified_at && r.decision && r.decision->outcome == Outcome::uphold) {
      return json{{"report_id", r.report_id},
                  {"state", r.state},
                  {"punishment_applied", r.punishment_applied_at.has_value() && !r.punishment_lifted}};
    }
    if (!can_read) throw Error(errc::kForbidden, p.value + " may not read " + r.report_id);
    return render_report(r, p);
  }

  json op_report_grant(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    require_reporter(r, p);
    if (is_terminal(r.state)) throw Error(errc::kInvalidState, "report is closed");
    std::set<AccountId> grantees;
    json handles = json::array();
    for (const auto& g : args.at("grantees").get<std::vector<std::string>>()) {
      auto rec = moderator_by_handle_or_id(g);
      AccountId acct = rec ? rec->account : AccountId{g};
      if (!is_moderator(acct)) throw Error(errc::kValidation, g + " does not hold a moderator role");
      grantees.insert(acct);
      handles.push_back(handle_of(acct));
    }
    std::optional<Millis> expires;
    if (args.contains("expires_at") && !args.at("expires_at").is_null()) expires = args.at("expires_at").get<Millis>();
    std::optional<std::int64_t> limit;
    if (args.contains("view_limit") && !args.at("view_limit").is_null()) limit = args.at("view_limit").get<std::int64_t>();
    auto g = grants_.add("G-" + std::to_string(++grant_counter_), r.report_id, grantees, expires, limit);
    audit_.append(p.value, "grant.create", report_object(r) + "/grant/" + g.grant_id,
                  json{{"grantees", handles}, {"expires_at", expires ? json(*expires) : json(nullptr)},
                       {"view_limit", limit ? json(*limit) : json(nullptr)}},
                  now);
    return json{{"grant_id", g.grant_id}, {"grantees", handles},
                {"expires_at", expires ? json(*expires) : json(nullptr)},
                {"view_limit", limit ? json(*limit) : json("unlimited")}};
  }

  json fetch(Report& r, const AccountId& p, Millis now, const char* action) {
    const bool visible = identifiers_visible_to(r, p);
    try {
      return grants_.fetch(r.report_id, p, now, [&](AccessGrant& g) {
        const auto bundle = render_bundle_for(r, visible);
        const auto token = attest(r, bundle, now);
        json unattested = json::array();
        for (const auto& f : r.free_media)
          unattested.push_back({{"item_id", f.item_id},
                                {"claimed_sender", visible ? json(f.claimed_sender) : pseudonymize(r, f.claimed_sender)},
                                {"description", f.description},
                                {"content", f.content},
                                {"provenance", f.provenance}});
        const auto remaining = g.remaining_views ? json(*g.remaining_views - 1) : json("unlimited");
        audit_.append(p.value, action, report_object(r),
                      json{{"grant_id", g.grant_id}, {"bundle_digest", base64_encode(token.bundle_digest)},
                           {"remaining_views", remaining}},
                      now);
        return json{{"report_id", r.report_id}, {"bundle", bundle}, {"token", token},
                    {"unattested", unattested}, {"remaining_views", remaining}};
      });
    } catch (const Error& e) {
      if (e.code() == errc::kNoGrant || e.code() == errc::kGrantExpired || e.code() == errc::kGrantExhausted)
        audit_.append(p.value, std::string(action) + ".denied", report_object(r), json{{"reason", e.code()}}, now);
      throw;
    }
  }

  json op_report_evidence(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    return fetch(r, p, now, "evidence.fetch");
  }

  json op_report_export(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    auto fetched = fetch(r, p, now, "evidence.export");
    return json{{"format", "advrep-bundle/1"}, {"bundle", fetched.at("bundle")}, {"token", fetched.at("token")}};
  }

  json op_report_resolve(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    if (!is_assigned(r, p)) throw Error(errc::kForbidden, p.value + " is not assigned to " + r.report_id);
    const auto label = args.at("pseudonym").get<std::string>();
    auto acct = r.pseudonyms.resolve(label);
    if (!acct) throw Error(errc::kNotFound, "unknown pseudonym " + label);
    const bool visible = identifiers_visible_to(r, p);
    audit_.append(p.value, "identity.resolve", report_object(r),
                  json{{"pseudonym", label}, {"outcome", visible ? "account_id" : "pseudonym"}}, now);
    if (visible) return json{{"pseudonym", label}, {"account_id", *acct}};
    return json{{"pseudonym", label}, {"role", r.pseudonyms.of(*acct)->role}};
  }

  // -------------------------------------------------------------------------
  // Lifecycle
  // -------------------------------------------------------------------------

  json op_report_assign(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    require_reporter(r, p);
    require_transition(r.state, LifecycleOp::assign);
    const auto request = args.get<AssignmentRequest>();
    std::set<AccountId> conflicted{r.reporter, r.reported};
    for (const auto& id : r.conversation_ids)
      for (const auto& a : conversations_.at(id).participants) conflicted.insert(a);
    auto chosen = choose_moderators(pool_, request, conflicted, config_.moderators_per_report);
    const auto bundle = render_bundle_for(r, true);
    const auto token = attest(r, bundle, now);
    transition(r, LifecycleOp::assign);
    r.assigned = chosen;
    r.attestation = token;
    json handles = json::array();
    json profiles = json::array();
    for (const auto& m : chosen) {
      handles.push_back(m.profile.handle);
      profiles.push_back(m.profile);
    }
    json excluded = json::array();
    for (const auto& e : request.excluded) excluded.push_back(e.moderator);
    audit_.append(p.value, "report.assign", report_object(r),
                  json{{"moderators", handles}, {"preferred", request.preferred}, {"excluded", excluded},
                       {"bundle_digest", base64_encode(token.bundle_digest)}},
                  now);
    return json{{"report_id", r.report_id}, {"state", r.state}, {"moderators", profiles}, {"attestation", token}};
  }

  json op_report_decide(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    require_assigned(r, p);
    require_transition(r.state, LifecycleOp::decide);
    auto d = args.at("decision").get<Decision>();
    d.validate();
    for (const auto& id : r.request_ids) {
      const auto& q = requests_.at(id);
      if (q.state == RequestState::pending && q.criticality == Criticality::critical)
        throw Error(errc::kBlocked, "critical disclosure request " + id + " is still pending");
    }
    json withdrawn = json::array();
    for (const auto& id : r.request_ids) {
      auto& q = requests_.at(id);
      if (q.state == RequestState::pending) {
        transition_request(q, RequestState::withdrawn);
        withdrawn.push_back(id);
      }
    }
    transition(r, LifecycleOp::decide);
    r.decision = d;
    if (d.punishment_timing == PunishmentTiming::immediate) apply_punishment(r, now);
    for (auto& m : pool_)
      if (is_assigned(r, m.account)) ++m.profile.reports_reviewed;
    audit_.append(p.value, "report.decide", report_object(r),
                  json{{"decision", d},
                       {"punishment_applied", r.punishment_applied_at.has_value()},
                       {"withdrawn_requests", withdrawn},
                       {"dismissible_for_nondisclosure", r.flags.count("dismissible_for_nondisclosure") > 0}},
                  now);
    return render_report(r, p);
  }

  bool involves_direct(const Report& r) const {
    return std::any_of(r.conversation_ids.begin(), r.conversation_ids.end(),
                       [&](const auto& id) { return conversations_.at(id).kind == ConversationKind::direct; });
  }

  json op_report_notify(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    require_assigned(r, p);
    require_transition(r.state, LifecycleOp::notify);
    const auto requested = enum_from<Granularity>(args.value("granularity", json("generic")), "granularity");
    const auto effective = effective_granularity(requested, involves_direct(r));
    const auto& d = *r.decision;
    transition(r, LifecycleOp::notify);
    r.notified_at = now;
    notify_inbox(r.reporter, "report.outcome",
                 json{{"report_id", r.report_id}, {"outcome", d.outcome},
                      {"policy", d.policy_violated ? json(*d.policy_violated) : json(nullptr)}},
                 now);
    json recipients = json::array({"reporter"});
    if (d.outcome == Outcome::uphold) {
      json notice{{"report_id", r.report_id}, {"policy", *d.policy_violated}, {"punishment", d.punishment},
                  {"punishment_timing", d.punishment_timing},
                  {"appeal_until", now + config_.appeal_window_days * kDayMs}};
      if (effective != Granularity::generic) {
        std::set<std::string> convs;
        for (const auto& mid : d.offending_messages)
          if (messages_.count(mid)) convs.insert(messages_.at(mid).conversation_id);
        if (convs.empty()) convs.insert(r.conversation_ids.begin(), r.conversation_ids.end());
        notice["conversations"] = convs;
      }
      if (effective == Granularity::message_level) {
        json excerpts = json::array();
        for (const auto& mid : d.offending_messages) {
          if (!r.levels.count(mid)) continue;
          auto v = view_of(r, mid);
          if (v && std::holds_alternative<std::string>(v->payload) &&
              (v->level.kind == VisibilityLevel::Kind::full || v->level.kind == VisibilityLevel::Kind::redacted))
            excerpts.push_back({{"msg_id", mid}, {"excerpt", std::get<std::string>(v->payload)}});
        }
        notice["excerpts"] = excerpts;
      }
      notice["granularity"] = effective;
      notify_inbox(r.reported, "report.decision", notice, now);
      recipients.push_back("reported");
    }
    audit_.append(p.value, "report.notify", report_object(r),
                  json{{"requested", requested}, {"effective", effective}, {"downgraded", requested != effective},
                       {"recipients", recipients}},
                  now);
    return json{{"report_id", r.report_id}, {"state", r.state}, {"granularity", effective},
                {"downgraded", requested != effective}, {"recipients", recipients}};
  }

  json op_report_appeal(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    if (p != r.reported) throw Error(errc::kForbidden, "only the reported party may appeal");
    // The lapse sweep may already have closed the report; report the window.
    if (r.notified_at && now > *r.notified_at + config_.appeal_window_days * kDayMs)
      throw Error(errc::kAppealWindow, "appeal window has closed");
    require_transition(r.state, LifecycleOp::appeal);
    if (!r.decision || r.decision->outcome != Outcome::uphold)
      throw Error(errc::kInvalidState, "nothing to appeal on a dismissed report");
    const auto statement = args.value("statement", std::string{});
    if (statement.empty()) throw Error(errc::kValidation, "appeal needs a statement");
    transition(r, LifecycleOp::appeal);
    r.appeal_statement = statement;
    audit_.append(p.value, "report.appeal", report_object(r), json{{"statement_chars", utf8::length(statement)}}, now);
    for (const auto& m : r.assigned) notify_inbox(m.account, "report.appeal", json{{"report_id", r.report_id}}, now);
    return json{{"report_id", r.report_id}, {"state", r.state}};
  }

  json op_report_resolve_appeal(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    require_assigned(r, p);
    const auto resolution = args.at("resolution").get<std::string>();
    if (resolution == "affirm") {
      transition(r, LifecycleOp::affirm_appeal);
      apply_punishment(r, now);
    } else if (resolution == "reverse") {
      transition(r, LifecycleOp::reverse_appeal);
      if (r.punishment_applied_at) r.punishment_lifted = true;
    } else {
      throw Error(errc::kValidation, "resolution must be affirm or reverse");
    }
    const auto revoked = revoke(r);
    audit_.append(p.value, "appeal.resolve", report_object(r),
                  json{{"resolution", resolution}, {"state", r.state},
                       {"punishment_applied", r.punishment_applied_at.has_value() && !r.punishment_lifted},
                       {"revoked_grants", revoked}},
                  now);
    notify_inbox(r.reported, "appeal.outcome", json{{"report_id", r.report_id}, {"resolution", resolution}}, now);
    return json{{"report_id", r.report_id}, {"state", r.state}};
  }

  json op_report_close(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    require_assigned(r, p);
    transition(r, LifecycleOp::close);
    const auto revoked = revoke(r);
    audit_.append(p.value, "report.close", report_object(r), json{{"revoked_grants", revoked}}, now);
    return json{{"report_id", r.report_id}, {"state", r.state}};
  }

  json op_report_terminate(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    const auto reason = args.at("reason").get<std::string>();
    if (reason == "reporter_withdrawn") require_reporter(r, p);
    else if (reason == "consent_refused") require_assigned(r, p);
    else throw Error(errc::kValidation, "reason must be consent_refused or reporter_withdrawn");
    if (is_terminal(r.state)) throw Error(errc::kInvalidState, r.report_id + " is already terminal");
    transition(r, LifecycleOp::terminate);
    r.termination_reason = reason;
    for (const auto& id : r.request_ids) {
      auto& q = requests_.at(id);
      if (q.state == RequestState::pending) q.state = RequestState::withdrawn;
    }
    const auto revoked = revoke(r);
    audit_.append(p.value, "report.terminate", report_object(r), json{{"reason", reason}, {"revoked_grants", revoked}},
                  now);
    return json{{"report_id", r.report_id}, {"state", r.state}, {"revoked_grants", revoked}};
  }

  // -------------------------------------------------------------------------
  // Progressive disclosure and bystanders
  // -------------------------------------------------------------------------

  json op_disclosure_open(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    require_assigned(r, p);
    require_transition(r.state, LifecycleOp::investigate);
    DisclosureRequest q;
    q.targets = args.at("targets").get<std::vector<std::string>>();
    q.justification = args.value("justification", std::string{});
    if (q.justification.empty()) throw Error(errc::kValidation, "a disclosure request needs a justification");
    if (q.targets.empty()) throw Error(errc::kValidation, "a disclosure request needs targets");
    q.criticality = enum_from<Criticality>(args.value("criticality", json("informational")), "criticality");
    if (args.contains("level")) q.requested_level = args.at("level").get<VisibilityLevel>();
    if (q.requested_level.kind == VisibilityLevel::Kind::removed)
      throw Error(errc::kValidation, "cannot request removal");
    for (const auto& t : q.targets) {
      auto it = r.levels.find(t);
      if (it == r.levels.end()) throw Error(errc::kInvalidTarget, t + " is not in the report scope");
      if (it->second.kind == VisibilityLevel::Kind::full) throw Error(errc::kInvalidTarget, t + " is already at full");
      if (reveals_at_most(q.requested_level, it->second))
        throw Error(errc::kInvalidTarget, t + " already reveals at least the requested level");
      minimize(messages_.at(t), q.requested_level, config_.minimizer, answerer_.get());
    }
    q.consequence_note = args.value("consequence_note", default_consequence_note(q.criticality));
    q.request_id = "D-" + std::to_string(requests_.size() + 1);
    q.report_id = r.report_id;
    q.requester = p;
    q.requester_handle = handle_of(p);
    requests_.emplace(q.request_id, q);
    r.request_ids.push_back(q.request_id);
    audit_.append(p.value, "disclosure.open", report_object(r) + "/request/" + q.request_id,
                  json{{"targets", q.targets}, {"level", q.requested_level}, {"criticality", q.criticality},
                       {"justification", q.justification}},
                  now);
    notify_inbox(r.reporter, "disclosure.request", render_request(q), now);
    return render_request(q);
  }

  DisclosureRequest& request_ref(const json& args) {
    const auto id = args.at("request_id").get<std::string>();
    auto it = requests_.find(id);
    if (it == requests_.end()) throw Error(errc::kNotFound, "unknown request " + id);
    return it->second;
  }

  json op_disclosure_respond(const AccountId& p, const json& args, Millis now) {
    auto& q = request_ref(args);
    auto& r = reports_.at(q.report_id);
    require_reporter(r, p);
    require_transition(r.state, LifecycleOp::investigate);
    const auto decision = args.at("decision").get<std::string>();
    if (decision != "grant" && decision != "deny") throw Error(errc::kValidation, "decision must be grant or deny");
    if (q.state != RequestState::pending)
      throw Error(errc::kInvalidState, "request " + q.request_id + " is already " + json(q.state).get<std::string>());
    json detail{{"request_id", q.request_id}, {"decision", decision}};
    if (decision == "grant") {
      auto copy = r;
      for (const auto& t : q.targets) copy.levels[t] = q.requested_level;
      const auto token = attest(copy, render_bundle_for(copy, true), now);
      transition_request(q, RequestState::granted);
      r = std::move(copy);
      r.attestation = token;
      detail["targets"] = q.targets;
      detail["level"] = q.requested_level;
      detail["bundle_digest"] = base64_encode(token.bundle_digest);
    } else {
      transition_request(q, RequestState::denied);
      r.annotations.push_back("Reporter denied disclosure request " + q.request_id + " (" +
                              json(q.criticality).get<std::string>() + "): credibility of the evidence may be reduced.");
      if (q.criticality == Criticality::critical) r.flags.insert("dismissible_for_nondisclosure");
      detail["criticality"] = q.criticality;
      detail["dismissible_for_nondisclosure"] = q.criticality == Criticality::critical;
    }
    audit_.append(p.value, decision == "grant" ? "disclosure.grant" : "disclosure.deny",
                  report_object(r) + "/request/" + q.request_id, detail, now);
    notify_inbox(q.requester, "disclosure.response", render_request(q), now);
    return render_request(q);
  }

  json op_disclosure_withdraw(const AccountId& p, const json& args, Millis now) {
    auto& q = request_ref(args);
    auto& r = reports_.at(q.report_id);
    if (q.requester != p) throw Error(errc::kForbidden, "only the requester may withdraw");
    transition_request(q, RequestState::withdrawn);
    audit_.append(p.value, "disclosure.withdraw", report_object(r) + "/request/" + q.request_id, nullptr, now);
    return render_request(q);
  }

  json op_invite_create(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    require_assigned(r, p);
    require_transition(r.state, LifecycleOp::investigate);
    const auto who = args.at("bystander").get<std::string>();
    auto resolved = r.pseudonyms.resolve(who);
    const AccountId bystander = resolved ? *resolved : AccountId{who};
    if (bystander == r.reporter) throw Error(errc::kValidation, "the reporter cannot be a bystander");
    if (bystander == r.reported) throw Error(errc::kValidation, "the reported party is not cross-examined");
    if (!in_scoped_conversations(r, bystander))
      throw Error(errc::kValidation, "bystander is not a participant of the scoped conversations");
    BystanderInvite inv;
    inv.invite_id = "I-" + std::to_string(invites_.size() + 1);
    inv.report_id = r.report_id;
    inv.bystander = bystander;
    inv.involvement = enum_from<Involvement>(args.at("involvement"), "involvement");
    r.pseudonyms.add(bystander, PartyRole::bystander);
    invites_.emplace(inv.invite_id, inv);
    r.invite_ids.push_back(inv.invite_id);
    const auto label = r.pseudonyms.of(bystander)->label;
    audit_.append(p.value, "invite.create", report_object(r) + "/invite/" + inv.invite_id,
                  json{{"bystander", label}, {"involvement", inv.involvement}}, now);
    notify_inbox(r.reporter, "invite.consent_needed",
                 json{{"invite_id", inv.invite_id}, {"bystander", bystander}, {"involvement", inv.involvement}}, now);
    return json{{"invite_id", inv.invite_id}, {"bystander", label}, {"involvement", inv.involvement},
                {"consent", inv.consent}};
  }

  BystanderInvite& invite_ref(const json& args) {
    const auto id = args.at("invite_id").get<std::string>();
    auto it = invites_.find(id);
    if (it == invites_.end()) throw Error(errc::kNotFound, "unknown invite " + id);
    return it->second;
  }

  json op_invite_consent(const AccountId& p, const json& args, Millis now) {
    auto& inv = invite_ref(args);
    auto& r = reports_.at(inv.report_id);
    require_reporter(r, p);
    require_transition(r.state, LifecycleOp::investigate);
    if (inv.consent != Consent::awaiting_reporter) throw Error(errc::kInvalidState, "consent already given");
    const auto decision = args.at("decision").get<std::string>();
    const auto object = report_object(r) + "/invite/" + inv.invite_id;
    if (decision == "approve") {
      inv.consent = Consent::reporter_approved;
      audit_.append(p.value, "invite.approve", object, nullptr, now);
      // Contact follows approval as its own platform action.
      inv.contacted = true;
      notify_inbox(inv.bystander, "bystander.invite",
                   json{{"invite_id", inv.invite_id}, {"involvement", inv.involvement}}, now);
      audit_.append(kSystem.value, "bystander.contact", object, nullptr, now);
    } else if (decision == "decline") {
      inv.consent = Consent::reporter_declined;
      audit_.append(p.value, "invite.decline", object, nullptr, now);
    } else {
      throw Error(errc::kValidation, "decision must be approve or decline");
    }
    return json{{"invite_id", inv.invite_id}, {"consent", inv.consent}, {"contacted", inv.contacted}};
  }

  json op_invite_finding(const AccountId& p, const json& args, Millis now) {
    auto& inv = invite_ref(args);
    auto& r = reports_.at(inv.report_id);
    if (inv.bystander != p) throw Error(errc::kForbidden, "only the invited bystander may submit a finding");
    if (inv.consent != Consent::reporter_approved || !inv.contacted)
      throw Error(errc::kForbidden, "invite has not been approved by the reporter");
    require_transition(r.state, LifecycleOp::investigate);
    if (inv.finding) throw Error(errc::kInvalidState, "finding already submitted");
    auto f = args.at("finding").get<BystanderFinding>();
    f.invite_id = inv.invite_id;
    validate_finding_shape(inv.involvement, f);
    auto check_msg = [&](const std::string& mid) {
      auto it = messages_.find(mid);
      if (it == messages_.end() ||
          std::find(r.conversation_ids.begin(), r.conversation_ids.end(), it->second.conversation_id) ==
              r.conversation_ids.end() ||
          !conversations_.at(it->second.conversation_id).has_participant(p))
        throw Error(errc::kInvalidTarget, mid + " is not a message the bystander can reference");
    };
    for (const auto& mid : f.flags) check_msg(mid);
    json disclosed = json::array();
    for (const auto& d : f.disclosures) {
      check_msg(d.msg_id);
      r.testimony.push_back({inv.invite_id, p, d.msg_id, d.account, ProvenanceClass::unattested});
      disclosed.push_back(d.msg_id);
    }
    inv.finding = f;
    json detail{{"involvement", inv.involvement}};
    if (f.verdict) detail["verdict"] = *f.verdict;
    if (!f.flags.empty()) detail["flags"] = f.flags;
    if (!disclosed.empty()) detail["disclosures"] = disclosed;
    audit_.append(p.value, "invite.finding", report_object(r) + "/invite/" + inv.invite_id, detail, now);
    return json{{"invite_id", inv.invite_id}, {"recorded", true}};
  }

  // -------------------------------------------------------------------------
  // Tags, import, reads
  // -------------------------------------------------------------------------

  json op_tag_assign(const AccountId& p, const json& args, Millis now) {
    auto& r = report_ref(args);
    if (!is_moderator(p)) throw Error(errc::kForbidden, "only moderators tag accounts");
    if (!is_assigned(r, p) && !has_role(p, Role::platform_moderator))
      throw Error(errc::kForbidden, p.value + " is not assigned to " + r.report_id);
    const auto label = args.at("subject").get<std::string>();
    auto subject = r.pseudonyms.resolve(label);
    if (!subject) throw Error(errc::kNotFound, "unknown pseudonym " + label);
    tags_.assign(*subject, args.value("label", std::string{}), handle_of(p), now);
    audit_.append(p.value, "tag.assign", report_object(r), json{{"subject", label}, {"label", args.at("label")}}, now);
    return json{{"subject", label}, {"label", args.at("label")}, {"author", handle_of(p)}};
  }

  json op_tag_list(const AccountId& p, const json& args, Millis) {
    auto& r = report_ref(args);
    if (!is_moderator(p) || (!is_assigned(r, p) && !has_role(p, Role::platform_moderator)))
      throw Error(errc::kForbidden, p.value + " may not list tags on " + r.report_id);
    const auto label = args.at("subject").get<std::string>();
    auto subject = r.pseudonyms.resolve(label);
    if (!subject) throw Error(errc::kNotFound, "unknown pseudonym " + label);
    json out = json::array();
    for (const auto& t : tags_.list(*subject))
      out.push_back({{"subject", label}, {"label", t.label}, {"author", t.author}, {"created_at", t.created_at}});
    return out;
  }

  json op_bundle_import(const AccountId& p, const json& args, Millis now) {
    profile(p);
    const auto& bundle = args.at("bundle");
    AttestationToken token;
    try {
      token = args.at("token").get<AttestationToken>();
    } catch (const json::exception& e) {
      throw Error(errc::kValidation, std::string("malformed token: ") + e.what());
    }
    VerificationReport report;
    try {
      report = verify_forwarded(bundle, token, keys_);
    } catch (const Error& e) {
      audit_.append(p.value, "bundle.import.rejected", "import/" + token.report_id, json{{"reason", e.code()}}, now);
      throw;
    }
    if (!report.mac_valid) {
      audit_.append(p.value, "bundle.import.rejected", "import/" + token.report_id,
                    json{{"reason", errc::kMacInvalid}}, now);
      throw Error(errc::kMacInvalid, "bundle does not match its attestation token");
    }
    audit_.append(p.value, "bundle.import", "import/" + token.report_id,
                  json{{"bundle_digest", base64_encode(token.bundle_digest)}, {"items", bundle.size()}}, now);
    json out = report;
    out["provenance"] = ProvenanceClass::attested;
    return out;
  }

  json op_moderator_profile(const AccountId&, const json& args, Millis) {
    const auto handle = args.at("handle").get<std::string>();
    for (const auto& m : pool_)
      if (m.profile.handle == handle) return json(m.profile);
    throw Error(errc::kNotFound, "unknown moderator " + handle);
  }

  json op_audit_report(const AccountId& p, const json& args, Millis) {
    auto& r = report_ref(args);
    const bool raw = p == r.reporter || has_role(p, Role::platform_moderator);
    if (!raw && !is_assigned(r, p)) throw Error(errc::kForbidden, p.value + " may not read the audit trail");
    const auto prefix = report_object(r);
    const bool visible = raw || identifiers_visible_to(r, p);
    json out = json::array();
    for (const auto& e : audit_.snapshot()) {
      if (e.object != prefix && e.object.rfind(prefix + "/", 0) != 0) continue;
      json ej = e;
      if (!visible) {
        ej["actor"] = pseudonymize(r, json(e.actor));
        ej["detail"] = e.detail.empty() ? e.detail : pseudonymize(r, json::parse(e.detail)).dump();
        ej["projection"] = true;
      }
      out.push_back(ej);
    }
    return out;
  }

  json op_audit_full(const AccountId& p, const json&, Millis) {
    if (p != kSystem && !has_role(p, Role::platform_moderator))
      throw Error(errc::kForbidden, "full audit log is restricted to platform moderators");
    return json(audit_.snapshot());
  }

  json op_inbox_list(const AccountId& p, const json&, Millis) {
    json out = json::array();
    auto it = inbox_.find(p);
    if (it == inbox_.end()) return out;
    for (const auto& n : it->second) out.push_back({{"kind", n.kind}, {"body", n.body}, {"at", n.at}});
    return out;
  }

  json op_lifecycle_table(const AccountId&, const json&, Millis) { return transition_table_json(); }

  // Platform-side snapshot of every report, used to compare state across
  // restarts.
  json op_state_dump(const AccountId& p, const json&, Millis) {
    if (p != kSystem && !has_role(p, Role::platform_moderator)) throw Error(errc::kForbidden, "platform only");
    json reports = json::object();
    for (const auto& [id, r] : reports_) {
      json j = render_report(r, r.reporter);
      j["grants"] = grants_.for_report(id);
      reports[id] = j;
    }
    return json{{"reports", reports}, {"audit_head", base64_encode(audit_.head())}, {"audit_size", audit_.size()}};
  }

  EngineConfig config_;
  KeyStore keys_;
  std::unique_ptr<Answerer> answerer_;
  std::map<AccountId, UserProfile> profiles_;
  std::vector<ModeratorRecord> pool_;
  std::map<std::string, Conversation> conversations_;
  std::map<std::string, std::vector<std::string>> conv_messages_;
  std::map<std::string, Message> messages_;
  EphemeralStore ephemeral_;
  std::map<std::string, Report> reports_;
  std::map<std::string, DisclosureRequest> requests_;
  std::map<std::string, BystanderInvite> invites_;
  GrantTable grants_;
  TagStore tags_;
  AuditLog audit_;
  std::map<AccountId, std::vector<Notice>> inbox_;
  std::map<AccountId, std::vector<Millis>> filings_;
  std::uint64_t grant_counter_ = 0;
  std::uint64_t media_counter_ = 0;
  mutable std::mutex mu_;
};

}  // namespace advrep
