#pragma once

#include <algorithm>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "advrep/fixtures.hpp"
#include "advrep/http_service.hpp"

namespace advrep::harness {

struct AssertionResult {
  std::string scenario;
  std::string name;
  bool passed = false;
  std::string detail;
  std::vector<std::uint64_t> audit_seqs;
};

struct ScenarioResult {
  std::string name;
  std::vector<AssertionResult> assertions;
  std::string error;  // set when the script itself broke

  bool passed() const {
    return error.empty() && !assertions.empty() &&
           std::all_of(assertions.begin(), assertions.end(), [](const auto& a) { return a.passed; });
  }
};

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> kNames{"selective-disclosure", "forged-screenshot", "impersonation",
                                               "report-flooding"};
  return kNames;
}

inline std::string token_for(const AccountId& a) { return "tok-" + a.value.substr(5); }

// A fresh service on an ephemeral loopback port, seeded with fixtures, keyed
// from the seed, running in harness mode.
class InProcessService {
 public:
  explicit InProcessService(std::uint64_t seed) {
    ServiceConfig cfg;
    cfg.harness_mode = true;
    cfg.sessions = fixtures::sessions();
    auto durable = std::make_unique<DurableEngine>(std::make_unique<Engine>(cfg.engine, seeded_keys(seed)),
                                                   std::make_unique<MemoryStorage>());
    fixtures::seed(*durable);
    service_ = std::make_unique<Service>(cfg, std::move(durable));
    port_ = service_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { service_->run(); });
    service_->wait_until_ready();
  }
  ~InProcessService() {
    service_->stop();
    if (thread_.joinable()) thread_.join();
  }
  InProcessService(const InProcessService&) = delete;
  InProcessService& operator=(const InProcessService&) = delete;

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  std::unique_ptr<Service> service_;
  std::thread thread_;
  int port_ = 0;
};

class Harness {
 public:
  Harness(const std::string& service_url, std::uint64_t seed) : api_(service_url), rng_(seed) {}

  ScenarioResult run(const std::string& name) {
    ScenarioResult result{name, {}, {}};
    current_ = &result;
    try {
      if (name == "selective-disclosure") selective_disclosure();
      else if (name == "forged-screenshot") forged_screenshot();
      else if (name == "impersonation") impersonation();
      else if (name == "report-flooding") report_flooding();
      else throw Error(errc::kNotFound, "unknown scenario '" + name + "'");
    } catch (const std::exception& e) {
      result.error = e.what();
    }
    current_ = nullptr;
    return result;
  }

  std::vector<AuditEvent> audit() { return from_ndjson(api_.get_text("/api/v1/audit", token_for(fixtures::kPlatform))); }

  std::string audit_head() {
    const auto log = audit();
    return log.empty() ? std::string{} : hex_encode(log.back().hash);
  }

 private:
  // Each scenario runs on its own stretch of the logical clock.
  void at(Millis t) {
    now_ = t;
    api_.set_logical_time(now_);
  }
  void tick(Millis dt = 1000) { at(now_ + dt); }

  json call_ok(const std::string& method, const std::string& path, const AccountId& who, const json& body = json()) {
    auto res = method == "GET" ? api_.get(path, token_for(who)) : api_.post(path, token_for(who), body);
    tick();
    if (!res.ok())
      throw Error(errc::kValidation, method + " " + path + " as " + who.value + " failed: " + res.body.dump());
    return res.body;
  }

  ApiResult call(const std::string& method, const std::string& path, const AccountId& who, const json& body = json()) {
    auto res = method == "GET" ? api_.get(path, token_for(who)) : api_.post(path, token_for(who), body);
    tick();
    return res;
  }

  void check(std::string name, bool passed, std::string detail, std::vector<std::uint64_t> seqs = {}) {
    current_->assertions.push_back({current_->name, std::move(name), passed, std::move(detail), std::move(seqs)});
  }

  static std::optional<AuditEvent> find(const std::vector<AuditEvent>& log, const std::string& action,
                                        const std::string& object_prefix) {
    for (const auto& e : log)
      if (e.action == action && e.object.rfind(object_prefix, 0) == 0) return e;
    return std::nullopt;
  }

  static std::string label_of(const json& report, const AccountId& who) {
    for (const auto& p : report.at("participants"))
      if (p.value("account_id", std::string{}) == who.value) return p.at("label").get<std::string>();
    throw Error(errc::kNotFound, "no pseudonym for " + who.value);
  }

  std::string file_and_assign(json report_args) {
    const auto filed = call_ok("POST", "/api/v1/reports", fixtures::kAlice, report_args);
    const auto id = filed.at("report_id").get<std::string>();
    call_ok("POST", "/api/v1/reports/" + id + "/grants", fixtures::kAlice,
            json{{"grantees", {"Kestrel"}}, {"view_limit", 5}, {"expires_at", now_ + kDayMs}});
    call_ok("POST", "/api/v1/reports/" + id + "/assign", fixtures::kAlice, json{{"preferred", {"Kestrel"}}});
    return id;
  }

  // Reporter hides their own hostile messages; a bystander's flag and a
  // refused critical request expose the omission.
  void selective_disclosure() {
    at(100'000'000);
    const auto id = file_and_assign(json{{"reported", fixtures::kBob},
                                         {"reason", "harassment"},
                                         {"conversations", {"conv-f1"}},
                                         {"scope", {{"mode", "all_in_conversation"}}},
                                         {"views", {{"m2", "removed"}, {"m4", "removed"}}}});
    const auto base = "/api/v1/reports/" + id;
    const auto reporter_view = call_ok("GET", base, fixtures::kAlice);
    const auto wendy = label_of(reporter_view, fixtures::kWendy);

    const auto evidence = call_ok("GET", base + "/evidence", fixtures::kMod1);
    bool hidden = true;
    for (const auto& item : evidence.at("bundle"))
      if (item.value("msg_id", std::string{}) == "m2" || item.value("msg_id", std::string{}) == "m4") hidden = false;
    const auto dump = evidence.dump();
    hidden = hidden && dump.find("body-2") == std::string::npos && dump.find("body-4") == std::string::npos;
    check("removed messages leave no trace in the moderator bundle", hidden,
          std::to_string(evidence.at("bundle").size()) + " items delivered");

    // The moderator's two investigative steps run in seed-dependent order.
    std::string request_id;
    std::string invite_id;
    std::vector<std::function<void()>> steps{
        [&] {
          invite_id = call_ok("POST", base + "/bystander-invites", fixtures::kMod1,
                              json{{"bystander", wendy}, {"involvement", "flag_suspicious"}})
                          .at("invite_id");
        },
        [&] {
          request_id = call_ok("POST", base + "/disclosure-requests", fixtures::kMod1,
                               json{{"targets", {"m2", "m4"}},
                                    {"criticality", "critical"},
                                    {"justification", "A participant flagged messages missing from the bundle."}})
                           .at("request_id");
        }};
    if (rng_() % 2) std::swap(steps[0], steps[1]);
    for (auto& s : steps) s();

    const auto premature = call("POST", "/api/v1/bystander-invites/" + invite_id + "/finding", fixtures::kWendy,
                                json{{"flags", {"m2"}}});
    check("bystander cannot act before reporter consent", premature.status == 403, premature.body.dump());
    call_ok("POST", "/api/v1/bystander-invites/" + invite_id + "/consent", fixtures::kAlice,
            json{{"decision", "approve"}});
    call_ok("POST", "/api/v1/bystander-invites/" + invite_id + "/finding", fixtures::kWendy,
            json{{"flags", {"m2", "m4"}}});
    call_ok("POST", "/api/v1/disclosure-requests/" + request_id + "/respond", fixtures::kAlice,
            json{{"decision", "deny"}});

    const auto mod_view = call_ok("GET", base, fixtures::kMod1);
    const auto flags = mod_view.at("flags");
    const bool dismissible = std::find(flags.begin(), flags.end(), "dismissible_for_nondisclosure") != flags.end();

    bool flag_mode_clean = true;
    for (const auto& inv : mod_view.at("bystander_invites"))
      for (const auto& f : inv.value("flags", json::array()))
        if (f.contains("view")) flag_mode_clean = false;
    flag_mode_clean = flag_mode_clean && mod_view.dump().find("body-2") == std::string::npos &&
                      mod_view.dump().find("body-4") == std::string::npos;

    const auto decided = call_ok("POST", base + "/decide", fixtures::kMod1,
                                 json{{"outcome", "dismiss"}, {"rationale", "reporter withheld critical evidence"}});

    const auto log = audit();
    const auto obj = "report/" + id;
    const auto deny = find(log, "disclosure.deny", obj);
    const auto approve = find(log, "invite.approve", obj);
    const auto contact = find(log, "bystander.contact", obj);
    const auto finding = find(log, "invite.finding", obj);
    const auto decide = find(log, "report.decide", obj);
    const bool deny_logged = deny && deny->detail_json().value("dismissible_for_nondisclosure", false);
    check("report flagged dismissible_for_nondisclosure after critical denial", dismissible && deny_logged,
          "flags=" + flags.dump(), deny ? std::vector<std::uint64_t>{deny->seq} : std::vector<std::uint64_t>{});
    check("flag-mode finding reveals identifiers, never content", flag_mode_clean && finding.has_value(),
          finding ? finding->detail : "no finding event",
          finding ? std::vector<std::uint64_t>{finding->seq} : std::vector<std::uint64_t>{});
    check("bystander contacted only after reporter approval", approve && contact && approve->seq < contact->seq,
          "approve before contact",
          approve && contact ? std::vector<std::uint64_t>{approve->seq, contact->seq} : std::vector<std::uint64_t>{});
    check("moderator may dismiss the report", decided.at("state") == "decided" && decide.has_value(),
          decided.at("decision").dump(), decide ? std::vector<std::uint64_t>{decide->seq} : std::vector<std::uint64_t>{});
  }

  // A screenshot-style free-media item carries no platform attestation.
  void forged_screenshot() {
    at(200'000'000);
    const auto id = file_and_assign(
        json{{"reported", fixtures::kBob},
             {"reason", "threats"},
             {"conversations", {"conv-f2"}},
             {"free_media",
              {{{"claimed_sender", fixtures::kBob.value},
                {"description", "screenshot of a message"},
                {"content", "Bob: I know where you live"}}}}});
    const auto base = "/api/v1/reports/" + id;
    const auto evidence = call_ok("GET", base + "/evidence", fixtures::kMod1);
    const auto& unattested = evidence.at("unattested");
    const bool classed = unattested.size() == 1 && unattested[0].at("provenance") == "unattested";
    const bool excluded = evidence.at("bundle").dump().find("I know where you live") == std::string::npos;

    const auto log = audit();
    const auto filed = find(log, "report.file", "report/" + id);
    const bool logged = filed && filed->detail_json().at("free_media").size() == 1 &&
                        filed->detail_json().at("free_media")[0].at("provenance") == "unattested";
    check("free-media item classed unattested", classed && logged, unattested.dump(),
          filed ? std::vector<std::uint64_t>{filed->seq} : std::vector<std::uint64_t>{});

    const auto exported = call_ok("GET", base + "/export", fixtures::kMod1);
    const auto ok = call("POST", "/api/v1/import", fixtures::kWendy,
                         json{{"bundle", exported.at("bundle")}, {"token", exported.at("token")}});
    check("attestation covers only platform-verified items", excluded && ok.ok() && ok.body.value("mac_valid", false),
          ok.body.dump());

    // Splice the screenshot into the attested bundle, as a forger would.
    auto forged = exported.at("bundle");
    json fake{{"kind", "message"}, {"msg_id", "d9"}, {"level", "full"}, {"sent_at", 21'500},
              {"sender", fixtures::kBob.value}, {"body", "I know where you live"}};
    forged.insert(forged.begin() + static_cast<std::ptrdiff_t>(rng_() % (forged.size() + 1)), fake);
    const auto rejected =
        call("POST", "/api/v1/import", fixtures::kWendy, json{{"bundle", forged}, {"token", exported.at("token")}});
    const auto after = audit();
    const auto rej = find(after, "bundle.import.rejected", "import/" + id);
    check("forged bundle rejected with mac-invalid", rejected.error() == errc::kMacInvalid && rej.has_value(),
          rejected.body.dump(), rej ? std::vector<std::uint64_t>{rej->seq} : std::vector<std::uint64_t>{});
  }

  // Carol shares Bob's display name; the report is filed against Bob.
  void impersonation() {
    at(300'000'000);
    const auto id = file_and_assign(json{{"reported", fixtures::kBob},
                                         {"reason", "harassment"},
                                         {"conversations", {"conv-f3"}},
                                         {"identifier_policy", "immediate"},
                                         {"scope", {{"mode", "participants"}, {"senders", {fixtures::kCarol}}}}});
    const auto base = "/api/v1/reports/" + id;
    const auto view = call_ok("GET", base, fixtures::kMod1);
    bool mismatch = false;
    for (const auto& m : view.at("identity_mismatches"))
      if (m.at("evidence_sender") == fixtures::kCarol.value && m.at("result") == "mismatch") mismatch = true;

    const auto evidence = call_ok("GET", base + "/evidence", fixtures::kMod1);
    bool attributed = !evidence.at("bundle").empty();
    for (const auto& item : evidence.at("bundle")) attributed = attributed && item.at("sender") == fixtures::kCarol.value;

    const auto log = audit();
    const auto filed = find(log, "report.file", "report/" + id);
    const bool logged = filed && filed->detail_json().at("identity_mismatches").size() == 1;
    check("identity attribution shows the impersonator's account", attributed, evidence.at("bundle").dump());
    check("detect_impersonation reports mismatch", mismatch && logged, view.at("identity_mismatches").dump(),
          filed ? std::vector<std::uint64_t>{filed->seq} : std::vector<std::uint64_t>{});
  }

  // One principal files 50 reports inside one logical minute.
  void report_flooding() {
    at(400'000'000);
    const Millis start = now_;
    std::vector<std::string> ids;
    for (int i = 0; i < 50; ++i) {
      at(start + i * 1000);
      const auto res = api_.post("/api/v1/reports", token_for(fixtures::kBob),
                                 json{{"reported", fixtures::kAlice},
                                      {"reason", "spam-" + std::to_string(rng_() % 1000)},
                                      {"conversations", {"conv-f1"}},
                                      {"preset", "whatsapp-5"}});
      if (!res.ok()) throw Error(errc::kValidation, "flood filing failed: " + res.body.dump());
      ids.push_back(res.body.at("report_id"));
    }
    tick();
    std::set<std::string> distinct(ids.begin(), ids.end());
    const auto log = audit();
    std::vector<std::uint64_t> signalled;
    for (const auto& id : ids) {
      const auto e = find(log, "report.file", "report/" + id);
      if (e && e->detail_json().value("flood_signal", false)) signalled.push_back(e->seq);
    }
    const auto last = call_ok("GET", "/api/v1/reports/" + ids.back(), fixtures::kPlatform);
    const auto flags = last.at("flags");
    const bool flagged = std::find(flags.begin(), flags.end(), "filer_flood_signal") != flags.end();
    check("50 distinct reports filed", distinct.size() == 50, std::to_string(distinct.size()) + " ids");
    check("rate signal raised on the filer", flagged && !signalled.empty(),
          std::to_string(signalled.size()) + " filings carry the signal",
          signalled.empty() ? std::vector<std::uint64_t>{} : std::vector<std::uint64_t>{signalled.front()});
    const auto chain = verify_audit_chain(log);
    check("audit chain intact", chain.ok, std::to_string(log.size()) + " events");
  }

  ApiClient api_;
  std::mt19937_64 rng_;
  Millis now_ = 0;
  ScenarioResult* current_ = nullptr;
};

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string junit_xml(const std::vector<ScenarioResult>& results) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<testsuites>\n";
  for (const auto& r : results) {
    const auto failures = std::count_if(r.assertions.begin(), r.assertions.end(), [](const auto& a) { return !a.passed; });
    out << "  <testsuite name=\"" << xml_escape(r.name) << "\" tests=\"" << r.assertions.size() << "\" failures=\""
        << failures << "\" errors=\"" << (r.error.empty() ? 0 : 1) << "\">\n";
    if (!r.error.empty())
      out << "    <testcase name=\"script\"><error message=\"" << xml_escape(r.error) << "\"/></testcase>\n";
    for (const auto& a : r.assertions) {
      out << "    <testcase classname=\"" << xml_escape(r.name) << "\" name=\"" << xml_escape(a.name) << "\">";
      if (!a.passed) out << "<failure message=\"" << xml_escape(a.detail) << "\"/>";
      out << "</testcase>\n";
    }
    out << "  </testsuite>\n";
  }
  out << "</testsuites>\n";
  return out.str();
}

inline void print(std::ostream& os, const ScenarioResult& r) {
  for (const auto& a : r.assertions) {
    os << (a.passed ? "PASS " : "FAIL ") << r.name << ": " << a.name;
    if (!a.audit_seqs.empty()) {
      os << " [audit seq";
      for (auto s : a.audit_seqs) os << " " << s;
      os << "]";
    }
    if (!a.passed) os << " -- " << a.detail;
    os << "\n";
  }
  if (!r.error.empty()) os << "ERROR " << r.name << ": " << r.error << "\n";
}

}  // namespace advrep::harness
