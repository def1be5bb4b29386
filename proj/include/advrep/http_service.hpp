#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>

#include <httplib.h>

#include "advrep/config.hpp"
#include "advrep/journal.hpp"

namespace advrep {

inline constexpr const char* kLogicalTimeHeader = "X-Logical-Time";

inline int http_status(const std::string& code) {
  static const std::map<std::string, int> kStatus{
      {errc::kUnauthorized, 401},       {errc::kForbidden, 403},         {errc::kNoGrant, 403},
      {errc::kGrantExpired, 403},       {errc::kGrantExhausted, 403},    {errc::kNotFound, 404},
      {errc::kInvalidState, 409},       {errc::kBlocked, 409},           {errc::kWindowExpired, 409},
      {errc::kAppealWindow, 409},       {errc::kAssignmentImpossible, 409}, {errc::kMacInvalid, 422},
      {errc::kUnknownKey, 422},         {errc::kAttestationRefused, 422}};
  auto it = kStatus.find(code);
  return it == kStatus.end() ? 400 : it->second;
}

inline Millis wall_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

class Service {
 public:
  Service(ServiceConfig config, std::unique_ptr<DurableEngine> engine)
      : config_(std::move(config)), engine_(std::move(engine)) {
    for (const auto& s : config_.sessions) add_session(s);
    routes();
  }

  void add_session(const ApiSession& s) {
    std::unique_lock lock(sessions_mu_);
    sessions_[s.token] = s.principal;
  }

  // Binds to `port` (0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port) {
    if (port == 0) {
      const int bound = server_.bind_to_any_port(host);
      if (bound < 0) throw Error(errc::kConfig, "cannot bind " + host);
      return bound;
    }
    if (!server_.bind_to_port(host, port)) throw Error(errc::kConfig, "port " + std::to_string(port) + " is busy");
    return port;
  }

  void run() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

  DurableEngine& engine() { return *engine_; }

 private:
  using Args = std::function<json(const httplib::Request&)>;

  std::optional<AccountId> principal_of(const httplib::Request& req) {
    const auto auth = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (auth.rfind(prefix, 0) != 0) return std::nullopt;
    std::shared_lock lock(sessions_mu_);
    auto it = sessions_.find(auth.substr(prefix.size()));
    if (it == sessions_.end()) return std::nullopt;
    return it->second;
  }

  Millis now_for(const httplib::Request& req) {
    if (config_.harness_mode && req.has_header(kLogicalTimeHeader)) {
      try {
        return std::stoll(req.get_header_value(kLogicalTimeHeader));
      } catch (const std::exception&) {
        throw Error(errc::kValidation, std::string(kLogicalTimeHeader) + " must be an integer");
      }
    }
    return wall_clock_ms();
  }

  static void send_error(httplib::Response& res, const std::string& code, const std::string& detail) {
    res.status = http_status(code);
    res.set_content(json{{"error", code}, {"detail", detail}}.dump(), "application/json");
  }

  static json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(errc::kValidation, "request body must be a JSON object");
    return j;
  }

  void handle(const httplib::Request& req, httplib::Response& res, const std::string& op, const Args& args) {
    try {
      auto principal = principal_of(req);
      if (!principal) return send_error(res, errc::kUnauthorized, "missing or unknown bearer token");
      Command cmd{op, *principal, now_for(req), args(req)};
      auto result = engine_->execute(cmd);
      res.status = 200;
      res.set_content(result.dump(), "application/json");
    } catch (const Error& e) {
      send_error(res, e.code(), e.detail());
    } catch (const json::exception& e) {
      send_error(res, errc::kValidation, e.what());
    } catch (const std::exception& e) {
      send_error(res, "internal", e.what());
    }
  }

  void post(const std::string& pattern, const std::string& op, Args args) {
    server_.Post(pattern, [this, op, args](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, op, args);
    });
  }
  void get(const std::string& pattern, const std::string& op, Args args) {
    server_.Get(pattern, [this, op, args](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, op, args);
    });
  }

  static Args with(const char* key) {
    return [key](const httplib::Request& req) {
      auto j = body_of(req);
      j[key] = req.matches[1].str();
      return j;
    };
  }

  // Accepts either {"<field>": {...}} or the bare object.
  static Args wrap(const char* key, const char* field) {
    return [key, field](const httplib::Request& req) {
      auto j = body_of(req);
      json out = j.contains(field) ? j : json{{field, j}};
      out[key] = req.matches[1].str();
      return out;
    };
  }

  void routes() {
    const std::string v = "/api/v1";
    const std::string id = "([^/]+)";
    post(v + "/reports", "report.file", [](const auto& req) { return body_of(req); });
    get(v + "/reports/" + id, "report.get", with("report_id"));
    post(v + "/reports/" + id + "/scope", "report.scope", with("report_id"));
    post(v + "/reports/" + id + "/views", "report.views", with("report_id"));
    post(v + "/reports/" + id + "/grants", "report.grant", with("report_id"));
    get(v + "/reports/" + id + "/evidence", "report.evidence", with("report_id"));
    post(v + "/reports/" + id + "/disclosure-requests", "disclosure.open", with("report_id"));
    post(v + "/disclosure-requests/" + id + "/respond", "disclosure.respond", with("request_id"));
    post(v + "/disclosure-requests/" + id + "/withdraw", "disclosure.withdraw", with("request_id"));
    post(v + "/reports/" + id + "/bystander-invites", "invite.create", with("report_id"));
    post(v + "/bystander-invites/" + id + "/consent", "invite.consent", with("invite_id"));
    post(v + "/bystander-invites/" + id + "/finding", "invite.finding", wrap("invite_id", "finding"));
    post(v + "/reports/" + id + "/assign", "report.assign", with("report_id"));
    post(v + "/reports/" + id + "/decide", "report.decide", wrap("report_id", "decision"));
    post(v + "/reports/" + id + "/notify", "report.notify", with("report_id"));
    server_.Post(v + "/reports/" + id + "/appeal", [this](const httplib::Request& req, httplib::Response& res) {
      bool resolution = false;
      try {
        resolution = body_of(req).contains("resolution");
      } catch (const Error&) {
      }
      handle(req, res, resolution ? "report.resolve_appeal" : "report.appeal", with("report_id"));
    });
    post(v + "/reports/" + id + "/terminate", "report.terminate", with("report_id"));
    post(v + "/reports/" + id + "/close", "report.close", with("report_id"));
    get(v + "/reports/" + id + "/audit", "audit.report", with("report_id"));
    get(v + "/reports/" + id + "/export", "report.export", with("report_id"));
    get(v + "/reports/" + id + "/resolve", "report.resolve", [](const httplib::Request& req) {
      return json{{"report_id", req.matches[1].str()}, {"pseudonym", req.get_param_value("pseudonym")}};
    });
    post(v + "/reports/" + id + "/tags", "tag.assign", with("report_id"));
    get(v + "/reports/" + id + "/tags", "tag.list", [](const httplib::Request& req) {
      return json{{"report_id", req.matches[1].str()}, {"subject", req.get_param_value("subject")}};
    });
    post(v + "/import", "bundle.import", [](const auto& req) { return body_of(req); });
    post(v + "/conversations/" + id + "/segments", "segment.append", with("conversation_id"));
    get(v + "/conversations/" + id + "/reportable", "segment.reportable", with("conversation_id"));
    post(v + "/conversations/" + id + "/messages", "message.post", with("conversation_id"));
    get(v + "/moderators/" + id + "/profile", "moderator.profile", with("handle"));
    get(v + "/inbox", "inbox.list", [](const auto&) { return json::object(); });
    get(v + "/lifecycle/transitions", "lifecycle.table", [](const auto&) { return json::object(); });
    get(v + "/state", "state.dump", [](const auto&) { return json::object(); });
    server_.Get(v + "/audit", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, "audit.full", [](const auto&) { return json::object(); });
      if (res.status == 200) {
        std::string ndjson;
        for (const auto& e : json::parse(res.body)) ndjson += e.dump() + "\n";
        res.set_content(ndjson, "application/x-ndjson");
      }
    });
  }

  ServiceConfig config_;
  std::unique_ptr<DurableEngine> engine_;
  httplib::Server server_;
  std::shared_mutex sessions_mu_;
  std::map<std::string, AccountId> sessions_;
};

struct ApiResult {
  int status = 0;
  json body;

  bool ok() const { return status == 200; }
  std::string error() const { return body.is_object() ? body.value("error", std::string{}) : std::string{}; }
};

// Thin JSON client; a logical time is sent when set.
class ApiClient {
 public:
  explicit ApiClient(const std::string& base_url) : client_(base_url) {
    client_.set_connection_timeout(5);
    client_.set_read_timeout(30);
  }

  void set_logical_time(std::optional<Millis> t) { time_ = t; }

  ApiResult get(const std::string& path, const std::string& token) { return call("GET", path, token, json()); }
  ApiResult post(const std::string& path, const std::string& token, const json& body) {
    return call("POST", path, token, body);
  }

  std::string get_text(const std::string& path, const std::string& token) {
    auto res = client_.Get(path, headers(token));
    if (!res) throw Error(errc::kConfig, "service unreachable: " + httplib::to_string(res.error()));
    return res->body;
  }

 private:
  httplib::Headers headers(const std::string& token) const {
    httplib::Headers h{{"Authorization", "Bearer " + token}};
    if (time_) h.emplace(kLogicalTimeHeader, std::to_string(*time_));
    return h;
  }

  ApiResult call(const std::string& method, const std::string& path, const std::string& token, const json& body) {
    httplib::Result res = method == "GET"
                              ? client_.Get(path, headers(token))
                              : client_.Post(path, headers(token), body.is_null() ? "{}" : body.dump(),
                                             "application/json");
    if (!res) throw Error(errc::kConfig, "service unreachable: " + httplib::to_string(res.error()));
    ApiResult out{res->status, json::parse(res->body, nullptr, false)};
    if (out.body.is_discarded()) out.body = res->body;
    return out;
  }

  httplib::Client client_;
  std::optional<Millis> time_;
};

}  // namespace advrep
