#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "advrep/engine.hpp"

namespace advrep {

struct ApiSession {
  std::string token;
  AccountId principal;
};

struct ServiceConfig {
  EngineConfig engine;
  int port = 8080;
  std::string key_store_path = "advrep-keys.json";
  std::string persistence_path = "advrep-journal.ndjson";
  bool harness_mode = false;
  std::vector<ApiSession> sessions;
};

namespace detail {

template <typename F>
void config_field(const std::string& path, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.code() == errc::kConfig && e.detail().rfind("config field", 0) == 0) throw;
    throw Error(errc::kConfig, "config field '" + path + "': " + e.detail());
  } catch (const std::exception& e) {
    throw Error(errc::kConfig, "config field '" + path + "': " + e.what());
  }
}

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

// Validates every field; the first problem is reported with its path.
inline ServiceConfig parse_config(const json& j) {
  using detail::config_field;
  if (!j.is_object()) throw Error(errc::kConfig, "config must be a JSON object");
  static const std::set<std::string> kKnown{"port",          "key_store",          "persistence",
                                            "harness_mode",  "identifier_policy",  "appeal_window_days",
                                            "moderators_per_report", "flood_threshold_per_minute",
                                            "scope_presets", "minimizer",          "ephemeral",
                                            "conversations", "sessions"};
  for (const auto& [k, v] : j.items())
    if (!kKnown.count(k)) throw Error(errc::kConfig, "config field '" + k + "': unknown field");

  ServiceConfig c;
  auto& e = c.engine;
  if (j.contains("port"))
    config_field("port", [&] {
      c.port = j.at("port").get<int>();
      if (c.port < 0 || c.port > 65535) throw Error(errc::kConfig, "must be in 0..65535");
    });
  if (j.contains("key_store"))
    config_field("key_store", [&] { c.key_store_path = j.at("key_store").get<std::string>(); });
  if (j.contains("persistence"))
    config_field("persistence", [&] { c.persistence_path = j.at("persistence").get<std::string>(); });
  if (j.contains("harness_mode"))
    config_field("harness_mode", [&] { c.harness_mode = j.at("harness_mode").get<bool>(); });
  if (j.contains("identifier_policy"))
    config_field("identifier_policy", [&] {
      e.identifier_policy = enum_from<IdentifierPolicy>(j.at("identifier_policy"), "identifier_policy");
    });
  if (j.contains("appeal_window_days"))
    config_field("appeal_window_days", [&] {
      e.appeal_window_days = j.at("appeal_window_days").get<std::int64_t>();
      if (e.appeal_window_days < 1) throw Error(errc::kConfig, "must be >= 1");
    });
  if (j.contains("moderators_per_report"))
    config_field("moderators_per_report", [&] {
      const auto n = j.at("moderators_per_report").get<std::int64_t>();
      if (n < 1) throw Error(errc::kConfig, "must be >= 1");
      e.moderators_per_report = static_cast<std::size_t>(n);
    });
  if (j.contains("flood_threshold_per_minute"))
    config_field("flood_threshold_per_minute", [&] {
      e.flood_threshold_per_minute = j.at("flood_threshold_per_minute").get<std::int64_t>();
      if (e.flood_threshold_per_minute < 1) throw Error(errc::kConfig, "must be >= 1");
    });
  if (j.contains("scope_presets")) {
    for (const auto& [name, policy] : j.at("scope_presets").items())
      config_field("scope_presets." + name, [&] { e.presets.insert_or_assign(name, scope_from_json(policy)); });
  }
  if (j.contains("minimizer"))
    config_field("minimizer", [&] { e.minimizer = j.at("minimizer").get<MinimizerConfig>(); });
  if (j.contains("ephemeral"))
    config_field("ephemeral", [&] {
      const auto& w = j.at("ephemeral");
      config_field("ephemeral.n", [&] {
        if (!w.contains("n") || w.at("n").get<std::int64_t>() < 1) throw Error(errc::kConfig, "window n must be >= 1");
      });
      e.ephemeral_default = w.get<EphemeralWindow>();
    });
  if (j.contains("conversations")) {
    for (const auto& [id, conv] : j.at("conversations").items()) {
      if (!conv.contains("ephemeral")) continue;
      const auto path = "conversations." + id + ".ephemeral";
      const auto& w = conv.at("ephemeral");
      config_field(path + ".n", [&] {
        if (!w.contains("n") || w.at("n").get<std::int64_t>() < 1) throw Error(errc::kConfig, "window n must be >= 1");
      });
      config_field(path, [&] { e.conversation_windows.insert_or_assign(id, w.get<EphemeralWindow>()); });
    }
  }
  if (j.contains("sessions")) {
    std::size_t i = 0;
    for (const auto& s : j.at("sessions")) {
      config_field("sessions[" + std::to_string(i++) + "]", [&] {
        ApiSession session{s.at("token").get<std::string>(), s.at("principal").get<AccountId>()};
        if (session.token.empty()) throw Error(errc::kConfig, "token must be non-empty");
        if (session.principal == kSystem) throw Error(errc::kConfig, "principal 'system' is reserved");
        c.sessions.push_back(std::move(session));
      });
    }
  }
  return c;
}

inline ServiceConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::kConfig, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto text = ss.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(errc::kConfig, path + ":" + std::to_string(detail::line_of(text, e.byte)) + ": " + e.what());
  }
  return parse_config(j);
}

// Loads the key store, creating it with a fresh random key if absent.
inline KeyStore load_or_create_keys(const std::string& path) {
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    try {
      return KeyStore::from_file_json(json::parse(in));
    } catch (const json::exception& e) {
      throw Error(errc::kConfig, "key store " + path + ": " + e.what());
    }
  }
  KeyStore ks(PlatformKey{"k1", random_secret()});
  std::ofstream out(path);
  if (!out) throw Error(errc::kConfig, "cannot write key store " + path);
  out << ks.to_file_json().dump(2) << "\n";
  std::filesystem::permissions(path, std::filesystem::perms::owner_read | std::filesystem::perms::owner_write);
  return ks;
}

// Deterministic key for harness runs; the seed fixes every MAC.
inline KeyStore seeded_keys(std::uint64_t seed) {
  Bytes material;
  put_field(material, "advrep-harness-key");
  put_u64_be(material, seed);
  return KeyStore(PlatformKey{"harness-" + std::to_string(seed), sha256(material)});
}

}  // namespace advrep
