#pragma once

#include <memory>
#include <string>

#include "advrep/config.hpp"
#include "advrep/fixtures.hpp"

namespace testsupport {

namespace fx = advrep::fixtures;

inline std::unique_ptr<advrep::Engine> seeded_engine(advrep::EngineConfig config = {}, std::uint64_t key_seed = 1) {
  auto e = std::make_unique<advrep::Engine>(std::move(config), advrep::seeded_keys(key_seed));
  fx::seed(*e);
  return e;
}

inline std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const advrep::Error& e) {
    return e.code();
  }
  return "ok";
}

inline std::size_t count_action(const advrep::Engine& e, const std::string& action) {
  std::size_t n = 0;
  for (const auto& ev : e.audit_log()) n += ev.action == action;
  return n;
}

}  // namespace testsupport
