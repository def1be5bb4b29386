#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace advrep {

// Every failure surfaced by the library carries a stable machine code (used as
// the "error" field of API responses) plus free-text detail.
class Error : public std::runtime_error {
 public:
  Error(std::string code, std::string detail)
      : std::runtime_error(code + ": " + detail),
        code_(std::move(code)),
        detail_(std::move(detail)) {}

  const std::string& code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string code_;
  std::string detail_;
};

namespace errc {
inline constexpr const char* kValidation = "validation";
inline constexpr const char* kOversize = "oversize";
inline constexpr const char* kUnauthorized = "unauthorized";
inline constexpr const char* kForbidden = "forbidden";
inline constexpr const char* kNotFound = "not-found";
inline constexpr const char* kInvalidState = "invalid-state";
inline constexpr const char* kInvalidTarget = "invalid-target";
inline constexpr const char* kEmptyScope = "empty-scope";
inline constexpr const char* kAttestationRefused = "attestation-refused";
inline constexpr const char* kMacInvalid = "mac-invalid";
inline constexpr const char* kUnknownKey = "unknown-key";
inline constexpr const char* kUnknownQuestion = "unknown-question";
inline constexpr const char* kClock = "clock";
inline constexpr const char* kWindowExpired = "window-expired";
inline constexpr const char* kNoGrant = "no-grant";
inline constexpr const char* kGrantExpired = "grant-expired";
inline constexpr const char* kGrantExhausted = "grant-exhausted";
inline constexpr const char* kAssignmentImpossible = "assignment-impossible";
inline constexpr const char* kBlocked = "blocked";
inline constexpr const char* kAppealWindow = "appeal-window-closed";
inline constexpr const char* kConfig = "config";
}  // namespace errc

}  // namespace advrep
