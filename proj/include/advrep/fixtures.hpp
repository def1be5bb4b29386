#pragma once

#include <string>
#include <vector>

#include "advrep/config.hpp"
#include "advrep/engine.hpp"

// Seed data shared by the service (--seed-fixtures), the harness and tests.
//
//   conv-f1   private group {alice, bob, wendy, mod2}; m1..m12, odd from bob
//   conv-f2   direct {alice, bob}
//   conv-f3   public channel {alice, bob, carol, wendy}; carol displays as "Bob"
//   conv-voice  group {alice, bob, wendy}, ephemeral, last 30 seconds
//   conv-story  direct {alice, bob}, ephemeral, last 10 messages
namespace advrep::fixtures {

inline const AccountId kAlice{"acct-alice"};
inline const AccountId kBob{"acct-bob"};
inline const AccountId kCarol{"acct-carol"};
inline const AccountId kWendy{"acct-wendy"};
inline const AccountId kMod1{"acct-mod1"};
inline const AccountId kMod2{"acct-mod2"};
inline const AccountId kMod3{"acct-mod3"};
inline const AccountId kPlatform{"acct-platform"};

inline constexpr Millis kSeedTime = 1;

inline std::string f1_body(int i) {
  if (i == 3) return "meet me at 42 Elm St";
  if (i == 7) return "you are an idiot";
  return "body-" + std::to_string(i);
}

inline std::vector<Command> commands() {
  std::vector<Command> out;
  auto add = [&](std::string op, json args) { out.push_back(Command{std::move(op), kSystem, kSeedTime, std::move(args)}); };
  auto profile = [&](const AccountId& a, const char* name, std::vector<std::string> roles,
                     std::optional<json> mod = std::nullopt) {
    json args{{"profile", {{"account_id", a}, {"display_name", name}, {"avatar_ref", "avatar/" + a.value},
                           {"join_date", kSeedTime}, {"roles", roles}}}};
    if (mod) args["moderator_profile"] = *mod;
    add("profile.add", args);
  };
  profile(kAlice, "Alice", {"member"});
  profile(kBob, "Bob", {"member"});
  profile(kCarol, "Bob", {"member"});
  profile(kWendy, "Wendy", {"member"});
  profile(kMod1, "Morgan", {"member", "community_moderator"},
          json{{"handle", "Kestrel"}, {"tenure_days", 420}, {"reports_reviewed", 0},
               {"endorsed_values", {"fairness", "privacy"}}});
  profile(kMod2, "Dana", {"member", "community_moderator"},
          json{{"handle", "Heron"}, {"tenure_days", 90}, {"reports_reviewed", 0},
               {"endorsed_values", {"transparency"}}});
  profile(kMod3, "Robin", {"member", "community_moderator", "senior_moderator"},
          json{{"handle", "Osprey"}, {"tenure_days", 1500}, {"reports_reviewed", 0},
               {"endorsed_values", {"privacy", "restorative"}}});
  profile(kPlatform, "Trust Team", {"platform_moderator"});

  auto conversation = [&](const char* id, const char* kind, std::vector<AccountId> who,
                          std::optional<EphemeralWindow> w = std::nullopt) {
    json c{{"conv_id", id}, {"kind", kind}, {"participants", who}};
    if (w) c["ephemeral"] = *w;
    add("conversation.add", json{{"conversation", c}});
  };
  conversation("conv-f1", "private_group", {kAlice, kBob, kWendy, kMod2});
  conversation("conv-f2", "direct", {kAlice, kBob});
  conversation("conv-f3", "public_channel", {kAlice, kBob, kCarol, kWendy});
  conversation("conv-voice", "private_group", {kAlice, kBob, kWendy}, EphemeralWindow::seconds(30));
  conversation("conv-story", "direct", {kAlice, kBob}, EphemeralWindow::messages(10));

  auto post = [&](const char* conv, std::string id, const AccountId& from, Millis at, std::string body) {
    add("message.post", json{{"conversation_id", conv}, {"msg_id", std::move(id)}, {"sender", from},
                             {"sent_at", at}, {"body", std::move(body)}});
  };
  for (int i = 1; i <= 12; ++i) post("conv-f1", "m" + std::to_string(i), i % 2 ? kBob : kAlice, 1000 * i, f1_body(i));
  post("conv-f2", "d1", kAlice, 20'000, "why did you post that");
  post("conv-f2", "d2", kBob, 21'000, "because you deserve it, loser");
  post("conv-f2", "d3", kAlice, 22'000, "please stop");
  post("conv-f3", "p1", kBob, 30'000, "hey all");
  post("conv-f3", "p2", kCarol, 31'000, "Alice is a liar and I hate her");
  post("conv-f3", "p3", kAlice, 32'000, "what?");
  post("conv-f3", "p4", kCarol, 33'000, "you heard me, idiot");
  post("conv-f3", "p5", kWendy, 34'000, "that is not Bob's usual style");
  post("conv-f3", "p6", kBob, 35'000, "that was not me");
  return out;
}

inline std::vector<ApiSession> sessions() {
  std::vector<ApiSession> out;
  for (const auto& a : {kAlice, kBob, kCarol, kWendy, kMod1, kMod2, kMod3, kPlatform})
    out.push_back({"tok-" + a.value.substr(5), a});
  return out;
}

template <typename Executor>
void seed(Executor& engine) {
  for (const auto& c : commands()) engine.execute(c);
}

}  // namespace advrep::fixtures
