#include <gtest/gtest.h>

#include <random>

#include "../oracles/generators.hpp"
#include "../oracles/scope_oracle.hpp"
#include "support.hpp"

using namespace advrep;
using namespace testsupport;

namespace {

std::vector<ConversationMessages> f1_input() { return {{f1_conversation(), f1()}}; }

std::vector<std::string> ids(const std::vector<Message>& ms) {
  std::vector<std::string> out;
  for (const auto& m : ms) out.push_back(m.msg_id);
  return out;
}

std::vector<std::string> range(int lo, int hi) {
  std::vector<std::string> out;
  for (int i = lo; i <= hi; ++i) out.push_back("m" + std::to_string(i));
  return out;
}

}  // namespace

TEST(Scope, LastFiveOnF1) { EXPECT_EQ(ids(apply_scope(ScopePolicy::last_n(5), f1_input())), range(8, 12)); }

TEST(Scope, TimeWindowInclusive) {
  EXPECT_EQ(ids(apply_scope(ScopePolicy::time_window(4000, 9000), f1_input())), range(4, 9));
}

TEST(Scope, ParticipantsMatchesLinearScan) {
  const auto out = apply_scope(ScopePolicy::participants({A}), f1_input());
  std::vector<std::string> expected;
  for (const auto& m : f1())
    if (m.sender == A) expected.push_back(m.msg_id);
  EXPECT_EQ(ids(out), expected);
  EXPECT_EQ(out.size(), 6u);
}

TEST(Scope, LastThirtyClampsToConversationSize) {
  EXPECT_EQ(apply_scope(ScopePolicy::last_n(30), f1_input()).size(), 12u);
}

TEST(Scope, EmptyConversationListGivesEmptyOutput) {
  EXPECT_TRUE(apply_scope(ScopePolicy::all(), {}).empty());
}

TEST(Scope, PolicyConstructionRejectsInvalid) {
  EXPECT_THROW(ScopePolicy::last_n(0), Error);
  EXPECT_THROW(ScopePolicy::time_window(10, 5), Error);
  EXPECT_THROW(ScopePolicy::cross_conversation(ScopePolicy::cross_conversation(ScopePolicy::all())), Error);
}

TEST(Scope, ShippedPresets) {
  std::map<std::string, std::int64_t> got;
  for (const auto& p : shipped_presets()) {
    ASSERT_EQ(p.policy.mode(), ScopePolicy::Mode::last_n);
    got[p.name] = p.policy.n();
  }
  EXPECT_EQ(got, (std::map<std::string, std::int64_t>{{"google-chat-50", 50}, {"messenger-30", 30}, {"whatsapp-5", 5}}));
}

TEST(Scope, JsonRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto p = gen::policy(rng);
    EXPECT_EQ(scope_from_json(scope_to_json(p)), p);
  }
  EXPECT_THROW(scope_from_json(json{{"mode", "last_n"}, {"n", 0}}), Error);
  EXPECT_THROW(scope_from_json(json{{"mode", "everything"}}), Error);
}

TEST(Scope, CrossConversationUsesSharedConversationsOnly) {
  auto f1c = f1_conversation();
  ConversationMessages other{Conversation{"conv-x", ConversationKind::direct, {A, C}, std::nullopt}, {}};
  Message x;
  x.msg_id = "x1";
  x.conversation_id = "conv-x";
  x.sender = C;
  x.sent_at = 500;
  other.messages.push_back(x);
  const auto out = apply_scope(ScopePolicy::cross_conversation(ScopePolicy::last_n(2)), {{f1c, f1()}, other},
                               ScopeParties{A, B});
  EXPECT_EQ(ids(out), range(11, 12));
}

TEST(ScopeProperties, SubsetOrderAndSize) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 500; ++i) {
    const auto c = gen::conversation(rng, "c", 80);
    const auto p = gen::policy(rng, false);
    const auto out = apply_scope(p, {c});
    std::size_t cursor = 0;
    for (const auto& m : out) {
      while (cursor < c.messages.size() && c.messages[cursor].msg_id != m.msg_id) ++cursor;
      ASSERT_LT(cursor, c.messages.size());
      ++cursor;
    }
    if (p.mode() == ScopePolicy::Mode::last_n)
      EXPECT_EQ(out.size(), std::min<std::size_t>(static_cast<std::size_t>(p.n()), c.messages.size()));
  }
}

TEST(ScopeProperties, ParticipantAndWindowFiltersCommute) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 1000; ++i) {
    const auto c = gen::conversation(rng, "c", 60);
    std::set<AccountId> s;
    for (const auto& p : gen::people())
      if (rng() % 2) s.insert(p);
    const auto a = static_cast<Millis>(rng() % 3100);
    const auto b = static_cast<Millis>(rng() % 3100);
    const auto pw = ScopePolicy::time_window(std::min(a, b), std::max(a, b));
    const auto pp = ScopePolicy::participants(s);
    auto then = [&](const ScopePolicy& first, const ScopePolicy& second) {
      ConversationMessages mid{c.conversation, apply_scope(first, {c})};
      return ids(apply_scope(second, {mid}));
    };
    EXPECT_EQ(then(pp, pw), then(pw, pp));
  }
}

TEST(ScopeProperties, MatchesBruteForceOracle) {
  std::mt19937_64 rng(29);
  for (int i = 0; i < 300; ++i) {
    std::vector<ConversationMessages> convs;
    const auto k = 1 + rng() % 3;
    for (std::size_t j = 0; j < k; ++j) convs.push_back(gen::conversation(rng, "c" + std::to_string(j), 120));
    const auto p = gen::policy(rng);
    const ScopeParties parties{gen::people()[0], gen::people()[1]};
    EXPECT_EQ(ids(apply_scope(p, convs, parties)), ids(oracle::scope(p, convs, parties)));
  }
}
