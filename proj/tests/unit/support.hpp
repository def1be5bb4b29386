#pragma once

#include <random>
#include <string>
#include <vector>

#include "advrep/authenticator.hpp"
#include "advrep/model.hpp"

namespace testsupport {

inline const advrep::AccountId A{"acct-alice"};
inline const advrep::AccountId B{"acct-bob"};
inline const advrep::AccountId C{"acct-carol"};
inline const advrep::AccountId W{"acct-wendy"};

inline advrep::PlatformKey test_key(std::uint8_t fill = 7) {
  advrep::PlatformKey k;
  k.key_id = "test-key";
  k.secret.fill(fill);
  return k;
}

// F1: m1..m12, sent_at = 1000*i, odd messages from B, even from A.
inline std::vector<advrep::Message> f1(const advrep::PlatformKey& key = test_key()) {
  std::vector<advrep::Message> out;
  for (int i = 1; i <= 12; ++i) {
    advrep::Message m;
    m.msg_id = "m" + std::to_string(i);
    m.conversation_id = "conv-f1";
    m.sender = i % 2 ? B : A;
    m.sent_at = 1000 * i;
    m.body = i == 3 ? "meet me at 42 Elm St" : i == 7 ? "you are an idiot" : "body-" + std::to_string(i);
    m.frank_tag = advrep::frank(m, key);
    out.push_back(m);
  }
  return out;
}

inline advrep::Conversation f1_conversation() {
  advrep::Conversation c;
  c.conv_id = "conv-f1";
  c.kind = advrep::ConversationKind::private_group;
  c.participants = {A, B, W};
  return c;
}

inline std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
  static const std::vector<std::string> kAlphabet{"a", "b", "c", " ", "x", "1", "é", "ß", "\xe2\x82\xac", "!"};
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, kAlphabet.size() - 1);
  std::string s;
  const auto n = len(rng);
  for (std::size_t i = 0; i < n; ++i) s += kAlphabet[pick(rng)];
  return s;
}

}  // namespace testsupport
