#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "advrep/model.hpp"
#include "advrep/utf8.hpp"

namespace advrep {

// ---------------------------------------------------------------------------
// Redaction spans
// ---------------------------------------------------------------------------

enum class RedactionOrigin { auto_detected, manual_selected_auto_label, manual_replacement };

NLOHMANN_JSON_SERIALIZE_ENUM(RedactionOrigin,
                             {{RedactionOrigin::auto_detected, "auto_detected"},
                              {RedactionOrigin::manual_selected_auto_label, "manual_selected_auto_label"},
                              {RedactionOrigin::manual_replacement, "manual_replacement"}})

inline constexpr const char* kAutoRedactionLabel = "[REDACTED]";

inline const std::vector<std::string>& redaction_categories() {
  static const std::vector<std::string> kCategories{"home address", "real name", "phone number", "other"};
  return kCategories;
}

// Offsets are character (code point) offsets into the message body; end is
// exclusive.
struct RedactionSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string replacement;
  RedactionOrigin origin = RedactionOrigin::auto_detected;

  static RedactionSpan automatic(std::size_t start, std::size_t end) {
    return {start, end, kAutoRedactionLabel, RedactionOrigin::auto_detected};
  }

  static RedactionSpan labelled(std::size_t start, std::size_t end, const std::string& category) {
    const auto& cats = redaction_categories();
    if (std::find(cats.begin(), cats.end(), category) == cats.end())
      throw Error(errc::kValidation, "unknown redaction category '" + category + "'");
    return {start, end, "[REDACTED: " + category + "]", RedactionOrigin::manual_selected_auto_label};
  }

  static RedactionSpan manual(std::size_t start, std::size_t end, std::string replacement) {
    return {start, end, std::move(replacement), RedactionOrigin::manual_replacement};
  }

  bool operator==(const RedactionSpan&) const = default;
};

inline void to_json(json& j, const RedactionSpan& s) {
  j = json{{"start", s.start}, {"end", s.end}, {"replacement", s.replacement}, {"origin", s.origin}};
}

inline void from_json(const json& j, RedactionSpan& s) {
  const auto start = j.at("start").get<std::size_t>();
  const auto end = j.at("end").get<std::size_t>();
  const auto origin = j.value("origin", std::string("manual_replacement"));
  if (origin == "auto_detected") s = RedactionSpan::automatic(start, end);
  else if (origin == "manual_selected_auto_label") s = RedactionSpan::labelled(start, end, j.at("category").get<std::string>());
  else if (origin == "manual_replacement") s = RedactionSpan::manual(start, end, j.at("replacement").get<std::string>());
  else throw Error(errc::kValidation, "unknown redaction origin '" + origin + "'");
}

// ---------------------------------------------------------------------------
// Visibility levels
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& attribute_names() {
  static const std::vector<std::string> kNames{"length_chars", "contains_link", "contains_image_ref",
                                               "keyword_hits", "sentiment"};
  return kNames;
}

struct VisibilityLevel {
  enum class Kind { removed, metadata_only, attributes, answer, redacted, full };

  Kind kind = Kind::full;
  std::vector<RedactionSpan> spans;          // redacted
  std::vector<std::string> attributes;       // attributes
  std::string question_id;                   // answer

  static VisibilityLevel removed() { return {Kind::removed, {}, {}, {}}; }
  static VisibilityLevel metadata_only() { return {Kind::metadata_only, {}, {}, {}}; }
  static VisibilityLevel full() { return {Kind::full, {}, {}, {}}; }
  static VisibilityLevel redacted(std::vector<RedactionSpan> spans) {
    return {Kind::redacted, std::move(spans), {}, {}};
  }
  static VisibilityLevel with_attributes(std::vector<std::string> names) {
    return {Kind::attributes, {}, std::move(names), {}};
  }
  static VisibilityLevel answer(std::string question_id) { return {Kind::answer, {}, {}, std::move(question_id)}; }

  bool operator==(const VisibilityLevel&) const = default;
};

NLOHMANN_JSON_SERIALIZE_ENUM(VisibilityLevel::Kind, {{VisibilityLevel::Kind::removed, "removed"},
                                                     {VisibilityLevel::Kind::metadata_only, "metadata_only"},
                                                     {VisibilityLevel::Kind::attributes, "attributes"},
                                                     {VisibilityLevel::Kind::answer, "answer"},
                                                     {VisibilityLevel::Kind::redacted, "redacted"},
                                                     {VisibilityLevel::Kind::full, "full"}})

inline void to_json(json& j, const VisibilityLevel& l) {
  j = json{{"level", l.kind}};
  if (l.kind == VisibilityLevel::Kind::redacted) j["spans"] = l.spans;
  if (l.kind == VisibilityLevel::Kind::attributes) j["attributes"] = l.attributes;
  if (l.kind == VisibilityLevel::Kind::answer) j["question_id"] = l.question_id;
}

inline void from_json(const json& j, VisibilityLevel& l) {
  l = VisibilityLevel{};
  if (j.is_string()) {
    l.kind = enum_from<VisibilityLevel::Kind>(j, "level");
  } else {
    l.kind = enum_from<VisibilityLevel::Kind>(j.at("level"), "level");
    if (l.kind == VisibilityLevel::Kind::redacted) l.spans = j.at("spans").get<std::vector<RedactionSpan>>();
    if (l.kind == VisibilityLevel::Kind::attributes) l.attributes = j.at("attributes").get<std::vector<std::string>>();
    if (l.kind == VisibilityLevel::Kind::answer) l.question_id = j.at("question_id").get<std::string>();
  }
}

// Partial reveal order: removed < metadata_only < {redacted, attributes} < full,
// and metadata_only < answer. Redacted and attributes are incomparable, as is
// answer with everything above metadata_only.
inline bool reveals_at_most(const VisibilityLevel& a, const VisibilityLevel& b) {
  using K = VisibilityLevel::Kind;
  if (a.kind == K::removed) return true;
  if (b.kind == K::removed) return false;
  if (a.kind == K::metadata_only) return true;
  if (a.kind == K::full) return b.kind == K::full;
  if (a.kind == K::answer) return b.kind == K::answer && a.question_id == b.question_id;
  if (b.kind == K::full) return a.kind == K::redacted || a.kind == K::attributes;
  if (a.kind == K::attributes && b.kind == K::attributes) {
    return std::all_of(a.attributes.begin(), a.attributes.end(), [&](const std::string& n) {
      return std::find(b.attributes.begin(), b.attributes.end(), n) != b.attributes.end();
    });
  }
  if (a.kind == K::redacted && b.kind == K::redacted) return a == b;
  return false;
}

inline bool comparable(const VisibilityLevel& a, const VisibilityLevel& b) {
  return reveals_at_most(a, b) || reveals_at_most(b, a);
}

// ---------------------------------------------------------------------------
// Configuration: detectors, lexicons, sentiment
// ---------------------------------------------------------------------------

struct MinimizerConfig {
  std::vector<std::string> keywords{"idiot", "stupid", "kill", "hate", "loser"};
  std::vector<std::string> negative_words{"idiot", "stupid", "hate", "loser", "ugly", "awful", "kill"};
  std::vector<std::string> positive_words{"thanks", "great", "love", "nice", "good", "welcome"};
  std::set<std::string> detectors{"street_address", "phone_number", "email"};
};

inline void from_json(const json& j, MinimizerConfig& c) {
  c = MinimizerConfig{};
  if (j.contains("keywords")) j.at("keywords").get_to(c.keywords);
  if (j.contains("negative_words")) j.at("negative_words").get_to(c.negative_words);
  if (j.contains("positive_words")) j.at("positive_words").get_to(c.positive_words);
  if (j.contains("detectors")) {
    j.at("detectors").get_to(c.detectors);
    for (const auto& d : c.detectors) {
      if (d != "street_address" && d != "phone_number" && d != "email")
        throw Error(errc::kConfig, "detectors: unknown detector '" + d + "'");
    }
  }
}

inline void to_json(json& j, const MinimizerConfig& c) {
  j = json{{"keywords", c.keywords},
           {"negative_words", c.negative_words},
           {"positive_words", c.positive_words},
           {"detectors", c.detectors}};
}

enum class Sentiment { negative, neutral, positive };

NLOHMANN_JSON_SERIALIZE_ENUM(Sentiment, {{Sentiment::negative, "negative"},
                                         {Sentiment::neutral, "neutral"},
                                         {Sentiment::positive, "positive"}})

struct AttributeSet {
  std::int64_t length_chars = 0;
  bool contains_link = false;
  bool contains_image_ref = false;
  std::vector<std::string> keyword_hits;
  Sentiment sentiment = Sentiment::neutral;

  json value_of(const std::string& name) const {
    if (name == "length_chars") return length_chars;
    if (name == "contains_link") return contains_link;
    if (name == "contains_image_ref") return contains_image_ref;
    if (name == "keyword_hits") return keyword_hits;
    if (name == "sentiment") return sentiment;
    throw Error(errc::kValidation, "unknown attribute '" + name + "'");
  }
};

namespace detail {

inline std::vector<std::string> lower_words(const std::string& body) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : body) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

}  // namespace detail

inline AttributeSet compute_attributes(const std::string& body, const MinimizerConfig& config) {
  static const std::regex kLink(R"((https?://|www\.)\S+)", std::regex::icase);
  static const std::regex kImage(R"((\.(png|jpe?g|gif|webp)\b)|\[image\])", std::regex::icase);
  AttributeSet a;
  a.length_chars = static_cast<std::int64_t>(utf8::length(body));
  a.contains_link = std::regex_search(body, kLink);
  a.contains_image_ref = std::regex_search(body, kImage);
  const auto words = detail::lower_words(body);
  const std::set<std::string> present(words.begin(), words.end());
  for (const auto& k : config.keywords) {
    if (present.count(k)) a.keyword_hits.push_back(k);
  }
  int score = 0;
  for (const auto& w : words) {
    if (std::find(config.positive_words.begin(), config.positive_words.end(), w) != config.positive_words.end()) ++score;
    if (std::find(config.negative_words.begin(), config.negative_words.end(), w) != config.negative_words.end()) --score;
  }
  a.sentiment = score <= -1 ? Sentiment::negative : (score >= 1 ? Sentiment::positive : Sentiment::neutral);
  return a;
}

// ---------------------------------------------------------------------------
// Pluggable answerer for the open-question level
// ---------------------------------------------------------------------------

class Answerer {
 public:
  virtual ~Answerer() = default;
  virtual std::string answer(std::span<const Message> messages, const std::string& question_id) = 0;
  virtual bool knows(const std::string& question_id) const = 0;
  // Answerers that are not safe for concurrent calls return true; the caller
  // then serializes access.
  virtual bool serialized() const { return false; }
};

// Content-free canned answers; never echoes message text.
class StubAnswerer final : public Answerer {
 public:
  std::string answer(std::span<const Message>, const std::string& question_id) override {
    if (!knows(question_id)) throw Error(errc::kUnknownQuestion, "unknown question '" + question_id + "'");
    return "STUB-ANSWER(" + question_id + ")";
  }

  bool knows(const std::string& question_id) const override {
    return question_id == "who-initiated" || question_id == "is-harassing" || question_id == "tone";
  }
};

// Wraps any answerer, serializing calls when it declares itself unsafe.
inline std::string ask(Answerer& answerer, std::span<const Message> messages, const std::string& question_id) {
  if (!answerer.knows(question_id)) throw Error(errc::kUnknownQuestion, "unknown question '" + question_id + "'");
  if (!answerer.serialized()) return answerer.answer(messages, question_id);
  static std::mutex m;
  std::lock_guard lock(m);
  return answerer.answer(messages, question_id);
}

inline std::string answer_question(std::span<const Message> messages, const std::string& question_id,
                                   Answerer& answerer) {
  return ask(answerer, messages, question_id);
}

// ---------------------------------------------------------------------------
// Minimized views
// ---------------------------------------------------------------------------

struct MinimizedView {
  std::string msg_id;
  VisibilityLevel level;
  AccountId sender;
  Millis sent_at = 0;
  // metadata_only: monostate; attributes: name -> value object;
  // answer / redacted / full: text.
  std::variant<std::monostate, json, std::string> payload;

  bool operator==(const MinimizedView&) const = default;
};

inline void validate_spans(const std::vector<RedactionSpan>& spans, std::size_t body_chars) {
  auto sorted = spans;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& s = sorted[i];
    if (s.start >= s.end || s.end > body_chars)
      throw Error(errc::kValidation, "redaction span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                                         ") out of bounds");
    if (i > 0 && sorted[i - 1].end > s.start) throw Error(errc::kValidation, "overlapping redaction spans");
  }
}

inline std::string apply_redactions(const std::string& body, std::vector<RedactionSpan> spans) {
  const auto chars = utf8::split(body);
  validate_spans(spans, chars.size());
  std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  std::string out;
  std::size_t pos = 0;
  for (const auto& s : spans) {
    for (; pos < s.start; ++pos) out += chars[pos];
    out += s.replacement;
    pos = s.end;
  }
  for (; pos < chars.size(); ++pos) out += chars[pos];
  return out;
}

inline std::optional<MinimizedView> minimize(const Message& m, const VisibilityLevel& level,
                                             const MinimizerConfig& config, Answerer* answerer = nullptr) {
  using K = VisibilityLevel::Kind;
  if (level.kind == K::removed) return std::nullopt;
  MinimizedView v{m.msg_id, level, m.sender, m.sent_at, std::monostate{}};
  switch (level.kind) {
    case K::metadata_only: break;
    case K::full: v.payload = m.body; break;
    case K::redacted: v.payload = apply_redactions(m.body, level.spans); break;
    case K::attributes: {
      const auto attrs = compute_attributes(m.body, config);
      json obj = json::object();
      for (const auto& name : level.attributes) obj[name] = attrs.value_of(name);
      v.payload = obj;
      break;
    }
    case K::answer: {
      StubAnswerer stub;
      Answerer& a = answerer ? *answerer : stub;
      v.payload = ask(a, std::span<const Message>(&m, 1), level.question_id);
      break;
    }
    case K::removed: break;
  }
  return v;
}

// Rendered form of a view, as it appears in an evidence bundle. When
// `sender_label` is set the sender is shown by report-local pseudonym and role.
struct SenderLabel {
  std::string label;
  std::string role;
};

inline json render_view(const MinimizedView& v, const std::optional<SenderLabel>& sender_label = std::nullopt) {
  using K = VisibilityLevel::Kind;
  json j{{"kind", "message"},
         {"msg_id", v.msg_id},
         {"level", v.level.kind},
         {"sent_at", v.sent_at}};
  if (sender_label) {
    j["sender"] = sender_label->label;
    j["sender_role"] = sender_label->role;
  } else {
    j["sender"] = v.sender.value;
  }
  switch (v.level.kind) {
    case K::full: j["body"] = std::get<std::string>(v.payload); break;
    case K::redacted: {
      j["body"] = std::get<std::string>(v.payload);
      json reds = json::array();
      for (const auto& s : v.level.spans)
        reds.push_back({{"start", s.start}, {"end", s.end}, {"origin", s.origin}, {"replacement", s.replacement}});
      j["redactions"] = reds;
      break;
    }
    case K::attributes: j["attributes"] = std::get<json>(v.payload); break;
    case K::answer:
      j["question_id"] = v.level.question_id;
      j["answer"] = std::get<std::string>(v.payload);
      break;
    default: break;
  }
  return j;
}

// Renders views in conversation order; removed messages contribute nothing.
inline json render_bundle(const std::vector<std::optional<MinimizedView>>& views) {
  json arr = json::array();
  for (const auto& v : views) {
    if (v) arr.push_back(render_view(*v));
  }
  return arr;
}

// ---------------------------------------------------------------------------
// Automatic redaction
// ---------------------------------------------------------------------------

inline std::vector<RedactionSpan> auto_redact(const Message& m, const std::set<std::string>& detectors) {
  static const std::regex kPhone(R"((\+?\d{1,2}[ .-])?(\(\d{3}\) ?|\d{3}[ .-])?\d{3}[.-]\d{4}(?!\d))");
  static const std::regex kEmail(R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})");
  static const std::regex kAddress(
      R"(\b\d{1,6}( [A-Z][a-z]+){1,3} (St|Street|Ave|Avenue|Rd|Road|Blvd|Boulevard|Ln|Lane|Dr|Drive|Ct|Court|Way|Pl|Place)\b\.?)");

  struct Hit {
    std::size_t begin, end;
  };
  std::vector<Hit> hits;
  auto scan = [&](const std::regex& re, bool digit_boundary) {
    for (auto it = std::sregex_iterator(m.body.begin(), m.body.end(), re); it != std::sregex_iterator(); ++it) {
      const auto b = static_cast<std::size_t>(it->position());
      if (digit_boundary && b > 0 && std::isalnum(static_cast<unsigned char>(m.body[b - 1]))) continue;
      hits.push_back({b, b + static_cast<std::size_t>(it->length())});
    }
  };
  if (detectors.count("phone_number")) scan(kPhone, true);
  if (detectors.count("email")) scan(kEmail, false);
  if (detectors.count("street_address")) scan(kAddress, false);

  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    return a.begin != b.begin ? a.begin < b.begin : a.end > b.end;
  });
  std::vector<RedactionSpan> spans;
  std::size_t last_end = 0;
  for (const auto& h : hits) {
    if (!spans.empty() && h.begin < last_end) continue;
    spans.push_back(RedactionSpan::automatic(utf8::char_offset(m.body, h.begin), utf8::char_offset(m.body, h.end)));
    last_end = h.end;
  }
  return spans;
}

// ---------------------------------------------------------------------------
// Reveal sets: the atomic facts a view discloses
// ---------------------------------------------------------------------------

inline std::set<std::string> reveal_set(const std::optional<MinimizedView>& view, const Message& source,
                                        const MinimizerConfig& config) {
  using K = VisibilityLevel::Kind;
  std::set<std::string> facts;
  if (!view) return facts;
  facts.insert("sender=" + view->sender.value);
  facts.insert("sent_at=" + std::to_string(view->sent_at));
  const auto chars = [&] { return utf8::split(source.body); };
  auto attr_fact = [](const std::string& name, const json& value) { return "attr:" + name + "=" + value.dump(); };
  switch (view->level.kind) {
    case K::full: {
      const auto cs = chars();
      for (std::size_t i = 0; i < cs.size(); ++i) facts.insert("char[" + std::to_string(i) + "]=" + cs[i]);
      const auto attrs = compute_attributes(source.body, config);
      for (const auto& name : attribute_names()) facts.insert(attr_fact(name, attrs.value_of(name)));
      break;
    }
    case K::redacted: {
      const auto cs = chars();
      std::vector<bool> hidden(cs.size(), false);
      for (const auto& s : view->level.spans)
        for (std::size_t i = s.start; i < s.end && i < cs.size(); ++i) hidden[i] = true;
      for (std::size_t i = 0; i < cs.size(); ++i)
        if (!hidden[i]) facts.insert("char[" + std::to_string(i) + "]=" + cs[i]);
      break;
    }
    case K::attributes:
      for (const auto& [name, value] : std::get<json>(view->payload).items()) facts.insert(attr_fact(name, value));
      break;
    case K::answer: facts.insert("answer=" + std::get<std::string>(view->payload)); break;
    default: break;
  }
  return facts;
}

}  // namespace advrep
