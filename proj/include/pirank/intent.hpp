#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pirank/context.hpp"
#include "pirank/corpus.hpp"
#include "pirank/error.hpp"
#include "pirank/text.hpp"

namespace pirank {

inline constexpr const char* kFallbackIntent = "generic";

struct IntentSpace {
  std::vector<std::string> intents;
  std::string fallback = kFallbackIntent;

  bool contains(const std::string& id) const {
    return id == fallback || std::find(intents.begin(), intents.end(), id) != intents.end();
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& id : intents) {
      if (id.empty()) throw ConfigError("intent id is empty");
      if (id == fallback) throw ConfigError("fallback intent '" + fallback + "' listed as a detectable intent");
      if (!seen.insert(id).second) throw ConfigError("duplicate intent id '" + id + "'");
    }
  }
};

/// P(t|q) over an intent space. Sums to 1; the fallback absorbs residual mass.
struct IntentDistribution {
  std::map<std::string, double> probs;

  double prob(const std::string& id) const {
    auto it = probs.find(id);
    return it == probs.end() ? 0.0 : it->second;
  }
  double total() const {
    double s = 0.0;
    for (const auto& [_, p] : probs) s += p;
    return s;
  }
  bool operator==(const IntentDistribution&) const = default;
};

/// Turns raw per-intent evidence e_t in [0,1] into a distribution: when
/// sum(e) <= 1 the evidence is kept as-is and the fallback gets 1 - sum(e);
/// otherwise evidence is rescaled to sum to 1 and the fallback gets 0.
inline IntentDistribution normalize_evidence(const std::map<std::string, double>& evidence,
                                             const IntentSpace& space) {
  IntentDistribution dist;
  double sum = 0.0;
  for (const auto& [id, e] : evidence) {
    if (id == space.fallback) continue;
    if (!space.contains(id)) throw ConfigError("evidence for intent '" + id + "' outside the intent space");
    const double v = std::clamp(std::isfinite(e) ? e : 0.0, 0.0, 1.0);
    if (v > 0.0) {
      dist.probs[id] = v;
      sum += v;
    }
  }
  if (sum <= 1.0) {
    dist.probs[space.fallback] = std::max(0.0, 1.0 - sum);
  } else {
    for (auto& [_, p] : dist.probs) p /= sum;
    dist.probs[space.fallback] = 0.0;
  }
  return dist;
}

// ---------------------------------------------------------------------------
// Query patterns

struct PatternToken {
  enum class Kind { literal, entity_slot, dict_slot };
  Kind kind = Kind::literal;
  /// Literal word, or slot name.
  std::string text;
  /// Entity type for entity slots, dictionary id for dictionary slots.
  std::string ref;
  bool operator==(const PatternToken&) const = default;
};

struct QueryPattern {
  std::string pattern_id;
  std::vector<PatternToken> tokens;
  std::string target_intent;
  double base_confidence = 1.0;
};

/// Parses `{<movie:entity> <trailers:dictionary>}`-style sources. Braces are
/// optional; `<name:entity>` slots take entity type `name`, `<name:dictionary>`
/// slots read dictionary `name`; every other token is a lowercase literal.
inline QueryPattern parse_pattern(std::string_view text) {
  std::size_t begin = text.find_first_not_of(" \t");
  std::size_t end = text.find_last_not_of(" \t");
  if (begin != std::string_view::npos && text[begin] == '{') {
    if (text[end] != '}') throw ParseError("unbalanced '{' in pattern", 0, begin + 1);
    ++begin;
    --end;
  } else if (end != std::string_view::npos && text[end] == '}') {
    throw ParseError("unbalanced '}' in pattern", 0, end + 1);
  }
  QueryPattern pattern;
  std::set<std::string> slot_names;
  std::size_t i = begin;
  while (begin != std::string_view::npos && i <= end) {
    while (i <= end && (text[i] == ' ' || text[i] == '\t')) ++i;
    if (i > end) break;
    const std::size_t start = i;
    while (i <= end && text[i] != ' ' && text[i] != '\t') ++i;
    const std::string_view tok = text.substr(start, i - start);
    const std::size_t column = start + 1;
    PatternToken pt;
    if (tok.front() == '<') {
      if (tok.back() != '>' || tok.size() < 2) throw ParseError("slot is missing closing '>'", 0, column);
      const auto inner = tok.substr(1, tok.size() - 2);
      const auto colon = inner.find(':');
      if (colon == std::string_view::npos) throw ParseError("slot is missing ':'", 0, column);
      const std::string name(inner.substr(0, colon));
      const std::string kind(inner.substr(colon + 1));
      if (name.empty()) throw ParseError("slot name is empty", 0, column);
      if (kind == "entity") {
        pt.kind = PatternToken::Kind::entity_slot;
      } else if (kind == "dictionary") {
        pt.kind = PatternToken::Kind::dict_slot;
      } else {
        throw ParseError("unknown slot kind '" + kind + "' (expected entity or dictionary)", 0, column + colon + 2);
      }
      pt.text = name;
      pt.ref = name;
      if (!slot_names.insert(name).second) throw ParseError("duplicate slot name '" + name + "'", 0, column);
    } else {
      pt.text.reserve(tok.size());
      for (char c : tok) pt.text.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    pattern.tokens.push_back(std::move(pt));
  }
  if (pattern.tokens.empty()) throw ParseError("pattern is empty", 0, 1);
  return pattern;
}

using Phrase = std::vector<std::string>;

struct Dictionary {
  std::string dictionary_id;
  std::set<Phrase> phrases;
};

struct EntityRecord {
  std::string entity_id;
  std::string entity_type;
  std::set<Phrase> aliases;
  std::set<std::string> description_terms;
  double popularity = 0.0;
};

/// Entity store with an (entity type, alias) lookup used by pattern slots.
class KnowledgeBase {
 public:
  void add(EntityRecord e) {
    if (e.entity_id.empty()) throw DataError("entity_id is empty");
    if (e.aliases.empty()) throw DataError("entity '" + e.entity_id + "' has no aliases");
    if (!(e.popularity >= 0.0 && e.popularity <= 1.0))
      throw DataError("field 'popularity' out of [0,1] in entity '" + e.entity_id + "'");
    if (index_.count(e.entity_id)) throw DataError("duplicate entity_id '" + e.entity_id + "'");
    std::erase_if(e.aliases, [](const Phrase& p) { return p.empty(); });
    if (e.aliases.empty()) throw DataError("entity '" + e.entity_id + "' has only empty aliases");
    for (const auto& alias : e.aliases) {
      auto& best = by_alias_[{e.entity_type, alias}];
      if (best.empty() || better(e, entities_[index_.at(best)])) best = e.entity_id;
      for (const auto& t : alias) by_token_[t].insert(e.entity_id);
    }
    index_.emplace(e.entity_id, entities_.size());
    entities_.push_back(std::move(e));
  }

  const EntityRecord* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &entities_[it->second];
  }

  /// Best entity of `type` with exactly this alias: highest popularity,
  /// then smallest id.
  const EntityRecord* resolve(const std::string& type, const Phrase& alias) const {
    auto it = by_alias_.find({type, alias});
    return it == by_alias_.end() ? nullptr : find(it->second);
  }

  /// Entities having at least one alias containing `token`.
  const std::set<std::string>& with_token(const std::string& token) const {
    static const std::set<std::string> empty;
    auto it = by_token_.find(token);
    return it == by_token_.end() ? empty : it->second;
  }

  const std::vector<EntityRecord>& entities() const { return entities_; }
  std::size_t size() const { return entities_.size(); }

 private:
  static bool better(const EntityRecord& a, const EntityRecord& b) {
    if (a.popularity != b.popularity) return a.popularity > b.popularity;
    return a.entity_id < b.entity_id;
  }

  std::vector<EntityRecord> entities_;
  std::map<std::string, std::size_t> index_;
  std::map<std::pair<std::string, Phrase>, std::string> by_alias_;
  std::map<std::string, std::set<std::string>> by_token_;
};

using DictionarySet = std::map<std::string, Dictionary>;

// ---------------------------------------------------------------------------
// Entity linking

struct EntityLink {
  std::size_t begin = 0;  // token span [begin, end)
  std::size_t end = 0;
  std::string entity_id;
  std::string entity_type;
  double score = 0.0;
  bool operator==(const EntityLink&) const = default;
};

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

/// alias_exactness * (0.5 + 0.5 * context_overlap) * (0.5 + 0.5 * popularity),
/// where context_overlap is the Jaccard similarity of the query tokens
/// outside the span with the entity description. Entities connected to the
/// searcher get popularity of at least 0.8.
inline double link_score(const EntityRecord& e, double exactness, std::size_t begin, std::size_t end,
                         const std::vector<std::string>& tokens, const QueryContext* ctx) {
  std::set<std::string> outside;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (i < begin || i >= end) outside.insert(tokens[i]);
  const double overlap = jaccard(outside, e.description_terms);
  double pop = e.popularity;
  if (ctx && ctx->connected(e.entity_id)) pop = std::max(pop, 0.8);
  return exactness * (0.5 + 0.5 * overlap) * (0.5 + 0.5 * pop);
}

/// Longest fraction of an alias covered by `span` when `span` occurs as a
/// contiguous run inside it; 0 when it does not.
inline double alias_exactness(const EntityRecord& e, const std::vector<std::string>& tokens, std::size_t begin,
                              std::size_t end) {
  const std::size_t len = end - begin;
  double best = 0.0;
  for (const auto& alias : e.aliases) {
    if (alias.size() < len) continue;
    for (std::size_t off = 0; off + len <= alias.size(); ++off) {
      if (std::equal(tokens.begin() + static_cast<std::ptrdiff_t>(begin),
                     tokens.begin() + static_cast<std::ptrdiff_t>(end),
                     alias.begin() + static_cast<std::ptrdiff_t>(off))) {
        best = std::max(best, static_cast<double>(len) / static_cast<double>(alias.size()));
        break;
      }
    }
  }
  return best;
}

/// All (span, entity) candidates with their scores, best score per pair.
inline std::vector<EntityLink> link_candidates(const std::vector<std::string>& tokens, const KnowledgeBase& kb,
                                               const QueryContext* ctx) {
  std::vector<EntityLink> out;
  for (std::size_t b = 0; b < tokens.size(); ++b) {
    const auto& ids = kb.with_token(tokens[b]);
    for (std::size_t e = b + 1; e <= tokens.size(); ++e) {
      for (const auto& id : ids) {
        const auto* ent = kb.find(id);
        const double exact = alias_exactness(*ent, tokens, b, e);
        if (exact <= 0.0) continue;
        out.push_back({b, e, ent->entity_id, ent->entity_type, link_score(*ent, exact, b, e, tokens, ctx)});
      }
    }
  }
  return out;
}

/// Greedy non-overlapping selection by score (ties: longer span, earlier
/// span, smaller entity id). Links scoring below `threshold` are dropped.
/// The result is ordered by span start.
inline std::vector<EntityLink> link_entities(const std::vector<std::string>& tokens, const KnowledgeBase& kb,
                                             const QueryContext* ctx = nullptr, double threshold = 0.3) {
  auto cands = link_candidates(tokens, kb, ctx);
  std::erase_if(cands, [&](const EntityLink& l) { return l.score < threshold; });
  std::sort(cands.begin(), cands.end(), [](const EntityLink& a, const EntityLink& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.end - a.begin != b.end - b.begin) return a.end - a.begin > b.end - b.begin;
    if (a.begin != b.begin) return a.begin < b.begin;
    return a.entity_id < b.entity_id;
  });
  std::vector<EntityLink> chosen;
  std::vector<bool> used(tokens.size(), false);
  for (const auto& c : cands) {
    bool free = true;
    for (std::size_t i = c.begin; i < c.end; ++i) free = free && !used[i];
    if (!free) continue;
    for (std::size_t i = c.begin; i < c.end; ++i) used[i] = true;
    chosen.push_back(c);
  }
  std::sort(chosen.begin(), chosen.end(), [](const EntityLink& a, const EntityLink& b) { return a.begin < b.begin; });
  return chosen;
}

// ---------------------------------------------------------------------------
// Pattern matching

struct Capture {
  std::string slot;
  /// Entity id for entity slots, matched phrase for dictionary slots.
  std::string value;
  bool is_entity = false;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Capture&) const = default;
};

struct PatternMatch {
  std::string pattern_id;
  std::string target_intent;
  std::vector<Capture> captures;
  double confidence = 0.0;
  bool operator==(const PatternMatch&) const = default;
};

namespace detail {

inline bool span_equals(const std::vector<std::string>& tokens, std::size_t at, const Phrase& p) {
  if (at + p.size() > tokens.size()) return false;
  return std::equal(p.begin(), p.end(), tokens.begin() + static_cast<std::ptrdiff_t>(at));
}

// Span lengths a pattern token can consume at `at`, longest first.
inline std::vector<std::size_t> token_spans(const PatternToken& pt, const std::vector<std::string>& tokens,
                                            std::size_t at, const KnowledgeBase& kb, const DictionarySet& dicts) {
  std::vector<std::size_t> lens;
  const std::size_t rest = tokens.size() - at;
  switch (pt.kind) {
    case PatternToken::Kind::literal:
      if (rest >= 1 && tokens[at] == pt.text) lens.push_back(1);
      break;
    case PatternToken::Kind::entity_slot:
      for (std::size_t len = rest; len >= 1; --len) {
        Phrase span(tokens.begin() + static_cast<std::ptrdiff_t>(at),
                    tokens.begin() + static_cast<std::ptrdiff_t>(at + len));
        if (kb.resolve(pt.ref, span)) lens.push_back(len);
      }
      break;
    case PatternToken::Kind::dict_slot: {
      auto it = dicts.find(pt.ref);
      if (it == dicts.end()) throw ConfigError("pattern references unknown dictionary '" + pt.ref + "'");
      std::set<std::size_t, std::greater<>> found;
      for (const auto& phrase : it->second.phrases)
        if (!phrase.empty() && span_equals(tokens, at, phrase)) found.insert(phrase.size());
      lens.assign(found.begin(), found.end());
      break;
    }
  }
  return lens;
}

inline bool match_from(const QueryPattern& p, const std::vector<std::string>& tokens, std::size_t pi,
                       std::size_t at, const KnowledgeBase& kb, const DictionarySet& dicts,
                       std::vector<std::size_t>& spans, std::set<std::pair<std::size_t, std::size_t>>& dead) {
  if (pi == p.tokens.size()) return at == tokens.size();
  if (dead.count({pi, at})) return false;
  for (std::size_t len : token_spans(p.tokens[pi], tokens, at, kb, dicts)) {
    spans.push_back(len);
    if (match_from(p, tokens, pi + 1, at + len, kb, dicts, spans, dead)) return true;
    spans.pop_back();
  }
  dead.insert({pi, at});
  return false;
}

}  // namespace detail

/// Matches a whole query against a pattern. Slots prefer their longest
/// alias/phrase; the search backtracks to shorter spans so that a match is
/// returned whenever any full-cover assignment exists. Entity slots resolve
/// to the most popular entity (then smallest id) having that alias.
/// Confidence = base_confidence * min(1, link scores of captured entities).
inline std::optional<PatternMatch> match_pattern(const QueryPattern& pattern, const std::vector<std::string>& tokens,
                                                 const KnowledgeBase& kb, const DictionarySet& dicts,
                                                 const QueryContext* ctx = nullptr) {
  std::vector<std::size_t> spans;
  std::set<std::pair<std::size_t, std::size_t>> dead;
  if (!detail::match_from(pattern, tokens, 0, 0, kb, dicts, spans, dead)) return std::nullopt;
  PatternMatch m;
  m.pattern_id = pattern.pattern_id;
  m.target_intent = pattern.target_intent;
  double min_link = 1.0;
  std::size_t at = 0;
  for (std::size_t i = 0; i < pattern.tokens.size(); ++i) {
    const auto& pt = pattern.tokens[i];
    const std::size_t end = at + spans[i];
    Phrase span(tokens.begin() + static_cast<std::ptrdiff_t>(at), tokens.begin() + static_cast<std::ptrdiff_t>(end));
    if (pt.kind == PatternToken::Kind::entity_slot) {
      const auto* ent = kb.resolve(pt.ref, span);
      m.captures.push_back({pt.text, ent->entity_id, true, at, end});
      min_link = std::min(min_link, link_score(*ent, 1.0, at, end, tokens, ctx));
    } else if (pt.kind == PatternToken::Kind::dict_slot) {
      m.captures.push_back({pt.text, join(span), false, at, end});
    }
    at = end;
  }
  m.confidence = std::clamp(pattern.base_confidence, 0.0, 1.0) * min_link;
  return m;
}

// ---------------------------------------------------------------------------
// Classifiers

struct ClassifierOutput {
  double confidence = 0.0;
  /// Entity the classifier resolved the query to (e.g. the friend's user id).
  std::optional<std::string> target;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string intent() const = 0;
  virtual std::string name() const = 0;
  virtual ClassifierOutput classify(const QueryContext& ctx) const = 0;
};

inline std::set<std::string> char_trigrams(const std::string& s) {
  std::set<std::string> grams;
  const std::string padded = "  " + s + " ";
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) grams.insert(padded.substr(i, 3));
  return grams;
}

/// Hand-calibrated rules. A keyword rule fires when its phrase occurs as a
/// contiguous token run; an n-gram rule fires with confidence scaled by the
/// character-trigram Dice similarity of the query to the rule phrase when
/// that similarity reaches `min_similarity`.
class KeywordRuleClassifier : public Classifier {
 public:
  struct Rule {
    Phrase phrase;
    double confidence = 0.5;
    bool ngram = false;
    double min_similarity = 0.6;
  };

  KeywordRuleClassifier(std::string intent, std::vector<Rule> rules)
      : intent_(std::move(intent)), rules_(std::move(rules)) {}

  std::string intent() const override { return intent_; }
  std::string name() const override { return "keyword_rules:" + intent_; }

  ClassifierOutput classify(const QueryContext& ctx) const override {
    ClassifierOutput out;
    if (ctx.tokens.empty()) return out;
    const std::string query = join(ctx.tokens);
    for (const auto& r : rules_) {
      double c = 0.0;
      if (r.ngram) {
        const auto a = char_trigrams(query);
        const auto b = char_trigrams(join(r.phrase));
        std::size_t inter = 0;
        for (const auto& g : a) inter += b.count(g);
        const double dice = 2.0 * static_cast<double>(inter) / static_cast<double>(a.size() + b.size());
        if (dice >= r.min_similarity) c = r.confidence * dice;
      } else {
        for (std::size_t i = 0; i < ctx.tokens.size(); ++i)
          if (detail::span_equals(ctx.tokens, i, r.phrase)) {
            c = r.confidence;
            break;
          }
      }
      out.confidence = std::max(out.confidence, c);
    }
    return out;
  }

  const std::vector<Rule>& rules() const { return rules_; }

 private:
  std::string intent_;
  std::vector<Rule> rules_;
};

/// Fires when the query names one of the searcher's friends: the full name
/// yields `full_confidence`, the first name alone `first_name_confidence`.
class FriendNameClassifier : public Classifier {
 public:
  FriendNameClassifier(std::string intent, std::map<std::string, Phrase> names, double full_confidence = 0.9,
                       double first_name_confidence = 0.5)
      : intent_(std::move(intent)),
        names_(std::move(names)),
        full_(full_confidence),
        first_(first_name_confidence) {}

  std::string intent() const override { return intent_; }
  std::string name() const override { return "friend_name:" + intent_; }

  ClassifierOutput classify(const QueryContext& ctx) const override {
    ClassifierOutput out;
    if (ctx.tokens.empty() || !ctx.graph) return out;
    for (const auto& friend_id : ctx.graph->neighbors(ctx.user.user_id, EdgeLabel::friend_of)) {
      auto it = names_.find(friend_id);
      if (it == names_.end() || it->second.empty()) continue;
      double c = 0.0;
      if (it->second == ctx.tokens)
        c = full_;
      else if (ctx.tokens.size() == 1 && it->second.front() == ctx.tokens.front())
        c = first_;
      if (c > out.confidence) {  // neighbors() is ordered, so ties keep the smallest id
        out.confidence = c;
        out.target = friend_id;
      }
    }
    return out;
  }

 private:
  std::string intent_;
  std::map<std::string, Phrase> names_;
  double full_;
  double first_;
};

/// Runs every classifier; per intent the maximum confidence wins. Outputs
/// outside [0,1] are clamped and reported through `warnings`.
inline std::map<std::string, ClassifierOutput> classify(const QueryContext& ctx,
                                                        const std::vector<std::shared_ptr<const Classifier>>& classifiers,
                                                        std::vector<std::string>* warnings = nullptr) {
  std::map<std::string, ClassifierOutput> out;
  for (const auto& c : classifiers) {
    auto r = ctx.tokens.empty() ? ClassifierOutput{} : c->classify(ctx);
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
      if (warnings) warnings->push_back("classifier '" + c->name() + "' emitted " + std::to_string(r.confidence) + ", clamped");
      r.confidence = std::isfinite(r.confidence) ? std::clamp(r.confidence, 0.0, 1.0) : 0.0;
    }
    auto [it, inserted] = out.try_emplace(c->intent(), r);
    if (inserted) continue;
    auto& cur = it->second;
    const bool better = r.confidence > cur.confidence ||
                        (r.confidence == cur.confidence && r.target && (!cur.target || *r.target < *cur.target));
    if (better) cur = r;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Special grammar ("posts i have seen", "videos i watched yesterday")

struct GrammarSpec {
  DocType target_type = DocType::post;
  bool self_seen = false;
  std::int64_t window_begin = std::numeric_limits<std::int64_t>::min();  // inclusive
  std::int64_t window_end = std::numeric_limits<std::int64_t>::max();    // exclusive
  bool operator==(const GrammarSpec&) const = default;
};

inline std::optional<DocType> doc_type_from_word(std::string word) {
  if (word == "people" || word == "persons" || word == "profiles") return DocType::user;
  if (auto t = parse_doc_type(word)) return t;
  if (word.size() > 1 && word.back() == 's') word.pop_back();
  return parse_doc_type(word);
}

/// Interprets a matched special-grammar pattern: the first dictionary or
/// literal naming a document type selects the type; seen/watched-style verbs
/// require self engagement; today/yesterday/week/month bound the window.
inline std::optional<GrammarSpec> interpret_grammar(const std::vector<std::string>& tokens, std::int64_t now) {
  GrammarSpec g;
  bool typed = false;
  for (const auto& t : tokens)
    if (auto type = doc_type_from_word(t)) {
      g.target_type = *type;
      typed = true;
      break;
    }
  if (!typed) return std::nullopt;
  static const std::set<std::string> seen_verbs = {"seen", "watched", "saw", "viewed", "visited", "read", "liked"};
  const std::set<std::string> present(tokens.begin(), tokens.end());
  for (const auto& v : seen_verbs) g.self_seen = g.self_seen || present.count(v) > 0;
  constexpr std::int64_t day = 86400;
  const std::int64_t start_of_day = now - ((now % day) + day) % day;
  if (present.count("yesterday")) {
    g.window_begin = start_of_day - day;
    g.window_end = start_of_day;
  } else if (present.count("today")) {
    g.window_begin = start_of_day;
    g.window_end = now + 1;
  } else if (present.count("week")) {
    g.window_begin = now - 7 * day;
    g.window_end = now + 1;
  } else if (present.count("month")) {
    g.window_begin = now - 30 * day;
    g.window_end = now + 1;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Detection

inline constexpr const char* kSpecialGrammarIntent = "special_grammar";

struct IntentConfig {
  IntentSpace space;
  std::vector<QueryPattern> patterns;
  DictionarySet dictionaries;
  KnowledgeBase kb;
  std::vector<std::shared_ptr<const Classifier>> classifiers;
  double link_threshold = 0.3;
  double suggestion_evidence = 0.95;

  void validate() const {
    space.validate();
    std::set<std::string> ids;
    for (const auto& p : patterns) {
      if (!ids.insert(p.pattern_id).second) throw ConfigError("duplicate pattern_id '" + p.pattern_id + "'");
      if (p.target_intent == space.fallback || !space.contains(p.target_intent))
        throw ConfigError("pattern '" + p.pattern_id + "' targets unknown intent '" + p.target_intent + "'");
      if (!(p.base_confidence >= 0.0 && p.base_confidence <= 1.0))
        throw ConfigError("pattern '" + p.pattern_id + "' base_confidence out of [0,1]");
      for (const auto& t : p.tokens)
        if (t.kind == PatternToken::Kind::dict_slot && !dictionaries.count(t.ref))
          throw ConfigError("pattern '" + p.pattern_id + "' references unknown dictionary '" + t.ref + "'");
    }
    for (const auto& c : classifiers)
      if (c->intent() == space.fallback || !space.contains(c->intent()))
        throw ConfigError("classifier '" + c->name() + "' targets unknown intent '" + c->intent() + "'");
  }
};

/// Everything detection learned about a query.
struct QueryAnalysis {
  IntentDistribution distribution;
  std::map<std::string, double> evidence;
  std::vector<PatternMatch> matches;
  std::vector<EntityLink> links;
  std::map<std::string, ClassifierOutput> classifier_outputs;
  /// intent -> entity the intent-specific component should look for.
  std::map<std::string, std::string> targets;
  std::optional<GrammarSpec> grammar;
  std::vector<std::string> warnings;
};

/// Collects evidence from entry-point disambiguation, query patterns and
/// classifiers, keeps the maximum per intent and normalizes it.
inline QueryAnalysis analyze(const QueryContext& ctx, const IntentConfig& config) {
  QueryAnalysis a;
  auto raise = [&](const std::string& intent, double e) {
    if (intent == config.space.fallback || !config.space.contains(intent)) {
      a.warnings.push_back("evidence for unknown intent '" + intent + "' ignored");
      return;
    }
    auto& cur = a.evidence[intent];
    cur = std::max(cur, e);
  };

  if (ctx.suggestion) {
    raise(ctx.suggestion->intent_id, config.suggestion_evidence);
    if (config.space.contains(ctx.suggestion->intent_id))
      a.targets.emplace(ctx.suggestion->intent_id, ctx.suggestion->entity_id);
  }

  for (const auto& p : config.patterns)
    if (auto m = match_pattern(p, ctx.tokens, config.kb, config.dictionaries, &ctx)) a.matches.push_back(std::move(*m));
  std::stable_sort(a.matches.begin(), a.matches.end(), [](const PatternMatch& x, const PatternMatch& y) {
    if (x.confidence != y.confidence) return x.confidence > y.confidence;
    return x.pattern_id < y.pattern_id;
  });
  for (const auto& m : a.matches) {
    raise(m.target_intent, m.confidence);
    for (const auto& c : m.captures)
      if (c.is_entity) {
        a.targets.emplace(m.target_intent, c.value);
        break;
      }
    if (m.target_intent == kSpecialGrammarIntent && !a.grammar) a.grammar = interpret_grammar(ctx.tokens, ctx.now);
  }

  a.classifier_outputs = classify(ctx, config.classifiers, &a.warnings);
  for (const auto& [intent, out] : a.classifier_outputs) {
    if (out.confidence <= 0.0) continue;
    raise(intent, out.confidence);
    if (out.target) a.targets.emplace(intent, *out.target);
  }

  a.links = link_entities(ctx.tokens, config.kb, &ctx, config.link_threshold);
  a.distribution = normalize_evidence(a.evidence, config.space);
  return a;
}

inline IntentDistribution detect(const QueryContext& ctx, const IntentConfig& config) {
  return analyze(ctx, config).distribution;
}

// ---------------------------------------------------------------------------
// Record files

inline Phrase phrase_of(std::string_view text) { return tokenize(text); }

inline QueryPattern pattern_from_json(const nlohmann::json& j) {
  QueryPattern p = parse_pattern(j.at("pattern").get<std::string>());
  p.pattern_id = j.value("pattern_id", j.at("pattern").get<std::string>());
  p.target_intent = j.at("target_intent").get<std::string>();
  p.base_confidence = j.value("base_confidence", 1.0);
  return p;
}

inline Dictionary dictionary_from_json(const nlohmann::json& j) {
  Dictionary d;
  d.dictionary_id = j.at("dictionary_id").get<std::string>();
  for (const auto& s : j.at("phrases")) {
    auto p = phrase_of(s.get<std::string>());
    if (p.empty()) throw DataError("empty phrase in dictionary '" + d.dictionary_id + "'");
    d.phrases.insert(std::move(p));
  }
  if (d.phrases.empty()) throw DataError("dictionary '" + d.dictionary_id + "' has no phrases");
  return d;
}

inline EntityRecord entity_from_json(const nlohmann::json& j) {
  EntityRecord e;
  e.entity_id = j.at("entity_id").get<std::string>();
  e.entity_type = j.at("entity_type").get<std::string>();
  for (const auto& a : j.at("aliases")) e.aliases.insert(phrase_of(a.get<std::string>()));
  if (j.contains("description_terms"))
    for (const auto& t : j["description_terms"])
      for (auto& tok : tokenize(t.get<std::string>())) e.description_terms.insert(std::move(tok));
  e.popularity = j.value("popularity", 0.0);
  return e;
}

/// Keyword rule records: {"intent", "phrase", "confidence", "kind": "keyword"|"ngram", "min_similarity"}.
inline std::vector<std::shared_ptr<const Classifier>> keyword_classifiers_from_records(
    const std::vector<nlohmann::json>& records) {
  std::map<std::string, std::vector<KeywordRuleClassifier::Rule>> by_intent;
  for (const auto& j : records) {
    KeywordRuleClassifier::Rule r;
    r.phrase = phrase_of(j.at("phrase").get<std::string>());
    r.confidence = j.value("confidence", 0.5);
    const auto kind = j.value("kind", std::string("keyword"));
    if (kind != "keyword" && kind != "ngram") throw ConfigError("unknown rule kind '" + kind + "' (keyword, ngram)");
    r.ngram = kind == "ngram";
    r.min_similarity = j.value("min_similarity", 0.6);
    by_intent[j.at("intent").get<std::string>()].push_back(std::move(r));
  }
  std::vector<std::shared_ptr<const Classifier>> out;
  for (auto& [intent, rules] : by_intent)
    out.push_back(std::make_shared<KeywordRuleClassifier>(intent, std::move(rules)));
  return out;
}

}  // namespace pirank
