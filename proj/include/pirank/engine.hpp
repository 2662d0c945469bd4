#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pirank/combiner.hpp"
#include "pirank/components.hpp"
#include "pirank/context.hpp"
#include "pirank/corpus.hpp"
#include "pirank/error.hpp"
#include "pirank/index.hpp"
#include "pirank/intent.hpp"

namespace pirank {

struct IndexSettings {
  std::size_t num_shards = 4;
  std::size_t candidates = 100;
  std::size_t per_shard_k = 0;
  Bm25Params bm25;
  TokenizerConfig tokenizer;
};

// ---------------------------------------------------------------------------
// Built-in intent assets, used when an engine config names no files.

inline DictionarySet builtin_dictionaries() {
  auto dict = [](std::string id, std::initializer_list<const char*> phrases) {
    Dictionary d{std::move(id), {}};
    for (const char* p : phrases) d.phrases.insert(tokenize(p));
    return d;
  };
  DictionarySet out;
  for (auto d : {dict("trailers", {"trailer", "trailers", "teaser", "official trailer", "trailer oficial", "bande annonce"}),
                 dict("doctype", {"posts", "post", "videos", "video", "photos", "photo", "groups", "pages", "events"}),
                 dict("seen", {"i have seen", "i saw", "i watched", "i have watched", "i viewed", "i liked", "i visited"}),
                 dict("when", {"yesterday", "today", "this week", "last week", "this month"}),
                 dict("video_words", {"videos", "video", "clips"})})
    out.emplace(d.dictionary_id, std::move(d));
  return out;
}

inline std::vector<QueryPattern> builtin_patterns() {
  auto make = [](std::string id, std::string_view src, std::string intent, double conf) {
    auto p = parse_pattern(src);
    p.pattern_id = std::move(id);
    p.target_intent = std::move(intent);
    p.base_confidence = conf;
    return p;
  };
  return {
      make("movie_trailers", "{<movie:entity> <trailers:dictionary>}", "movie", 0.9),
      make("publisher_videos", "{<page:entity> <video_words:dictionary>}", "video_publisher", 0.95),
      make("publisher_name", "{<page:entity>}", "video_publisher", 0.9),
      make("grammar_seen", "{<doctype:dictionary> <seen:dictionary>}", kSpecialGrammarIntent, 0.95),
      make("grammar_seen_when", "{<doctype:dictionary> <seen:dictionary> <when:dictionary>}", kSpecialGrammarIntent, 0.95),
  };
}

inline std::vector<nlohmann::json> builtin_keyword_rules() {
  return {
      {{"intent", "sports"}, {"phrase", "nba"}, {"confidence", 0.7}},
      {{"intent", "sports"}, {"phrase", "finals"}, {"confidence", 0.5}},
      {{"intent", "sports"}, {"phrase", "score"}, {"confidence", 0.4}},
      {{"intent", "sports"}, {"phrase", "basketball"}, {"confidence", 0.6}, {"kind", "ngram"}, {"min_similarity", 0.7}},
      {{"intent", "news"}, {"phrase", "news"}, {"confidence", 0.6}},
      {{"intent", "news"}, {"phrase", "breaking"}, {"confidence", 0.5}},
      {{"intent", "music"}, {"phrase", "lyrics"}, {"confidence", 0.6}},
      {{"intent", "music"}, {"phrase", "song"}, {"confidence", 0.4}},
      {{"intent", "movie"}, {"phrase", "movie"}, {"confidence", 0.4}},
  };
}

/// Knowledge-base entries for user, page and group documents: aliases are
/// the tokenized titles, popularity is log-scaled impressions relative to the
/// most viewed entity document.
inline std::vector<EntityRecord> entities_from_corpus(const Corpus& corpus) {
  std::uint64_t max_impr = 0;
  for (const auto& d : corpus.documents()) max_impr = std::max(max_impr, d.engagement.impressions);
  std::vector<EntityRecord> out;
  std::set<std::string> seen;
  for (const auto& d : corpus.documents()) {
    std::string type;
    std::string id = d.doc_id;
    if (d.doc_type == DocType::user) {
      type = "person";
      if (d.author_id) id = *d.author_id;
    } else if (d.doc_type == DocType::page) {
      type = "page";
    } else if (d.doc_type == DocType::group) {
      type = "group";
    } else {
      continue;
    }
    auto alias = tokenize(d.title);
    if (alias.empty() || !seen.insert(id).second) continue;
    EntityRecord e;
    e.entity_id = id;
    e.entity_type = type;
    e.aliases.insert(std::move(alias));
    for (auto& t : tokenize(d.body)) e.description_terms.insert(std::move(t));
    e.popularity = max_impr == 0 ? 0.0
                                 : std::log1p(static_cast<double>(d.engagement.impressions)) /
                                       std::log1p(static_cast<double>(max_impr));
    out.push_back(std::move(e));
  }
  return out;
}

/// Profile names of users, from their `user` documents.
inline std::map<std::string, Phrase> user_names(const Corpus& corpus) {
  std::map<std::string, Phrase> names;
  for (const auto& d : corpus.documents())
    if (d.doc_type == DocType::user && d.author_id) names.emplace(*d.author_id, tokenize(d.title));
  return names;
}

// ---------------------------------------------------------------------------

struct SearchRequest {
  std::string query;
  std::string user_id;
  std::optional<StructuredSuggestion> suggestion;
};

/// Corpus, index, intent detection, components and ranker config assembled
/// into one immutable object. All query methods are const and thread-safe.
class Engine {
 public:
  Engine(Corpus corpus, IndexSettings index_settings, IntentConfig intents, ComponentRegistry registry,
         RankerConfig ranker, std::int64_t now = 0)
      : corpus_(std::make_unique<Corpus>(std::move(corpus))),
        settings_(std::move(index_settings)),
        index_(build_index(*corpus_, settings_.num_shards, settings_.tokenizer)),
        intents_(std::move(intents)),
        registry_(std::move(registry)),
        ranker_(std::move(ranker)),
        now_(now) {
    intents_.validate();
    check_config(ranker_, registry_);
  }

  const Corpus& corpus() const { return *corpus_; }
  const ShardedIndex& index() const { return index_; }
  const IntentConfig& intents() const { return intents_; }
  const ComponentRegistry& registry() const { return registry_; }
  const RankerConfig& ranker() const { return ranker_; }
  const IndexSettings& settings() const { return settings_; }
  std::int64_t now() const { return now_; }

  QueryContext context(const SearchRequest& req) const {
    const auto* user = corpus_->find_user(req.user_id);
    if (!user) throw NotFoundError("unknown user_id '" + req.user_id + "'");
    auto ctx = QueryContext::make(req.query, *user, &corpus_->graph(), now_);
    ctx.suggestion = req.suggestion;
    return ctx;
  }

  QueryAnalysis analyze(const QueryContext& ctx) const { return pirank::analyze(ctx, intents_); }

  std::vector<Candidate> retrieve(const QueryContext& ctx) const {
    RetrieveOptions opts;
    opts.k = settings_.candidates;
    opts.per_shard_k = settings_.per_shard_k;
    opts.bm25 = settings_.bm25;
    return pirank::retrieve(index_, index_.query_terms(ctx.query_text), opts);
  }

  /// Text candidates, plus the searcher's engaged documents of the requested
  /// type when the query is a self-seen grammar query ("posts i have seen").
  std::vector<Candidate> retrieve(const QueryContext& ctx, const QueryAnalysis& analysis) const {
    auto out = retrieve(ctx);
    if (!analysis.grammar || !analysis.grammar->self_seen) return out;
    std::set<std::string> have;
    for (const auto& c : out) have.insert(c.doc_id);
    for (const auto& [id, ts] : ctx.user.engaged) {
      const auto* doc = corpus_->find_document(id);
      if (doc && doc->doc_type == analysis.grammar->target_type && !have.count(id)) out.push_back({id, 0.0});
    }
    return out;
  }

  RankedList search(const SearchRequest& req, const RankerConfig& config) const {
    const auto ctx = context(req);
    const auto analysis = analyze(ctx);
    return rank(ctx, analysis, retrieve(ctx, analysis), ScoringEnvironment{*corpus_, index_, settings_.bm25}, registry_,
                config);
  }

  RankedList search(const SearchRequest& req) const { return search(req, ranker_); }

  /// One row per shown document of each logged query; label = good click.
  /// Records of unknown users are skipped.
  EngagementDataset engagement_dataset(const std::vector<QueryRecord>& log, const std::vector<std::string>& features,
                                       std::size_t* skipped = nullptr) const {
    EngagementDataset data;
    data.features = features;
    for (const auto& rec : log) {
      if (!corpus_->find_user(rec.user_id)) {
        if (skipped) ++*skipped;
        continue;
      }
      const auto ctx = context({rec.query_text, rec.user_id, rec.suggestion_click});
      const auto analysis = analyze(ctx);
      for (const auto& id : rec.shown_doc_ids) {
        const auto* doc = corpus_->find_document(id);
        if (!doc) continue;
        const auto signals = compute_signals(ctx, *doc, index_, *corpus_, settings_.bm25);
        data.rows.push_back(engagement_features(features, signals, *doc, analysis.distribution));
        data.labels.push_back(rec.good_clicked.count(id) ? 1 : 0);
      }
    }
    return data;
  }

 private:
  // Held by pointer so the index and scorers can keep referring to it when
  // the engine moves.
  std::unique_ptr<Corpus> corpus_;
  IndexSettings settings_;
  ShardedIndex index_;
  IntentConfig intents_;
  ComponentRegistry registry_;
  RankerConfig ranker_;
  std::int64_t now_;
};

// ---------------------------------------------------------------------------
// Engine config file

struct EngineConfig {
  CorpusPaths corpus;
  std::int64_t now = 0;
  IndexSettings index;
  std::vector<std::string> intent_space = default_intents();
  std::string patterns_path;
  std::string dictionaries_path;
  std::string entities_path;
  std::string rules_path;
  bool entities_from_corpus = true;
  double link_threshold = 0.3;
  std::vector<ComponentSpec> components = default_component_specs();
  std::string engagement_model_path;
  std::optional<nlohmann::json> ranker;
  std::string bvt_suite_path;
};

inline std::vector<nlohmann::json> read_records(const std::string& path) {
  std::vector<nlohmann::json> out;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t) { out.push_back(j); });
  return out;
}

/// Reads an engine config. Relative asset paths resolve against the config
/// file's directory.
inline EngineConfig load_engine_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open engine config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) -> std::string {
    if (p.empty()) return p;
    std::filesystem::path fp(p);
    return (fp.is_absolute() ? fp : base / fp).lexically_normal().string();
  };
  EngineConfig c;
  try {
    if (j.contains("corpus")) {
      const auto& cj = j["corpus"];
      if (cj.is_string()) {
        const auto dir = resolve(cj.get<std::string>());
        if (!std::filesystem::is_directory(dir)) throw DataError("corpus directory '" + dir + "' not found");
        c.corpus = CorpusPaths::in_directory(dir);
      } else {
        c.corpus = {resolve(cj.value("documents", "")), resolve(cj.value("users", "")), resolve(cj.value("edges", "")),
                    resolve(cj.value("queries", "")), resolve(cj.value("judgments", ""))};
      }
    }
    c.now = j.value("now", std::int64_t{0});
    if (j.contains("index")) {
      const auto& ij = j["index"];
      c.index.num_shards = ij.value("num_shards", c.index.num_shards);
      c.index.candidates = ij.value("candidates", c.index.candidates);
      c.index.per_shard_k = ij.value("per_shard_k", c.index.per_shard_k);
      c.index.bm25.k1 = ij.value("k1", c.index.bm25.k1);
      c.index.bm25.b = ij.value("b", c.index.bm25.b);
      c.index.tokenizer.stopwords = ij.value("stopwords", std::set<std::string>{});
    }
    if (j.contains("intents")) {
      const auto& ij = j["intents"];
      if (ij.contains("space")) c.intent_space = ij["space"].get<std::vector<std::string>>();
      c.patterns_path = resolve(ij.value("patterns", ""));
      c.dictionaries_path = resolve(ij.value("dictionaries", ""));
      c.entities_path = resolve(ij.value("entities", ""));
      c.rules_path = resolve(ij.value("rules", ""));
      c.entities_from_corpus = ij.value("entities_from_corpus", true);
      c.link_threshold = ij.value("link_threshold", 0.3);
    }
    if (j.contains("components")) {
      c.components.clear();
      const auto& cj = j["components"];
      if (cj.is_string())
        for (const auto& r : read_records(resolve(cj.get<std::string>()))) c.components.push_back(component_spec_from_json(r));
      else
        for (const auto& r : cj) c.components.push_back(component_spec_from_json(r));
    }
    c.engagement_model_path = resolve(j.value("engagement_model", ""));
    if (j.contains("ranker")) c.ranker = j["ranker"];
    c.bvt_suite_path = resolve(j.value("bvt_suite", ""));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

inline IntentConfig build_intent_config(const EngineConfig& c, const Corpus& corpus) {
  IntentConfig ic;
  ic.space.intents = c.intent_space;
  ic.link_threshold = c.link_threshold;
  if (c.dictionaries_path.empty()) {
    ic.dictionaries = builtin_dictionaries();
  } else {
    for (const auto& r : read_records(c.dictionaries_path)) {
      auto d = dictionary_from_json(r);
      const auto id = d.dictionary_id;
      if (!ic.dictionaries.emplace(id, std::move(d)).second) throw DataError("duplicate dictionary '" + id + "'");
    }
  }
  if (c.patterns_path.empty()) {
    ic.patterns = builtin_patterns();
  } else {
    for_each_record(c.patterns_path, [&](const nlohmann::json& r, std::size_t line) {
      try {
        ic.patterns.push_back(pattern_from_json(r));
      } catch (const ParseError& e) {
        throw ParseError(c.patterns_path + ": " + e.what(), line, e.column());
      }
    });
  }
  if (!c.entities_path.empty())
    for (const auto& r : read_records(c.entities_path)) ic.kb.add(entity_from_json(r));
  if (c.entities_from_corpus)
    for (auto& e : entities_from_corpus(corpus))
      if (!ic.kb.find(e.entity_id)) ic.kb.add(std::move(e));
  const auto rules = c.rules_path.empty() ? builtin_keyword_rules() : read_records(c.rules_path);
  for (auto& cl : keyword_classifiers_from_records(rules))
    if (ic.space.contains(cl->intent())) ic.classifiers.push_back(std::move(cl));
  if (ic.space.contains("friend"))
    ic.classifiers.push_back(std::make_shared<FriendNameClassifier>("friend", user_names(corpus)));
  return ic;
}

inline Engine load_engine(const EngineConfig& c) {
  if (c.corpus.documents.empty()) throw DataError("engine config names no documents file");
  Corpus corpus = load_corpus(c.corpus, c.now > 0 ? c.now : std::numeric_limits<std::int64_t>::max());
  IntentConfig intents = build_intent_config(c, corpus);
  std::optional<EngagementModel> model;
  if (!c.engagement_model_path.empty()) {
    std::ifstream in(c.engagement_model_path);
    if (!in) throw DataError("cannot open engagement model '" + c.engagement_model_path + "'");
    model = engagement_model_from_json(nlohmann::json::parse(in));
  }
  ComponentRegistry registry = build_registry(c.components, intents.space, model);
  RankerConfig ranker = ranker_config_from_specs(c.components);
  if (c.ranker) {
    const auto& r = *c.ranker;
    ranker.theta = r.value("theta", ranker.theta);
    ranker.k_final = r.value("k_final", ranker.k_final);
    if (r.contains("generic_weights"))
      for (const auto& [k, v] : r["generic_weights"].items()) ranker.generic_weights[k] = v.get<double>();
    if (r.contains("intent_weights"))
      for (const auto& [k, v] : r["intent_weights"].items()) ranker.intent_weights[k] = v.get<double>();
  }
  return Engine(std::move(corpus), c.index, std::move(intents), std::move(registry), std::move(ranker), c.now);
}

}  // namespace pirank
