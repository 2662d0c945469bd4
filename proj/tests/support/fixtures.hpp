#pragma once

// Corpus and engine builders shared by the unit tests and the acceptance
// runner.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "oracles.hpp"
#include "pirank/engine.hpp"
#include "pirank/eval.hpp"

namespace fixtures {

/// Builds an engine in memory: built-in patterns, dictionaries and rules,
/// entities from the corpus plus `extra_entities`.
inline pirank::Engine make_engine(pirank::Corpus corpus,
                                  std::vector<pirank::ComponentSpec> specs = pirank::default_component_specs(),
                                  std::size_t shards = 4, std::int64_t now = 0,
                                  const std::vector<pirank::EntityRecord>& extra_entities = {}) {
  pirank::EngineConfig c;
  c.components = specs;
  auto intents = pirank::build_intent_config(c, corpus);
  for (const auto& e : extra_entities) intents.kb.add(e);
  auto registry = pirank::build_registry(specs, intents.space);
  auto ranker = pirank::ranker_config_from_specs(specs);
  pirank::IndexSettings settings;
  settings.num_shards = shards;
  return pirank::Engine(std::move(corpus), settings, std::move(intents), std::move(registry), ranker, now);
}

inline pirank::Engine demo_engine() {
  return pirank::load_engine(pirank::load_engine_config(std::string(PIRANK_DATA_DIR) + "/demo/engine.json"));
}

// ---------------------------------------------------------------------------
// Random corpora

struct RandomCorpus {
  pirank::Corpus corpus;
  std::vector<oracle::RawDoc> raw;
  std::vector<std::string> vocab;
  std::vector<std::string> users;
};

/// Skewed word choice so that document frequencies vary widely.
inline std::string pick_word(std::mt19937_64& rng, const std::vector<std::string>& vocab) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  return vocab[static_cast<std::size_t>(x * x * static_cast<double>(vocab.size())) % vocab.size()];
}

inline std::string random_text(std::mt19937_64& rng, const std::vector<std::string>& vocab, std::size_t lo,
                               std::size_t hi) {
  std::uniform_int_distribution<std::size_t> len(lo, hi);
  std::string out;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.empty()) out += (rng() % 5 == 0) ? ", " : " ";
    auto w = pick_word(rng, vocab);
    if (rng() % 7 == 0) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    out += w;
  }
  return out;
}

struct RandomCorpusOptions {
  std::size_t docs = 100;
  std::size_t vocab = 60;
  std::size_t users = 0;
  double reject_rate = 0.0;
  std::size_t friend_edges = 0;
  std::size_t engaged_edges = 0;
};

/// Random documents (and optionally users with a random social graph).
inline RandomCorpus random_corpus(std::mt19937_64& rng, const RandomCorpusOptions& o) {
  RandomCorpus rc;
  for (std::size_t i = 0; i < o.vocab; ++i) rc.vocab.push_back(fmt::format("w{}", i));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<std::string> langs = {"en", "es", "fr"};

  for (std::size_t i = 0; i < o.users; ++i) {
    pirank::UserContext user;
    user.user_id = fmt::format("u{}", i);
    user.languages = {langs[rng() % langs.size()]};
    if (rng() % 3 == 0) user.languages.push_back(langs[rng() % langs.size()]);
    if (rng() % 2) user.location = pirank::GeoPoint{u(rng) * 60.0 - 30.0, u(rng) * 120.0 - 60.0};
    rc.users.push_back(user.user_id);
    rc.corpus.add_user(std::move(user));
  }

  const std::vector<pirank::DocType> types = {pirank::DocType::post, pirank::DocType::video, pirank::DocType::photo,
                                              pirank::DocType::event};
  for (std::size_t i = 0; i < o.docs; ++i) {
    pirank::Document d;
    d.doc_id = fmt::format("d{:04}", i);
    d.doc_type = types[rng() % types.size()];
    d.title = random_text(rng, rc.vocab, 1, 5);
    d.body = random_text(rng, rc.vocab, 0, 30);
    if (!rc.users.empty()) {
      d.author_id = rc.users[rng() % rc.users.size()];
      if (i < rc.users.size()) {  // one profile per user
        d.doc_type = pirank::DocType::user;
        d.author_id = rc.users[i];
      }
    }
    const double p = u(rng);
    d.languages[langs[rng() % langs.size()]] = p;
    if (rng() % 4 == 0) d.location = pirank::GeoPoint{u(rng) * 60.0 - 30.0, u(rng) * 120.0 - 60.0};
    d.quality.kids_friendly = u(rng);
    d.quality.authentic = u(rng);
    d.quality.authoritative = u(rng);
    d.quality.readability = u(rng);
    if (d.doc_type == pirank::DocType::video) {
      d.quality.video_resolution = u(rng);
      d.publisher_id = fmt::format("pub{}", rng() % 4);
    }
    d.quality.policy_reject = u(rng) < o.reject_rate;
    d.engagement.impressions = rng() % 1000;
    d.engagement.clicks = d.engagement.impressions ? rng() % (d.engagement.impressions + 1) : 0;
    d.engagement.good_clicks = d.engagement.clicks ? rng() % (d.engagement.clicks + 1) : 0;
    rc.raw.push_back({d.doc_id, d.title, d.body});
    rc.corpus.add_document(std::move(d));
  }

  if (rc.users.size() >= 2) {
    for (std::size_t i = 0; i < o.friend_edges; ++i) {
      const auto& a = rc.users[rng() % rc.users.size()];
      const auto& b = rc.users[rng() % rc.users.size()];
      if (a != b) rc.corpus.add_edge({a, b, pirank::EdgeLabel::friend_of});
      const auto& c = rc.users[rng() % rc.users.size()];
      const auto& d = rc.users[rng() % rc.users.size()];
      if (c != d) rc.corpus.add_edge({c, d, rng() % 2 ? pirank::EdgeLabel::follow : pirank::EdgeLabel::pending_friend});
    }
    for (std::size_t i = 0; i < o.engaged_edges; ++i)
      rc.corpus.add_edge({rc.users[rng() % rc.users.size()], rc.raw[rng() % rc.raw.size()].id,
                          pirank::EdgeLabel::engaged});
  }
  return rc;
}

inline std::string random_query(std::mt19937_64& rng, const std::vector<std::string>& vocab) {
  return random_text(rng, vocab, 1, 3);
}

// ---------------------------------------------------------------------------
// Publisher scenario: every query names a page; the page's own video matches
// the query only partly, while a low-quality re-upload by someone else
// carries the exact page name as its title.

struct Scenario {
  pirank::Engine engine;
  std::vector<pirank::BVTCase> suite;
  std::vector<pirank::RelevanceJudgment> judgments;
  /// Queries that name nothing the detector knows.
  std::vector<std::string> control_queries;
  std::string user_id;
};

inline Scenario publisher_scenario(std::size_t n = 50) {
  pirank::Corpus corpus;
  corpus.add_user({"searcher", {"en"}, std::nullopt, {}});
  std::vector<pirank::EntityRecord> pages;
  std::vector<pirank::BVTCase> suite;
  std::vector<pirank::RelevanceJudgment> judgments;
  for (std::size_t i = 0; i < n; ++i) {
    const auto brand = fmt::format("brand{}", i);
    const auto name = brand + " studio";
    const auto page = fmt::format("page_{}", i);
    pages.push_back({page, "page", {{brand, "studio"}}, {"videos", "crafts"}, 1.0});

    pirank::Document own;
    own.doc_id = fmt::format("own_{}", i);
    own.doc_type = pirank::DocType::video;
    own.publisher_id = page;
    own.title = fmt::format("{} weekend project walkthrough", brand);
    own.body = fmt::format("step by step guide from the {} team with tools list and tips", brand);
    own.languages["en"] = 1.0;
    own.quality = {0.9, 0.9, 0.9, 0.9, 0.9, false};
    corpus.add_document(own);

    pirank::Document copy;
    copy.doc_id = fmt::format("copy_{}", i);
    copy.doc_type = pirank::DocType::video;
    copy.publisher_id = fmt::format("reuploader_{}", i % 3);
    copy.title = name;
    copy.body = name + " reupload";
    copy.languages["en"] = 1.0;
    copy.quality = {0.3, 0.1, 0.1, 0.3, 0.2, false};
    corpus.add_document(copy);

    pirank::BVTCase c;
    c.case_id = fmt::format("publisher_{:02}", i);
    c.query_text = name;
    c.user_id = "searcher";
    c.intent_tag = "video_publisher";
    c.expectations.push_back(pirank::parse_expectation("top1: publisher=" + page));
    suite.push_back(std::move(c));

    judgments.push_back({name, "searcher", own.doc_id, 4});
    judgments.push_back({name, "searcher", copy.doc_id, 1});
  }
  // Filler so that document frequencies look like a real corpus.
  std::mt19937_64 rng(7);
  std::vector<std::string> vocab = {"garden", "recipe", "kitchen", "travel", "weekend", "guide", "tips",
                                    "project", "music",  "camera",  "review", "city",    "tools", "team"};
  for (std::size_t i = 0; i < 200; ++i) {
    pirank::Document d;
    d.doc_id = fmt::format("filler_{:03}", i);
    d.doc_type = pirank::DocType::post;
    d.title = random_text(rng, vocab, 2, 4);
    d.body = random_text(rng, vocab, 5, 20);
    d.languages["en"] = 1.0;
    corpus.add_document(std::move(d));
  }
  std::vector<std::string> control = {"garden recipe", "travel tips", "camera review", "kitchen tools", "city guide"};
  return {make_engine(std::move(corpus), pirank::default_component_specs(), 4, 0, pages), std::move(suite),
          std::move(judgments), std::move(control), "searcher"};
}

// ---------------------------------------------------------------------------
// Language scenario: a Spanish-speaking searcher; each query has a Spanish
// answer and an English distractor whose title is exactly the query.

inline Scenario language_scenario(std::size_t n = 30) {
  pirank::Corpus corpus;
  corpus.add_user({"hablante", {"es"}, std::nullopt, {}});
  std::vector<pirank::RelevanceJudgment> judgments;
  std::vector<pirank::BVTCase> suite;
  for (std::size_t i = 0; i < n; ++i) {
    const auto topic = fmt::format("tema{}", i);
    const auto query = topic + " noticias";

    pirank::Document es;
    es.doc_id = fmt::format("es_{}", i);
    es.title = fmt::format("noticias {} de hoy en la ciudad", topic);
    es.body = fmt::format("resumen completo de {} con entrevistas y fotos", topic);
    es.languages["es"] = 1.0;
    corpus.add_document(es);

    pirank::Document en;
    en.doc_id = fmt::format("en_{}", i);
    en.title = query;
    en.body = fmt::format("{} noticias english digest", topic);
    en.languages["en"] = 1.0;
    corpus.add_document(en);

    judgments.push_back({query, "hablante", es.doc_id, 3});
    judgments.push_back({query, "hablante", en.doc_id, 0});

    pirank::BVTCase c;
    c.case_id = fmt::format("lang_{:02}", i);
    c.query_text = query;
    c.user_id = "hablante";
    c.language_tag = "es";
    c.expectations.push_back(pirank::parse_expectation("top1: lang=es"));
    suite.push_back(std::move(c));
  }
  return {make_engine(std::move(corpus)), std::move(suite), std::move(judgments), {}, "hablante"};
}

}  // namespace fixtures
