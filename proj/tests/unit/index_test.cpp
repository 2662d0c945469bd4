#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pirank/components.hpp"
#include "pirank/index.hpp"

using namespace pirank;

namespace {

Corpus tiny_corpus() {
  Corpus c;
  auto add = [&](std::string id, std::string title, std::string body) {
    Document d;
    d.doc_id = std::move(id);
    d.title = std::move(title);
    d.body = std::move(body);
    c.add_document(std::move(d));
  };
  add("a", "red apple", "a red apple a day");
  add("b", "green apple", "apples and pears");
  add("c", "red car", "fast red car with red seats");
  add("d", "bicycle", "two wheels");
  add("e", "apple pie", "recipe with apple and cinnamon");
  return c;
}

std::vector<oracle::RawDoc> raw_of(const Corpus& c) {
  std::vector<oracle::RawDoc> out;
  for (const auto& d : c.documents()) out.push_back({d.doc_id, d.title, d.body});
  return out;
}

}  // namespace

TEST(Bm25, IdfIsPositiveAndDecreasingInDocumentFrequency) {
  EXPECT_NEAR(bm25_idf(10, 1), std::log(1.0 + 9.5 / 1.5), 1e-15);
  EXPECT_GT(bm25_idf(10, 10), 0.0);
  for (std::size_t df = 1; df < 10; ++df) EXPECT_GT(bm25_idf(10, df), bm25_idf(10, df + 1));
}

TEST(Bm25, MatchesFromScratchScoresOnSmallCorpus) {
  const auto c = tiny_corpus();
  const oracle::Bm25 ref(raw_of(c));
  const auto index = build_index(c, 3);
  for (const char* q : {"red apple", "apple", "red red car", "pears", "unicorn", "apple pie recipe"}) {
    const auto terms = index.query_terms(q);
    for (const auto& d : c.documents())
      EXPECT_NEAR(index.score(terms, d.doc_id), ref.score(q, d.doc_id), 1e-12) << q << " / " << d.doc_id;
  }
}

TEST(Bm25, DocumentLengthCountsTitleAndBody) {
  const auto c = tiny_corpus();
  const auto index = build_index(c, 1);
  EXPECT_EQ(index.stats().num_docs, 5u);
  EXPECT_NEAR(index.stats().avgdl, (7 + 5 + 8 + 3 + 7) / 5.0, 1e-12);
  const auto* p = index.posting("red", "c");
  ASSERT_NE(p, nullptr);
  EXPECT_EQ(p->tf, 3u);
  EXPECT_EQ(p->positions, (std::vector<std::uint32_t>{0, 3, 6}));
  EXPECT_EQ(p->fields, kInTitle | kInBody);
}

TEST(Retrieve, ReturnsTopKByScoreThenDocId) {
  Corpus c;
  for (const char* id : {"z", "m", "a", "q"}) {
    Document d;
    d.doc_id = id;
    d.title = "same words";
    c.add_document(d);
  }
  const auto index = build_index(c, 2);
  RetrieveOptions opts;
  opts.k = 3;
  const auto got = retrieve(index, tokenize("same"), opts);
  ASSERT_EQ(got.size(), 3u);
  EXPECT_EQ(got[0].doc_id, "a");
  EXPECT_EQ(got[1].doc_id, "m");
  EXPECT_EQ(got[2].doc_id, "q");
}

TEST(Retrieve, AgreesWithOracleRankingOnRandomCorpora) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto rc = fixtures::random_corpus(rng, {.docs = 150, .vocab = 40});
    const oracle::Bm25 ref(rc.raw);
    const auto index = build_index(rc.corpus, 4);
    for (int q = 0; q < 10; ++q) {
      const auto query = fixtures::random_query(rng, rc.vocab);
      const auto want = ref.ranking(query);
      RetrieveOptions opts;
      opts.k = 1000;
      const auto got = retrieve(index, tokenize(query), opts);
      ASSERT_EQ(got.size(), want.size()) << query;
      std::map<std::string, double> want_map(want.begin(), want.end());
      for (const auto& c : got) EXPECT_NEAR(c.first_pass_score, want_map.at(c.doc_id), 1e-9);
    }
  }
}

TEST(Retrieve, SmallPerShardBudgetNeedsExplicitOptIn) {
  std::mt19937_64 rng(5);
  auto rc = fixtures::random_corpus(rng, {.docs = 200, .vocab = 10});
  const auto single = build_index(rc.corpus, 1);
  const auto sharded = build_index(rc.corpus, 8);
  RetrieveOptions opts;
  opts.k = 20;
  opts.per_shard_k = 2;
  const auto tokens = tokenize("w0 w1");
  EXPECT_EQ(retrieve(sharded, tokens, opts).size(), 20u);
  const auto exact = retrieve(single, tokens, opts);
  const auto clamped = retrieve(sharded, tokens, opts);
  for (std::size_t i = 0; i < exact.size(); ++i) EXPECT_EQ(exact[i].doc_id, clamped[i].doc_id);
  opts.allow_small_per_shard_k = true;
  EXPECT_LE(retrieve(sharded, tokens, opts).size(), 20u);
}

TEST(Retrieve, EmptyQueryYieldsNothing) {
  const auto index = build_index(tiny_corpus(), 2);
  EXPECT_TRUE(retrieve(index, {}, {}).empty());
  EXPECT_TRUE(retrieve(index, tokenize("unicorn"), {}).empty());
}

TEST(Index, RejectsZeroShards) { EXPECT_THROW(build_index(tiny_corpus(), 0), ConfigError); }

TEST(Index, StopwordsAreDroppedFromDocumentsAndQueries) {
  TokenizerConfig tok;
  tok.stopwords = {"a", "with", "and"};
  const auto index = build_index(tiny_corpus(), 2, tok);
  EXPECT_EQ(index.posting("a", "a"), nullptr);
  EXPECT_EQ(index.query_terms("a red apple"), (std::vector<std::string>{"red", "apple"}));
}

TEST(Index, SnapshotRoundTripPreservesScores) {
  TokenizerConfig tok;
  tok.stopwords = {"with"};
  const auto c = tiny_corpus();
  const auto index = build_index(c, 3, tok);
  const auto path = (std::filesystem::temp_directory_path() / "pirank_index_snapshot.jsonl").string();
  index.save(path);
  const auto loaded = ShardedIndex::load(path);
  EXPECT_EQ(loaded.num_shards(), 3u);
  for (const char* q : {"red apple", "with recipe", "car"}) {
    const auto terms = index.query_terms(q);
    EXPECT_EQ(loaded.query_terms(q), terms);
    for (const auto& d : c.documents()) EXPECT_EQ(loaded.score(terms, d.doc_id), index.score(terms, d.doc_id));
  }
  std::filesystem::remove(path);
}

TEST(Index, SnapshotWithWrongVersionIsRejected) {
  const auto path = (std::filesystem::temp_directory_path() / "pirank_index_bad.jsonl").string();
  std::ofstream(path) << R"({"format": "pirank-index", "version": 999, "num_shards": 1})" << '\n';
  try {
    ShardedIndex::load(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("999"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(Signals, ProximityAndTitleRatioMatchBruteForce) {
  std::mt19937_64 rng(31);
  auto rc = fixtures::random_corpus(rng, {.docs = 60, .vocab = 15});
  const oracle::Bm25 ref(rc.raw);
  const auto index = build_index(rc.corpus, 2);
  UserContext user{"u", {}, std::nullopt, {}};
  for (int q = 0; q < 40; ++q) {
    const auto query = fixtures::random_query(rng, rc.vocab);
    const auto ctx = QueryContext::make(query, user);
    for (const auto& raw : rc.raw) {
      const auto s = compute_signals(ctx, *rc.corpus.find_document(raw.id), index, rc.corpus);
      EXPECT_NEAR(s.proximity, oracle::proximity(ref.stream(raw.id), query), 1e-12) << query << " " << raw.id;
      EXPECT_NEAR(s.title_hit_ratio, oracle::title_ratio(raw.title, query), 1e-12);
      EXPECT_NEAR(s.bm25, ref.score(query, raw.id), 1e-9);
    }
  }
}

TEST(Signals, AdjacentFullQueryHasProximityOne) {
  EXPECT_DOUBLE_EQ(proximity_score({{4}, {5}}, 2), 1.0);
  EXPECT_DOUBLE_EQ(proximity_score({{0}, {3}}, 2), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(proximity_score({{2}, {}}, 2), 0.5);
  EXPECT_DOUBLE_EQ(proximity_score({{}, {}}, 2), 0.0);
}

TEST(Signals, HaversineMatchesAtan2Form) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
  for (int i = 0; i < 500; ++i) {
    GeoPoint a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)};
    EXPECT_NEAR(haversine_km(a, b), oracle::haversine_km(a.lat, a.lon, b.lat, b.lon), 1e-6);
  }
  // Paris to London is about 344 km.
  EXPECT_NEAR(haversine_km({48.8566, 2.3522}, {51.5074, -0.1278}), 343.5, 1.0);
}
