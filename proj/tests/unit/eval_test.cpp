#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pirank/eval.hpp"

using namespace pirank;

namespace {

const Engine& demo() {
  static const Engine e = fixtures::demo_engine();
  return e;
}

std::string demo_file(const std::string& name) { return std::string(PIRANK_DATA_DIR) + "/demo/" + name; }

std::size_t parse_column(std::string_view text) {
  try {
    parse_expectation(text);
  } catch (const ParseError& e) {
    return e.column();
  }
  return 0;
}

RankedList list_of(std::vector<std::string> ids) {
  RankedList l;
  l.user_id = "u";
  for (auto& id : ids) {
    l.entries.push_back({id, 0.0, 0.0});
    ScoreTrace t;
    t.doc_id = id;
    l.traces.push_back(t);
  }
  return l;
}

}  // namespace

TEST(Expectation, ParsesEveryKind) {
  auto e = parse_expectation("top1: relation=friend type=user");
  EXPECT_EQ(e.kind, Expectation::Kind::top1_matches);
  ASSERT_EQ(e.predicates.size(), 2u);
  EXPECT_EQ(e.predicates[1], (std::pair<std::string, std::string>{"type", "user"}));
  e = parse_expectation("doc@rank: d1 <= 3");
  EXPECT_EQ(e.kind, Expectation::Kind::doc_at_rank);
  EXPECT_EQ(e.n, 3u);
  e = parse_expectation("in_topk: d1 5");
  EXPECT_EQ(e.kind, Expectation::Kind::contains_in_topk);
  EXPECT_EQ(parse_expectation("in_topk: d1 <= 5").n, 5u);
  EXPECT_EQ(parse_expectation("excludes: d9").doc_a, "d9");
  e = parse_expectation("before: a b");
  EXPECT_EQ(e.doc_b, "b");
}

TEST(Expectation, ErrorsPointPastTheColon) {
  EXPECT_EQ(parse_column("top1:"), 6u);
  EXPECT_EQ(parse_column("top1: colour=red"), 6u);
  EXPECT_EQ(parse_column("doc@rank: d1 < 3"), 10u);
  EXPECT_EQ(parse_column("doc@rank: d1 <= 0"), 10u);
  EXPECT_EQ(parse_column("in_topk: d1 two"), 9u);
  EXPECT_EQ(parse_column("before: a a"), 8u);
  EXPECT_EQ(parse_column("somewhere: a"), 11u);
  EXPECT_EQ(parse_column("no colon"), 1u);
}

TEST(Expectation, ChecksAgainstARankedList) {
  Corpus c;
  Document d;
  d.doc_id = "v";
  d.doc_type = DocType::video;
  d.publisher_id = "pg";
  d.languages["es"] = 1.0;
  c.add_document(d);
  const auto list = list_of({"v", "b", "c"});
  EXPECT_EQ(check_expectation(parse_expectation("top1: type=video publisher=pg lang=es"), list, c), "");
  EXPECT_NE(check_expectation(parse_expectation("top1: type=post"), list, c), "");
  EXPECT_EQ(check_expectation(parse_expectation("doc@rank: c <= 3"), list, c), "");
  EXPECT_NE(check_expectation(parse_expectation("doc@rank: c <= 2"), list, c), "");
  EXPECT_NE(check_expectation(parse_expectation("in_topk: z 3"), list, c), "");
  EXPECT_EQ(check_expectation(parse_expectation("excludes: z"), list, c), "");
  EXPECT_NE(check_expectation(parse_expectation("excludes: b"), list, c), "");
  EXPECT_EQ(check_expectation(parse_expectation("before: b c"), list, c), "");
  EXPECT_EQ(check_expectation(parse_expectation("before: b zz"), list, c), "");
  EXPECT_NE(check_expectation(parse_expectation("before: c b"), list, c), "");
  EXPECT_NE(check_expectation(parse_expectation("top1: id=v"), list_of({}), c), "");
}

TEST(BvtSuite, DemoSuiteLoadsAndPasses) {
  const auto suite = load_bvt_suite(demo_file("bvts.jsonl"));
  ASSERT_GE(suite.size(), 5u);
  const auto report = run_bvts(suite, demo(), demo().ranker());
  for (const auto& r : report.cases) EXPECT_EQ(r.status, CaseStatus::pass) << r.case_id << ": " << r.message;
  EXPECT_EQ(report.overall.total, suite.size());
  EXPECT_DOUBLE_EQ(report.overall.rate(), 1.0);
}

TEST(BvtSuite, DuplicateIdsAndBadExpectationsAreReported) {
  const auto path = (std::filesystem::temp_directory_path() / "pirank_bvt_dup.jsonl").string();
  std::ofstream(path) << R"({"case_id": "a", "query": "x", "user_id": "u", "expect": "excludes: d"})" << '\n'
                      << R"({"case_id": "a", "query": "y", "user_id": "u", "expect": "excludes: d"})" << '\n';
  try {
    load_bvt_suite(path);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  std::ofstream(path) << R"({"case_id": "a", "query": "x", "user_id": "u", "expect": "excludes d"})" << '\n';
  try {
    load_bvt_suite(path);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  std::filesystem::remove(path);
}

TEST(BvtSuite, UnknownUserIsAnErrorNotAFailure) {
  BVTCase c{"c", "taylor", "nobody", "generic", "en", std::nullopt, {parse_expectation("excludes: x")}};
  const auto r = run_case(c, demo(), demo().ranker());
  EXPECT_EQ(r.status, CaseStatus::error);
  EXPECT_NE(r.message.find("nobody"), std::string::npos);
}

TEST(Metrics, HandComputedValues) {
  const std::map<std::string, int> g = {{"a", 0}, {"b", 2}, {"c", 1}};
  const double dcg = 3.0 / std::log2(3.0) + 1.0 / 2.0;
  const double ideal = 3.0 + 1.0 / std::log2(3.0);
  EXPECT_NEAR(*ndcg_at_k({"a", "b", "c"}, g, 3), dcg / ideal, 1e-15);
  EXPECT_NEAR(*ndcg_at_k({"b", "c", "a"}, g, 3), 1.0, 1e-15);
  EXPECT_NEAR(*err_at_k({"b", "c"}, g, 10), 3.0 / 16 + (13.0 / 16) * (1.0 / 16) / 2, 1e-15);
  EXPECT_FALSE(ndcg_at_k({"a"}, {{"a", 0}}, 10).has_value());
  EXPECT_FALSE(err_at_k({"a"}, {{"a", 0}}, 10).has_value());
  EXPECT_FALSE(ndcg_at_k({"b"}, g, 0).has_value());
  EXPECT_DOUBLE_EQ(*ndcg_at_k({"x", "y"}, g, 2), 0.0);
}

TEST(Metrics, AgreeWithBruteForceOracles) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 300; ++trial) {
    std::map<std::string, int> grades;
    std::vector<std::string> pool;
    for (int i = 0; i < 8; ++i) pool.push_back("d" + std::to_string(i));
    for (const auto& id : pool)
      if (rng() % 3) grades[id] = static_cast<int>(rng() % 5);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(rng() % 9);
    const std::size_t k = 1 + rng() % 8;
    const auto n = ndcg_at_k(pool, grades, k);
    const auto want_n = oracle::ndcg(pool, grades, k);
    ASSERT_EQ(n.has_value(), want_n.has_value());
    if (n) EXPECT_NEAR(*n, *want_n, 1e-12);
    const auto e = err_at_k(pool, grades, k);
    const auto want_e = oracle::err(pool, grades, k);
    ASSERT_EQ(e.has_value(), want_e.has_value());
    if (e) EXPECT_NEAR(*e, *want_e, 1e-12);
  }
}

TEST(Metrics, DemoMetricsAreInRange) {
  const auto n = mean_ndcg(demo(), demo().ranker(), demo().corpus().judgments(), 10);
  EXPECT_GT(n.query_count, 0u);
  EXPECT_GE(n.value, 0.0);
  EXPECT_LE(n.value, 1.0);
  const auto s = sgcr_replay(demo(), demo().ranker(), demo().corpus().queries(), 10);
  EXPECT_EQ(s.query_count + s.excluded, demo().corpus().queries().size());
  EXPECT_GT(s.value, 0.0);
  EXPECT_LE(s.value, 1.0);
}

TEST(Bootstrap, DeterministicAndCalibrated) {
  std::vector<double> a(40), b(40);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = 0.5 + noise(rng);
    b[i] = a[i] + 0.1 + noise(rng) * 0.2;
  }
  const auto r1 = paired_bootstrap(a, b, 2000, 7);
  const auto r2 = paired_bootstrap(a, b, 2000, 7);
  EXPECT_EQ(r1.p_value, r2.p_value);
  EXPECT_LT(r1.p_value, 0.01);
  EXPECT_NEAR(r1.delta, 0.1, 0.02);
  EXPECT_DOUBLE_EQ(paired_bootstrap(a, a, 500, 1).p_value, 1.0);
  EXPECT_THROW(paired_bootstrap({}, {}, 10, 0), DataError);
  EXPECT_THROW(paired_bootstrap({1.0}, {1.0, 2.0}, 10, 0), ConfigError);
}

TEST(AbCompare, IdenticalConfigsShowNoDifference) {
  ABOptions opts;
  opts.resamples = 200;
  const auto suite = load_bvt_suite(demo_file("bvts.jsonl"));
  const auto rep = ab_compare(demo(), demo().ranker(), demo().ranker(), demo().corpus().queries(),
                              demo().corpus().judgments(), suite, opts);
  ASSERT_EQ(rep.metrics.size(), 3u);
  for (const auto& m : rep.metrics) {
    EXPECT_EQ(m.delta, 0.0) << m.name;
    EXPECT_EQ(m.p_value, 1.0) << m.name;
  }
  EXPECT_EQ(rep.bvt_rate_a, rep.bvt_rate_b);
}

TEST(AbCompare, MissingInputsAreErrors) {
  ABOptions opts;
  opts.resamples = 10;
  EXPECT_THROW(ab_compare(demo(), demo().ranker(), demo().ranker(), {}, demo().corpus().judgments(), {}, opts),
               DataError);
  opts.metrics = {"ndcg"};
  EXPECT_THROW(ab_compare(demo(), demo().ranker(), demo().ranker(), {}, {}, {}, opts), DataError);
  opts.metrics = {"mrr"};
  EXPECT_THROW(ab_compare(demo(), demo().ranker(), demo().ranker(), {}, {}, {}, opts), ConfigError);
}
