#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pirank/combiner.hpp"
#include "pirank/engine.hpp"
#include "pirank/error.hpp"
#include "pirank/text.hpp"

namespace pirank {

// ---------------------------------------------------------------------------
// Build verification tests

struct Expectation {
  enum class Kind { doc_at_rank, top1_matches, contains_in_topk, excludes, ordered_pair };
  Kind kind = Kind::top1_matches;
  std::string doc_a;
  std::string doc_b;
  std::size_t n = 0;
  /// top1 predicates, key -> value.
  std::vector<std::pair<std::string, std::string>> predicates;
  std::string source;
};

inline const std::set<std::string>& top1_keys() {
  static const std::set<std::string> keys = {"type", "relation", "id", "author", "publisher", "lang", "entity"};
  return keys;
}

/// Expectation grammar:
///   top1: key=value ...          keys: type relation id author publisher lang entity
///   doc@rank: <doc> <= <n>
///   in_topk: <doc> <n>
///   excludes: <doc>
///   before: <doc_a> <doc_b>
inline Expectation parse_expectation(std::string_view text) {
  Expectation e;
  e.source = std::string(text);
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ParseError("expectation '" + e.source + "' is missing ':'", 0, 1);
  std::string head(text.substr(0, colon));
  head.erase(0, head.find_first_not_of(' '));
  head.erase(head.find_last_not_of(' ') + 1);
  std::istringstream rest{std::string(text.substr(colon + 1))};
  std::vector<std::string> args;
  for (std::string w; rest >> w;) args.push_back(w);
  auto fail = [&](const std::string& why) -> Expectation {
    throw ParseError("expectation '" + e.source + "': " + why, 0, colon + 2);
  };
  auto positive = [&](const std::string& s) -> std::size_t {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &pos);
    } catch (const std::exception&) {
      fail("'" + s + "' is not an integer");
    }
    if (pos != s.size() || v < 1) fail("rank bound must be a positive integer");
    return static_cast<std::size_t>(v);
  };
  if (head == "top1") {
    e.kind = Expectation::Kind::top1_matches;
    if (args.empty()) fail("top1 needs at least one key=value predicate");
    for (const auto& a : args) {
      const auto eq = a.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == a.size()) fail("malformed predicate '" + a + "'");
      auto key = a.substr(0, eq);
      if (!top1_keys().count(key)) fail("unknown top1 key '" + key + "'");
      e.predicates.emplace_back(std::move(key), a.substr(eq + 1));
    }
  } else if (head == "doc@rank") {
    e.kind = Expectation::Kind::doc_at_rank;
    if (args.size() != 3 || args[1] != "<=") fail("expected 'doc@rank: <doc> <= <n>'");
    e.doc_a = args[0];
    e.n = positive(args[2]);
  } else if (head == "in_topk") {
    e.kind = Expectation::Kind::contains_in_topk;
    if (args.size() == 3 && args[1] == "<=") args.erase(args.begin() + 1);
    if (args.size() != 2) fail("expected 'in_topk: <doc> <k>'");
    e.doc_a = args[0];
    e.n = positive(args[1]);
  } else if (head == "excludes") {
    e.kind = Expectation::Kind::excludes;
    if (args.size() != 1) fail("expected 'excludes: <doc>'");
    e.doc_a = args[0];
  } else if (head == "before") {
    e.kind = Expectation::Kind::ordered_pair;
    if (args.size() != 2) fail("expected 'before: <doc_a> <doc_b>'");
    if (args[0] == args[1]) fail("before needs two distinct documents");
    e.doc_a = args[0];
    e.doc_b = args[1];
  } else {
    fail("unknown expectation kind '" + head + "'");
  }
  return e;
}

struct BVTCase {
  std::string case_id;
  std::string query_text;
  std::string user_id;
  std::string intent_tag;
  std::string language_tag;
  std::optional<StructuredSuggestion> suggestion;
  std::vector<Expectation> expectations;
};

inline BVTCase bvt_case_from_json(const nlohmann::json& j) {
  BVTCase c;
  c.case_id = j.at("case_id").get<std::string>();
  c.query_text = j.at("query").get<std::string>();
  c.user_id = j.at("user_id").get<std::string>();
  c.intent_tag = j.value("intent_tag", std::string(kFallbackIntent));
  c.language_tag = j.value("language_tag", std::string("en"));
  if (j.contains("suggestion") && !j["suggestion"].is_null())
    c.suggestion = StructuredSuggestion{j["suggestion"].at("entity_id").get<std::string>(),
                                        j["suggestion"].at("intent_id").get<std::string>()};
  const auto& ex = j.at("expect");
  if (ex.is_string()) {
    c.expectations.push_back(parse_expectation(ex.get<std::string>()));
  } else {
    for (const auto& s : ex) c.expectations.push_back(parse_expectation(s.get<std::string>()));
  }
  if (c.expectations.empty()) throw DataError("BVT case '" + c.case_id + "' has no expectations");
  return c;
}

inline std::vector<BVTCase> load_bvt_suite(const std::string& path) {
  std::vector<BVTCase> out;
  std::set<std::string> ids;
  for_each_record(path, [&](const nlohmann::json& j, std::size_t line) {
    try {
      out.push_back(bvt_case_from_json(j));
    } catch (const ParseError& e) {
      throw ParseError(path + ": " + e.what(), line, e.column());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what(), line);
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}:{}: {}", path, line, e.what()));
    }
    if (!ids.insert(out.back().case_id).second)
      throw DataError(fmt::format("{}:{}: duplicate case_id '{}'", path, line, out.back().case_id));
  });
  return out;
}

enum class CaseStatus { pass, fail, error };

inline std::string_view to_string(CaseStatus s) {
  switch (s) {
    case CaseStatus::pass: return "pass";
    case CaseStatus::fail: return "fail";
    case CaseStatus::error: return "error";
  }
  return "error";
}

struct CaseResult {
  std::string case_id;
  CaseStatus status = CaseStatus::pass;
  std::string intent_tag;
  std::string language_tag;
  std::optional<std::string> failed_expectation;
  std::string message;
  std::vector<std::string> top;
};

struct PassRate {
  std::size_t passes = 0;
  std::size_t total = 0;
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(passes) / static_cast<double>(total); }
};

struct BVTReport {
  std::vector<CaseResult> cases;  // sorted by case_id
  PassRate overall;
  std::map<std::string, PassRate> by_intent;
  std::map<std::string, PassRate> by_language;

  std::map<std::string, double> intent_rates() const {
    std::map<std::string, double> out;
    for (const auto& [k, v] : by_intent) out[k] = v.rate();
    return out;
  }
};

namespace detail {

inline bool top1_predicate(const std::string& key, const std::string& value, const Document& doc,
                           const ScoreTrace& trace, const Corpus& corpus, const std::string& user_id) {
  (void)trace;
  if (key == "type") return to_string(doc.doc_type) == value;
  if (key == "id") return doc.doc_id == value;
  if (key == "author") return doc.author_id && *doc.author_id == value;
  if (key == "publisher") return doc.publisher_id && *doc.publisher_id == value;
  if (key == "lang") return doc.languages.count(value) > 0;
  if (key == "entity") return doc.entity_ids.count(value) > 0;
  if (key == "relation") {
    const auto r = parse_relation(value);
    if (!r) return false;
    return social_relations(corpus.graph(), user_id, doc).contains(*r);
  }
  return false;
}

}  // namespace detail

/// Checks one expectation against a ranked list (the top k_final entries).
/// Returns an empty string on success, otherwise the reason.
inline std::string check_expectation(const Expectation& e, const RankedList& list, const Corpus& corpus) {
  const auto rank_a = list.rank_of(e.doc_a);
  switch (e.kind) {
    case Expectation::Kind::top1_matches: {
      if (list.entries.empty()) return "result list is empty";
      const auto& top = list.entries.front().doc_id;
      const auto* doc = corpus.find_document(top);
      const auto* trace = list.trace(top);
      for (const auto& [k, v] : e.predicates)
        if (!doc || !trace || !detail::top1_predicate(k, v, *doc, *trace, corpus, list.user_id))
          return fmt::format("top1 {} does not satisfy {}={}", top, k, v);
      return {};
    }
    case Expectation::Kind::doc_at_rank:
    case Expectation::Kind::contains_in_topk:
      if (!rank_a) return fmt::format("{} not in results", e.doc_a);
      if (*rank_a > e.n) return fmt::format("{} at rank {} (want <= {})", e.doc_a, *rank_a, e.n);
      return {};
    case Expectation::Kind::excludes:
      if (rank_a) return fmt::format("{} present at rank {}", e.doc_a, *rank_a);
      return {};
    case Expectation::Kind::ordered_pair: {
      if (!rank_a) return fmt::format("{} not in results", e.doc_a);
      const auto rank_b = list.rank_of(e.doc_b);
      if (rank_b && *rank_b < *rank_a)
        return fmt::format("{} at rank {} is after {} at rank {}", e.doc_a, *rank_a, e.doc_b, *rank_b);
      return {};
    }
  }
  return "unknown expectation";
}

inline CaseResult run_case(const BVTCase& c, const Engine& engine, const RankerConfig& config) {
  CaseResult r;
  r.case_id = c.case_id;
  r.intent_tag = c.intent_tag;
  r.language_tag = c.language_tag;
  RankedList list;
  try {
    list = engine.search({c.query_text, c.user_id, c.suggestion}, config);
  } catch (const Error& e) {
    r.status = CaseStatus::error;
    r.message = e.what();
    return r;
  }
  for (std::size_t i = 0; i < list.entries.size() && i < 5; ++i) r.top.push_back(list.entries[i].doc_id);
  for (const auto& e : c.expectations) {
    auto why = check_expectation(e, list, engine.corpus());
    if (!why.empty()) {
      r.status = CaseStatus::fail;
      r.failed_expectation = e.source;
      r.message = std::move(why);
      break;
    }
  }
  return r;
}

inline BVTReport run_bvts(const std::vector<BVTCase>& suite, const Engine& engine, const RankerConfig& config) {
  BVTReport rep;
  for (const auto& c : suite) rep.cases.push_back(run_case(c, engine, config));
  std::sort(rep.cases.begin(), rep.cases.end(),
            [](const CaseResult& a, const CaseResult& b) { return a.case_id < b.case_id; });
  for (const auto& r : rep.cases) {
    const std::size_t pass = r.status == CaseStatus::pass ? 1 : 0;
    for (PassRate* pr : {&rep.overall, &rep.by_intent[r.intent_tag], &rep.by_language[r.language_tag]}) {
      pr->passes += pass;
      ++pr->total;
    }
  }
  return rep;
}

inline nlohmann::json to_json(const BVTReport& rep) {
  nlohmann::json j;
  auto rate = [](const PassRate& p) {
    return nlohmann::json{{"passes", p.passes}, {"total", p.total}, {"rate", p.rate()}};
  };
  j["overall"] = rate(rep.overall);
  for (const auto& [k, v] : rep.by_intent) j["by_intent"][k] = rate(v);
  for (const auto& [k, v] : rep.by_language) j["by_language"][k] = rate(v);
  j["cases"] = nlohmann::json::array();
  for (const auto& c : rep.cases) {
    nlohmann::json cj{{"case_id", c.case_id}, {"status", to_string(c.status)}, {"top", c.top}};
    if (c.failed_expectation) cj["failed_expectation"] = *c.failed_expectation;
    if (!c.message.empty()) cj["message"] = c.message;
    j["cases"].push_back(std::move(cj));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Offline metrics

inline double graded_gain(int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; }

/// NDCG@k with gain 2^g - 1 and discount 1/log2(rank + 1). Unjudged
/// documents have grade 0. Undefined when no judged document is positive.
inline std::optional<double> ndcg_at_k(const std::vector<std::string>& ranking, const std::map<std::string, int>& grades,
                                       std::size_t k) {
  std::vector<int> ideal;
  for (const auto& [_, g] : grades)
    if (g > 0) ideal.push_back(g);
  if (ideal.empty() || k == 0) return std::nullopt;
  std::sort(ideal.rbegin(), ideal.rend());
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal.size() && i < k; ++i) idcg += graded_gain(ideal[i]) / std::log2(i + 2.0);
  double dcg = 0.0;
  for (std::size_t i = 0; i < ranking.size() && i < k; ++i) {
    auto it = grades.find(ranking[i]);
    if (it != grades.end() && it->second > 0) dcg += graded_gain(it->second) / std::log2(i + 2.0);
  }
  return dcg / idcg;
}

/// Expected reciprocal rank@k with stop probability (2^g - 1) / 16.
inline std::optional<double> err_at_k(const std::vector<std::string>& ranking, const std::map<std::string, int>& grades,
                                      std::size_t k) {
  bool any = false;
  for (const auto& [_, g] : grades) any = any || g > 0;
  if (!any || k == 0) return std::nullopt;
  double err = 0.0;
  double reach = 1.0;
  for (std::size_t i = 0; i < ranking.size() && i < k; ++i) {
    auto it = grades.find(ranking[i]);
    const double r = it == grades.end() ? 0.0 : graded_gain(it->second) / 16.0;
    err += reach * r / static_cast<double>(i + 1);
    reach *= 1.0 - r;
  }
  return err;
}

struct MetricResult {
  std::string name;
  double value = 0.0;
  std::size_t k = 0;
  std::size_t query_count = 0;
  std::size_t excluded = 0;
  /// query key -> per-query value, for paired comparisons.
  std::map<std::string, double> per_query;
};

using JudgmentMap = std::map<std::pair<std::string, std::string>, std::map<std::string, int>>;

/// Judgments grouped by (normalized query, user).
inline JudgmentMap group_judgments(const std::vector<RelevanceJudgment>& judgments) {
  JudgmentMap out;
  for (const auto& j : judgments) out[{query_key(j.query_text), j.user_id}][j.doc_id] = j.grade;
  return out;
}

inline std::vector<std::string> ranked_ids(const RankedList& list, std::size_t k) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < list.entries.size() && i < k; ++i) ids.push_back(list.entries[i].doc_id);
  return ids;
}

template <typename Fn>
MetricResult graded_metric(std::string name, const Engine& engine, const RankerConfig& config,
                           const std::vector<RelevanceJudgment>& judgments, std::size_t k, Fn&& fn) {
  MetricResult m;
  m.name = std::move(name);
  m.k = k;
  RankerConfig cfg = config;
  cfg.k_final = std::max(cfg.k_final, k);
  for (const auto& [key, grades] : group_judgments(judgments)) {
    std::optional<double> v;
    if (engine.corpus().find_user(key.second)) {
      // Judgments store normalized text; the normalized form retrieves identically.
      const auto list = engine.search({key.first, key.second, std::nullopt}, cfg);
      v = fn(ranked_ids(list, k), grades, k);
    }
    if (!v) {
      ++m.excluded;
      continue;
    }
    m.per_query[key.first + '\x1f' + key.second] = *v;
  }
  m.query_count = m.per_query.size();
  double sum = 0.0;
  for (const auto& [_, v] : m.per_query) sum += v;
  m.value = m.query_count ? sum / static_cast<double>(m.query_count) : 0.0;
  return m;
}

inline MetricResult mean_ndcg(const Engine& engine, const RankerConfig& config,
                              const std::vector<RelevanceJudgment>& judgments, std::size_t k) {
  return graded_metric(fmt::format("ndcg@{}", k), engine, config, judgments, k,
                       [](const auto& r, const auto& g, std::size_t kk) { return ndcg_at_k(r, g, kk); });
}

inline MetricResult mean_err(const Engine& engine, const RankerConfig& config,
                             const std::vector<RelevanceJudgment>& judgments, std::size_t k) {
  return graded_metric(fmt::format("err@{}", k), engine, config, judgments, k,
                       [](const auto& r, const auto& g, std::size_t kk) { return err_at_k(r, g, kk); });
}

/// Offline search good-click rate: replays each logged query and counts it
/// when a document the user good-clicked lands in the top k. Records of
/// unknown users are excluded.
inline MetricResult sgcr_replay(const Engine& engine, const RankerConfig& config, const std::vector<QueryRecord>& log,
                                std::size_t k) {
  MetricResult m;
  m.name = fmt::format("sgcr@{}", k);
  m.k = k;
  RankerConfig cfg = config;
  cfg.k_final = std::max(cfg.k_final, k);
  double hits = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& rec = log[i];
    if (!engine.corpus().find_user(rec.user_id)) {
      ++m.excluded;
      continue;
    }
    const auto list = engine.search({rec.query_text, rec.user_id, rec.suggestion_click}, cfg);
    double v = 0.0;
    for (const auto& id : ranked_ids(list, k))
      if (rec.good_clicked.count(id)) {
        v = 1.0;
        break;
      }
    m.per_query[fmt::format("{:08}", i)] = v;
    hits += v;
  }
  m.query_count = m.per_query.size();
  m.value = m.query_count ? hits / static_cast<double>(m.query_count) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Paired comparison

struct BootstrapResult {
  double delta = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Paired bootstrap over per-query differences d_i = b_i - a_i. The
/// two-sided p-value compares how often a resampled mean falls on either
/// side of zero, with add-one smoothing.
inline BootstrapResult paired_bootstrap(const std::vector<double>& a, const std::vector<double>& b,
                                        std::size_t resamples, std::uint64_t seed) {
  if (a.size() != b.size()) throw ConfigError("paired bootstrap needs equal-length samples");
  if (a.empty()) throw DataError("paired bootstrap needs at least one query");
  if (resamples == 0) throw ConfigError("bootstrap resamples must be positive");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = b[i] - a[i];
    sum += d[i];
  }
  BootstrapResult r;
  r.n = n;
  r.delta = sum / static_cast<double>(n);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t le = 0;
  std::size_t ge = 0;
  for (std::size_t s = 0; s < resamples; ++s) {
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) t += d[pick(rng)];
    if (t <= 0.0) ++le;
    if (t >= 0.0) ++ge;
  }
  const double denom = static_cast<double>(resamples + 1);
  r.p_value = std::min(1.0, 2.0 * std::min((le + 1) / denom, (ge + 1) / denom));
  return r;
}

struct MetricDelta {
  std::string name;
  double value_a = 0.0;
  double value_b = 0.0;
  double delta = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

struct ABReport {
  std::vector<MetricDelta> metrics;
  double bvt_rate_a = 0.0;
  double bvt_rate_b = 0.0;
  std::map<std::string, double> bvt_delta_by_intent;
};

struct ABOptions {
  std::vector<std::string> metrics = {"sgcr", "ndcg", "err"};
  std::size_t k = 10;
  std::size_t resamples = 10000;
  std::uint64_t seed = 0;
};

inline MetricDelta compare_metric(const MetricResult& a, const MetricResult& b, std::size_t resamples,
                                  std::uint64_t seed) {
  std::vector<double> va;
  std::vector<double> vb;
  for (const auto& [key, x] : a.per_query) {
    auto it = b.per_query.find(key);
    if (it == b.per_query.end()) continue;
    va.push_back(x);
    vb.push_back(it->second);
  }
  if (va.empty()) throw DataError("metric " + a.name + " is defined on no query");
  const auto boot = paired_bootstrap(va, vb, resamples, seed);
  MetricDelta d;
  d.name = a.name;
  d.value_a = a.value;
  d.value_b = b.value;
  d.delta = boot.delta;
  d.p_value = boot.p_value;
  d.n = boot.n;
  return d;
}

inline ABReport ab_compare(const Engine& engine, const RankerConfig& a, const RankerConfig& b,
                           const std::vector<QueryRecord>& log, const std::vector<RelevanceJudgment>& judgments,
                           const std::vector<BVTCase>& suite, const ABOptions& opts = {}) {
  ABReport rep;
  for (const auto& name : opts.metrics) {
    MetricResult ma;
    MetricResult mb;
    if (name == "sgcr") {
      if (log.empty()) throw DataError("sgcr needs a non-empty query log");
      ma = sgcr_replay(engine, a, log, opts.k);
      mb = sgcr_replay(engine, b, log, opts.k);
    } else if (name == "ndcg" || name == "err") {
      if (judgments.empty()) throw DataError(name + " needs relevance judgments");
      ma = name == "ndcg" ? mean_ndcg(engine, a, judgments, opts.k) : mean_err(engine, a, judgments, opts.k);
      mb = name == "ndcg" ? mean_ndcg(engine, b, judgments, opts.k) : mean_err(engine, b, judgments, opts.k);
    } else {
      throw ConfigError("unknown metric '" + name + "' (expected sgcr, ndcg or err)");
    }
    rep.metrics.push_back(compare_metric(ma, mb, opts.resamples, opts.seed));
  }
  if (!suite.empty()) {
    const auto ra = run_bvts(suite, engine, a);
    const auto rb = run_bvts(suite, engine, b);
    rep.bvt_rate_a = ra.overall.rate();
    rep.bvt_rate_b = rb.overall.rate();
    for (const auto& [intent, pr] : rb.by_intent) rep.bvt_delta_by_intent[intent] = pr.rate() - ra.by_intent.at(intent).rate();
  }
  return rep;
}

inline nlohmann::json to_json(const ABReport& r) {
  nlohmann::json j;
  j["metrics"] = nlohmann::json::array();
  for (const auto& m : r.metrics)
    j["metrics"].push_back({{"name", m.name},
                            {"a", m.value_a},
                            {"b", m.value_b},
                            {"delta", m.delta},
                            {"p_value", m.p_value},
                            {"n", m.n}});
  j["bvt"] = {{"a", r.bvt_rate_a}, {"b", r.bvt_rate_b}, {"delta_by_intent", r.bvt_delta_by_intent}};
  return j;
}

}  // namespace pirank
