#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pirank/components.hpp"
#include "pirank/context.hpp"
#include "pirank/corpus.hpp"
#include "pirank/error.hpp"
#include "pirank/index.hpp"
#include "pirank/intent.hpp"

namespace pirank {

struct RankerConfig {
  std::map<std::string, double> generic_weights;  // component id -> w_c
  std::map<std::string, double> intent_weights;   // intent id -> w_t
  double theta = 0.05;
  std::size_t k_final = 10;

  void validate() const {
    auto check = [](const std::map<std::string, double>& m, const char* what) {
      for (const auto& [id, w] : m)
        if (!(std::isfinite(w) && w >= 0.0))
          throw ConfigError(std::string(what) + " weight for '" + id + "' must be finite and nonnegative");
    };
    check(generic_weights, "generic");
    check(intent_weights, "intent");
    if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("trigger threshold theta must be in [0,1]");
  }

  nlohmann::json to_json() const {
    return {{"generic_weights", generic_weights}, {"intent_weights", intent_weights}, {"theta", theta},
            {"k_final", k_final}};
  }

  static RankerConfig from_json(const nlohmann::json& j) {
    RankerConfig c;
    if (j.contains("generic_weights")) c.generic_weights = j["generic_weights"].get<std::map<std::string, double>>();
    if (j.contains("intent_weights")) c.intent_weights = j["intent_weights"].get<std::map<std::string, double>>();
    c.theta = j.value("theta", 0.05);
    c.k_final = j.value("k_final", std::size_t{10});
    c.validate();
    return c;
  }

  /// Stable hash of the canonical JSON form; identical configs always agree.
  std::string fingerprint() const { return hex64(fnv1a64(to_json().dump())); }

  bool operator==(const RankerConfig&) const = default;
};

/// Weights taken from component specs: generic components by id, intent
/// components by the intent they gate.
inline RankerConfig ranker_config_from_specs(const std::vector<ComponentSpec>& specs, double theta = 0.05,
                                             std::size_t k_final = 10) {
  RankerConfig c;
  c.theta = theta;
  c.k_final = k_final;
  for (const auto& s : specs) {
    if (s.scope.rfind("intent:", 0) == 0)
      c.intent_weights[s.scope.substr(7)] = s.weight;
    else
      c.generic_weights[s.component_id] = s.weight;
  }
  c.validate();
  return c;
}

/// Every weight in the config must name a registered component.
inline void check_config(const RankerConfig& config, const ComponentRegistry& registry) {
  config.validate();
  for (const auto& [id, _] : config.generic_weights) {
    const auto* s = registry.find(id);
    if (!s || s->scope() != Scope::generic) throw ConfigError("config weights unregistered generic component '" + id + "'");
  }
  for (const auto& [intent, _] : config.intent_weights)
    if (!registry.for_intent(intent)) throw ConfigError("config weights intent '" + intent + "' with no registered component");
}

struct GenericTerm {
  std::string component_id;
  double sigma = 0.0;
  double weight = 0.0;
  double contribution = 0.0;
};

struct IntentTerm {
  std::string intent_id;
  double probability = 0.0;
  std::string component_id;
  double sigma = 0.0;
  double weight = 0.0;
  double contribution = 0.0;
  /// P(t|q) fell below the trigger threshold (or was 0); sigma not evaluated.
  bool skipped = false;
};

struct ScoreTrace {
  std::string doc_id;
  double final_score = 0.0;
  double quality = 0.0;
  std::vector<GenericTerm> generic;
  std::vector<IntentTerm> intents;
  std::optional<std::string> filtered;

  double contribution_sum() const {
    double s = 0.0;
    for (const auto& g : generic) s += g.contribution;
    for (const auto& t : intents) s += t.contribution;
    return s;
  }
};

inline nlohmann::json to_json(const ScoreTrace& t) {
  nlohmann::json j{{"doc_id", t.doc_id}, {"final_score", t.final_score}, {"quality", t.quality}};
  if (t.filtered) {
    j["filtered"] = *t.filtered;
    return j;
  }
  auto& g = j["generic"] = nlohmann::json::array();
  for (const auto& x : t.generic)
    g.push_back({{"component_id", x.component_id}, {"sigma", x.sigma}, {"weight", x.weight}, {"contribution", x.contribution}});
  auto& in = j["intents"] = nlohmann::json::array();
  for (const auto& x : t.intents)
    in.push_back({{"intent_id", x.intent_id},
                  {"probability", x.probability},
                  {"component_id", x.component_id},
                  {"sigma", x.sigma},
                  {"weight", x.weight},
                  {"contribution", x.contribution},
                  {"skipped", x.skipped}});
  return j;
}

namespace detail {

inline double weight_of(const std::map<std::string, double>& m, const std::string& id) {
  auto it = m.find(id);
  return it == m.end() ? 0.0 : it->second;
}

inline std::vector<GenericTerm> generic_terms(const ScoringInput& in, const ComponentRegistry& reg,
                                              const RankerConfig& config) {
  std::vector<GenericTerm> terms;
  for (const auto* s : reg.generic()) {
    const double w = weight_of(config.generic_weights, s->id());
    const double sigma = s->score(in);
    terms.push_back({s->id(), sigma, w, w * sigma});
  }
  return terms;
}

}  // namespace detail

struct ScoreResult {
  double score = 0.0;
  ScoreTrace trace;
};

/// sum_c w_c * sigma_c + sum_t P(t|q) * w_t * sigma_t, where the intent sum
/// only covers intents with P(t|q) >= theta. The score is the sum of the
/// trace contributions in trace order.
inline ScoreResult score_eq7(const ScoringInput& in, const ComponentRegistry& reg, const RankerConfig& config) {
  ScoreResult r;
  r.trace.doc_id = in.doc.doc_id;
  r.trace.quality = document_quality(in.doc).score;
  r.trace.generic = detail::generic_terms(in, reg, config);
  for (const auto* s : reg.intent_specific()) {
    IntentTerm t;
    t.intent_id = s->intent();
    t.component_id = s->id();
    t.probability = in.analysis.distribution.prob(s->intent());
    t.weight = detail::weight_of(config.intent_weights, s->intent());
    if (t.probability > 0.0 && t.probability >= config.theta) {
      t.sigma = s->score(in);
      t.contribution = t.probability * t.weight * t.sigma;
    } else {
      t.skipped = true;
    }
    r.trace.intents.push_back(std::move(t));
  }
  r.score = r.trace.contribution_sum();
  r.trace.final_score = r.score;
  return r;
}

/// sum_t P(t|q) * (sum_c w_c * sigma_c + w_t * sigma_t), evaluated term by
/// term over every intent of the distribution. Ignores theta.
inline double score_eq6(const ScoringInput& in, const ComponentRegistry& reg, const RankerConfig& config) {
  double generic = 0.0;
  for (const auto& g : detail::generic_terms(in, reg, config)) generic += g.contribution;
  double total = 0.0;
  for (const auto& [intent, p] : in.analysis.distribution.probs) {
    double specific = 0.0;
    if (const auto* s = reg.for_intent(intent)) specific = detail::weight_of(config.intent_weights, intent) * s->score(in);
    total += p * (generic + specific);
  }
  return total;
}

struct RankedEntry {
  std::string doc_id;
  double score = 0.0;
  double quality = 0.0;
  bool operator==(const RankedEntry&) const = default;
};

struct RankedList {
  std::string query_text;
  std::string user_id;
  std::string fingerprint;
  IntentDistribution intents;
  /// Non-fallback intents whose probability reached the trigger threshold.
  std::set<std::string> triggered;
  std::vector<std::string> candidate_ids;
  /// Top k_final, ordered by score desc, quality desc, doc_id asc.
  std::vector<RankedEntry> entries;
  /// Every scored candidate in rank order, then filtered ones by doc_id.
  std::vector<ScoreTrace> traces;

  const ScoreTrace* trace(const std::string& doc_id) const {
    for (const auto& t : traces)
      if (t.doc_id == doc_id) return &t;
    return nullptr;
  }

  std::optional<std::size_t> rank_of(const std::string& doc_id) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].doc_id == doc_id) return i + 1;
    return std::nullopt;
  }
};

struct ScoringEnvironment {
  const Corpus& corpus;
  const ShardedIndex& index;
  Bm25Params bm25;
};

inline bool ranked_before(const ScoreTrace& a, const ScoreTrace& b) {
  if (a.final_score != b.final_score) return a.final_score > b.final_score;
  if (a.quality != b.quality) return a.quality > b.quality;
  return a.doc_id < b.doc_id;
}

/// Drops policy-rejected candidates, scores the rest with score_eq7 and
/// sorts them. Candidate scoring is independent, so `parallel` only changes
/// wall time.
inline RankedList rank(const QueryContext& ctx, const QueryAnalysis& analysis, const std::vector<Candidate>& candidates,
                       const ScoringEnvironment& env, const ComponentRegistry& reg, const RankerConfig& config,
                       bool parallel = false) {
  check_config(config, reg);
  RankedList out;
  out.query_text = ctx.query_text;
  out.user_id = ctx.user.user_id;
  out.fingerprint = config.fingerprint();
  out.intents = analysis.distribution;
  for (const auto& [id, p] : analysis.distribution.probs)
    if (id != kFallbackIntent && p > 0.0 && p >= config.theta) out.triggered.insert(id);

  std::vector<ScoreTrace> scored;
  std::vector<ScoreTrace> filtered;
  std::vector<const Document*> to_score;
  for (const auto& c : candidates) {
    out.candidate_ids.push_back(c.doc_id);
    const auto* doc = env.corpus.find_document(c.doc_id);
    ScoreTrace t;
    t.doc_id = c.doc_id;
    if (!doc) {
      t.filtered = "missing";
      filtered.push_back(std::move(t));
    } else if (doc->quality.policy_reject) {
      t.filtered = "policy";
      t.quality = document_quality(*doc).score;
      filtered.push_back(std::move(t));
    } else {
      to_score.push_back(doc);
    }
  }
  auto score_one = [&](const Document* doc) {
    const auto signals = compute_signals(ctx, *doc, env.index, env.corpus, env.bm25);
    return score_eq7(ScoringInput{ctx, analysis, *doc, signals, env.corpus}, reg, config).trace;
  };
  scored.resize(to_score.size());
  if (parallel && to_score.size() > 1) {
    std::vector<std::future<ScoreTrace>> futures;
    for (const auto* doc : to_score) futures.push_back(std::async(std::launch::async, score_one, doc));
    for (std::size_t i = 0; i < futures.size(); ++i) scored[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < to_score.size(); ++i) scored[i] = score_one(to_score[i]);
  }
  std::sort(scored.begin(), scored.end(), ranked_before);
  std::sort(filtered.begin(), filtered.end(), [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
  for (std::size_t i = 0; i < scored.size() && i < config.k_final; ++i)
    out.entries.push_back({scored[i].doc_id, scored[i].final_score, scored[i].quality});
  out.traces = std::move(scored);
  for (auto& f : filtered) out.traces.push_back(std::move(f));
  return out;
}

namespace detail {

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

/// Plain-text breakdown of one document's score.
inline std::string explain(const RankedList& ranked, const std::string& doc_id) {
  const auto* t = ranked.trace(doc_id);
  if (!t) {
    std::vector<std::pair<std::size_t, std::string>> near;
    for (const auto& x : ranked.traces) near.emplace_back(detail::edit_distance(doc_id, x.doc_id), x.doc_id);
    std::sort(near.begin(), near.end());
    std::string list;
    for (std::size_t i = 0; i < near.size() && i < 3; ++i) list += (i ? ", " : "") + near[i].second;
    throw NotFoundError("document '" + doc_id + "' was not scored for this query" +
                        (list.empty() ? std::string() : "; nearest ids: " + list));
  }
  std::string out;
  out += fmt::format("query: {}\nuser: {}\ndoc: {}\nconfig: {}\n", ranked.query_text, ranked.user_id, t->doc_id,
                     ranked.fingerprint);
  if (t->filtered) {
    out += fmt::format("status: filtered ({})\n", *t->filtered);
    return out;
  }
  if (auto r = ranked.rank_of(doc_id))
    out += fmt::format("status: ranked {} of {}\n", *r, ranked.entries.size());
  else
    out += fmt::format("status: scored, below the top {}\n", ranked.entries.size());
  out += fmt::format("{:<8} {:<16} {:<16} {:>10} {:>10} {:>10} {:>14}\n", "scope", "component", "intent", "P(t|q)",
                     "sigma", "weight", "contribution");
  for (const auto& g : t->generic)
    out += fmt::format("{:<8} {:<16} {:<16} {:>10} {:>10.6f} {:>10.6f} {:>14.9f}\n", "generic", g.component_id, "-", "-",
                       g.sigma, g.weight, g.contribution);
  for (const auto& i : t->intents) {
    if (i.skipped)
      out += fmt::format("{:<8} {:<16} {:<16} {:>10.6f} {:>10} {:>10.6f} {:>14} (below trigger threshold)\n", "intent",
                         i.component_id, i.intent_id, i.probability, "-", i.weight, "-");
    else
      out += fmt::format("{:<8} {:<16} {:<16} {:>10.6f} {:>10.6f} {:>10.6f} {:>14.9f}\n", "intent", i.component_id,
                         i.intent_id, i.probability, i.sigma, i.weight, i.contribution);
  }
  out += fmt::format("sum of contributions: {:.9f}\nfinal score:          {:.9f}\n", t->contribution_sum(), t->final_score);
  return out;
}

struct TriggerStats {
  std::size_t queries = 0;
  std::map<std::string, std::size_t> counts;
  std::map<std::string, double> rates;
  /// rate - baseline rate, for every intent seen in either.
  std::map<std::string, double> deltas;
  std::set<std::string> alerts;
};

/// Per-intent trigger rates over a batch, compared against a baseline
/// snapshot. An alert fires when |rate - baseline| exceeds `band`.
inline TriggerStats trigger_stats(const std::vector<RankedList>& batch,
                                  const std::map<std::string, double>& baseline = {}, double band = 0.05) {
  TriggerStats s;
  s.queries = batch.size();
  for (const auto& r : batch)
    for (const auto& id : r.triggered) ++s.counts[id];
  for (const auto& [id, n] : s.counts) s.rates[id] = static_cast<double>(n) / static_cast<double>(s.queries);
  std::set<std::string> ids;
  for (const auto& [id, _] : s.rates) ids.insert(id);
  for (const auto& [id, _] : baseline) ids.insert(id);
  for (const auto& id : ids) {
    const double rate = s.rates.count(id) ? s.rates.at(id) : 0.0;
    const double base = baseline.count(id) ? baseline.at(id) : 0.0;
    s.deltas[id] = rate - base;
    if (!baseline.empty() && std::abs(rate - base) > band) s.alerts.insert(id);
  }
  return s;
}

}  // namespace pirank
