#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pirank/context.hpp"
#include "pirank/corpus.hpp"
#include "pirank/error.hpp"
#include "pirank/index.hpp"
#include "pirank/intent.hpp"

namespace pirank {

/// Per-(query, doc) features computed once per candidate and shared by all
/// scorers.
struct SharedSignals {
  double bm25 = 0.0;
  double proximity = 0.0;
  double title_hit_ratio = 0.0;
  RelationSet relations;
  std::optional<double> distance_km;
  double language_overlap = 0.5;
  /// Historical engagement of this (query, doc) pair from the query log.
  EngagementCounters query_doc;
};

inline double squash(double s) { return s > 0.0 ? s / (s + 1.0) : 0.0; }

inline double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  constexpr double kEarthRadiusKm = 6371.0088;
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  const double dlat = (b.lat - a.lat) * kDeg;
  const double dlon = (b.lon - a.lon) * kDeg;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * kDeg) * std::cos(b.lat * kDeg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

/// Coverage-weighted minimal window: with m of the |q| distinct query terms
/// present and w the shortest span containing all m of them,
/// (m / |q|) / (1 + w - m). A query fully present as an adjacent run scores 1.
inline double proximity_score(const std::vector<std::vector<std::uint32_t>>& positions, std::size_t query_terms) {
  if (query_terms == 0) return 0.0;
  std::vector<std::pair<std::uint32_t, std::size_t>> merged;
  std::size_t present = 0;
  for (std::size_t t = 0; t < positions.size(); ++t) {
    if (positions[t].empty()) continue;
    for (auto p : positions[t]) merged.emplace_back(p, present);
    ++present;
  }
  if (present == 0) return 0.0;
  std::sort(merged.begin(), merged.end());
  std::vector<std::size_t> count(present, 0);
  std::size_t covered = 0;
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (std::size_t lo = 0, hi = 0; hi < merged.size(); ++hi) {
    if (count[merged[hi].second]++ == 0) ++covered;
    while (covered == present) {
      best = std::min<std::size_t>(best, merged[hi].first - merged[lo].first + 1);
      if (--count[merged[lo].second] == 0) --covered;
      ++lo;
    }
  }
  const double m = static_cast<double>(present);
  return (m / static_cast<double>(query_terms)) / (1.0 + static_cast<double>(best) - m);
}

inline double language_match(const std::vector<std::string>& user_languages,
                             const std::map<std::string, double>& doc_languages) {
  if (doc_languages.empty() || user_languages.empty()) return 0.5;
  double best = 0.0;
  for (const auto& code : user_languages) {
    auto it = doc_languages.find(code);
    if (it != doc_languages.end()) best = std::max(best, it->second);
  }
  return best;
}

inline SharedSignals compute_signals(const QueryContext& ctx, const Document& doc, const ShardedIndex& index,
                                     const Corpus& corpus, const Bm25Params& bm25 = {}) {
  SharedSignals s;
  const auto terms = index.query_terms(ctx.query_text);
  s.bm25 = index.score(terms, doc.doc_id, bm25);
  std::vector<std::vector<std::uint32_t>> positions;
  std::size_t in_title = 0;
  for (const auto& t : terms) {
    const auto* p = index.posting(t, doc.doc_id);
    positions.push_back(p ? p->positions : std::vector<std::uint32_t>{});
    if (p && (p->fields & kInTitle)) ++in_title;
  }
  s.proximity = proximity_score(positions, terms.size());
  s.title_hit_ratio = terms.empty() ? 0.0 : static_cast<double>(in_title) / static_cast<double>(terms.size());
  s.relations = social_relations(corpus.graph(), ctx.user.user_id, doc);
  if (ctx.user.location && doc.location) s.distance_km = haversine_km(*ctx.user.location, *doc.location);
  s.language_overlap = language_match(ctx.user.languages, doc.languages);
  s.query_doc = corpus.query_doc_engagement(ctx.key(), doc.doc_id);
  return s;
}

// ---------------------------------------------------------------------------
// Generic components

struct TextMix {
  double bm25 = 0.5;
  double proximity = 0.25;
  double title = 0.25;
};

inline double text_relevance(const SharedSignals& s, const TextMix& mix = {}) {
  const double v = mix.bm25 * squash(s.bm25) + mix.proximity * s.proximity + mix.title * s.title_hit_ratio;
  return std::clamp(v, 0.0, 1.0);
}

struct RelationWeights {
  std::map<Relation, double> weights = {
      {Relation::self, 1.0},           {Relation::friend_of, 0.8},   {Relation::self_engaged, 0.7},
      {Relation::friend_engaged, 0.5}, {Relation::followee, 0.5},    {Relation::friend_of_friend, 0.4},
      {Relation::follower, 0.3},       {Relation::pending_friend, 0.3}, {Relation::pending_joining, 0.3}};
};

inline double social_relevance(const RelationSet& rel, const RelationWeights& w = {}) {
  double best = 0.0;
  for (auto r : rel.members()) {
    auto it = w.weights.find(r);
    if (it != w.weights.end()) best = std::max(best, it->second);
  }
  return std::clamp(best, 0.0, 1.0);
}

inline double location_relevance(const std::optional<GeoPoint>& user, const std::optional<GeoPoint>& doc,
                                 double tau_km = 50.0) {
  if (!user || !doc) return 0.0;
  return std::exp(-haversine_km(*user, *doc) / tau_km);
}

struct QualityScore {
  double score = 0.0;
  bool policy_reject = false;
};

inline QualityScore document_quality(const Document& doc) {
  const auto& q = doc.quality;
  double sum = q.kids_friendly + q.authentic + q.authoritative + q.readability;
  double n = 4.0;
  if (q.video_resolution) {
    sum += *q.video_resolution;
    n += 1.0;
  }
  return {sum / n, q.policy_reject};
}

// ---------------------------------------------------------------------------
// Engagement model

inline double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct EngagementModel {
  std::vector<std::string> features;
  std::vector<double> weights;
  double bias = 0.0;

  double predict(const std::vector<double>& x) const {
    double z = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) z += weights[i] * x[i];
    return logistic(z);
  }

  void validate() const {
    if (features.size() != weights.size())
      throw ConfigError("engagement model has " + std::to_string(features.size()) + " features but " +
                        std::to_string(weights.size()) + " weights");
  }

  bool operator==(const EngagementModel&) const = default;
};

inline nlohmann::json to_json(const EngagementModel& m) {
  return {{"features", m.features}, {"weights", m.weights}, {"bias", m.bias}};
}

inline EngagementModel engagement_model_from_json(const nlohmann::json& j) {
  EngagementModel m{j.at("features").get<std::vector<std::string>>(), j.at("weights").get<std::vector<double>>(),
                    j.value("bias", 0.0)};
  m.validate();
  return m;
}

/// Names understood by engagement_features(). `intent:<id>` is a one-hot of
/// the most probable intent (ties go to the smallest id).
inline const std::set<std::string>& engagement_feature_names() {
  static const std::set<std::string> names = {"bm25",    "proximity", "title_hit", "ctr_qd",   "gcr_qd",  "doc_ctr",
                                              "doc_gcr", "social",    "language",  "location", "quality", "bias1"};
  return names;
}

/// Feature vector in model order. Unknown names produce 0 and are counted in
/// `missing`.
inline std::vector<double> engagement_features(const std::vector<std::string>& names, const SharedSignals& s,
                                               const Document& doc, const IntentDistribution& intents,
                                               std::size_t* missing = nullptr) {
  std::string top_intent;
  double top_p = -1.0;
  for (const auto& [id, p] : intents.probs)
    if (p > top_p) {
      top_p = p;
      top_intent = id;
    }
  auto rate = [](std::uint64_t num, std::uint64_t den) {
    return static_cast<double>(num) / (static_cast<double>(den) + 1.0);
  };
  std::vector<double> x;
  x.reserve(names.size());
  for (const auto& n : names) {
    double v = 0.0;
    if (n == "bm25") v = squash(s.bm25);
    else if (n == "proximity") v = s.proximity;
    else if (n == "title_hit") v = s.title_hit_ratio;
    else if (n == "ctr_qd") v = rate(s.query_doc.clicks, s.query_doc.impressions);
    else if (n == "gcr_qd") v = rate(s.query_doc.good_clicks, s.query_doc.impressions);
    else if (n == "doc_ctr") v = rate(doc.engagement.clicks, doc.engagement.impressions);
    else if (n == "doc_gcr") v = rate(doc.engagement.good_clicks, doc.engagement.impressions);
    else if (n == "social") v = social_relevance(s.relations);
    else if (n == "language") v = s.language_overlap;
    else if (n == "location") v = s.distance_km ? std::exp(-*s.distance_km / 50.0) : 0.0;
    else if (n == "quality") v = document_quality(doc).score;
    else if (n == "bias1") v = 1.0;
    else if (n.rfind("intent:", 0) == 0) v = n.substr(7) == top_intent ? 1.0 : 0.0;
    else if (missing) ++*missing;
    x.push_back(v);
  }
  return x;
}

inline double engagement_score(const EngagementModel& model, const std::vector<double>& features) {
  return std::clamp(model.predict(features), 0.0, 1.0);
}

struct EngagementDataset {
  std::vector<std::string> features;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
};

struct TrainParams {
  std::size_t iterations = 300;
  double learning_rate = 0.5;
  double l2 = 0.0;
  /// 0 trains on the full batch each step.
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
};

struct TrainReport {
  EngagementModel model;
  double loss = 0.0;
  double auc = 0.0;
  std::size_t iterations = 0;
};

/// Mean log-loss over `rows` (all rows when empty) plus (l2/2)*|w|^2.
inline double log_loss(const EngagementModel& m, const EngagementDataset& d, double l2 = 0.0,
                       const std::vector<std::size_t>& rows = {}) {
  auto each = [&](auto&& fn) {
    if (rows.empty())
      for (std::size_t i = 0; i < d.rows.size(); ++i) fn(i);
    else
      for (auto i : rows) fn(i);
  };
  double loss = 0.0;
  std::size_t n = 0;
  each([&](std::size_t i) {
    double z = m.bias;
    for (std::size_t k = 0; k < m.weights.size(); ++k) z += m.weights[k] * d.rows[i][k];
    // log(1 + e^z) - y z, computed stably
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    loss += softplus - d.labels[i] * z;
    ++n;
  });
  double reg = 0.0;
  for (double w : m.weights) reg += w * w;
  return (n ? loss / static_cast<double>(n) : 0.0) + 0.5 * l2 * reg;
}

struct Gradient {
  std::vector<double> weights;
  double bias = 0.0;
};

inline Gradient log_loss_gradient(const EngagementModel& m, const EngagementDataset& d, double l2 = 0.0,
                                  const std::vector<std::size_t>& rows = {}) {
  Gradient g{std::vector<double>(m.weights.size(), 0.0), 0.0};
  std::size_t n = 0;
  auto add = [&](std::size_t i) {
    const double err = m.predict(d.rows[i]) - d.labels[i];
    for (std::size_t k = 0; k < g.weights.size(); ++k) g.weights[k] += err * d.rows[i][k];
    g.bias += err;
    ++n;
  };
  if (rows.empty())
    for (std::size_t i = 0; i < d.rows.size(); ++i) add(i);
  else
    for (auto i : rows) add(i);
  const double inv = n ? 1.0 / static_cast<double>(n) : 0.0;
  for (std::size_t k = 0; k < g.weights.size(); ++k) g.weights[k] = g.weights[k] * inv + l2 * m.weights[k];
  g.bias *= inv;
  return g;
}

/// Area under the ROC curve via the rank-sum statistic, averaging tied ranks.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) {
        pos_rank_sum += avg_rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) return 0.5;
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

/// Gradient descent on log-loss. Mini-batches are drawn from a seeded
/// shuffle, so the result is a pure function of (data, initial, params).
inline TrainReport train_engagement(const EngagementDataset& data, const TrainParams& params,
                                    std::optional<EngagementModel> initial = std::nullopt) {
  if (data.rows.empty()) throw DataError("engagement training set is empty");
  if (data.rows.size() != data.labels.size()) throw DataError("engagement rows and labels differ in length");
  const auto positives = static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), 1));
  if (positives == 0 || positives == data.labels.size())
    throw DataError("engagement log has a single label class; add " +
                    std::string(positives == 0 ? "good-clicked (positive)" : "shown-but-not-good-clicked (negative)") +
                    " examples");
  EngagementModel model = initial ? *initial : EngagementModel{data.features, std::vector<double>(data.features.size(), 0.0), 0.0};
  model.validate();
  if (model.features != data.features) throw ConfigError("initial model features differ from the dataset's");

  std::mt19937_64 rng(params.seed);
  std::vector<std::size_t> order(data.rows.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = params.batch_size == 0 ? order.size() : std::min(params.batch_size, order.size());
  std::size_t cursor = order.size();
  std::vector<std::size_t> rows;
  for (std::size_t it = 0; it < params.iterations; ++it) {
    rows.clear();
    if (batch < order.size()) {
      for (std::size_t k = 0; k < batch; ++k) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        rows.push_back(order[cursor++]);
      }
    }
    const auto g = log_loss_gradient(model, data, params.l2, rows);
    for (std::size_t k = 0; k < model.weights.size(); ++k) model.weights[k] -= params.learning_rate * g.weights[k];
    model.bias -= params.learning_rate * g.bias;
  }
  TrainReport report;
  report.model = model;
  report.iterations = params.iterations;
  report.loss = log_loss(model, data, params.l2);
  std::vector<double> scores;
  scores.reserve(data.rows.size());
  for (const auto& r : data.rows) scores.push_back(model.predict(r));
  report.auc = auc(scores, data.labels);
  return report;
}

// ---------------------------------------------------------------------------
// Intent-specific components

/// 1.0 for the friend's profile, 0.8 for documents the friend authored, 0.6
/// for documents the friend engaged with or that tag the friend.
inline double friend_intent_score(const Document& doc, const std::string& friend_id, const SocialGraph& graph) {
  if (friend_id.empty()) return 0.0;
  const bool authored = doc.author_id && *doc.author_id == friend_id;
  if (authored && doc.doc_type == DocType::user) return 1.0;
  if (authored) return 0.8;
  if (graph.has_edge(friend_id, doc.doc_id, EdgeLabel::engaged) || doc.entity_ids.count(friend_id)) return 0.6;
  return 0.0;
}

inline double grammar_intent_score(const UserContext& user, const Document& doc, const GrammarSpec& g) {
  if (doc.doc_type != g.target_type) return 0.0;
  if (!g.self_seen) return 1.0;
  auto it = user.engaged.find(doc.doc_id);
  if (it == user.engaged.end()) return 0.0;
  return (it->second >= g.window_begin && it->second < g.window_end) ? 1.0 : 0.0;
}

enum class PublisherMode { binary, good_click_weighted };

inline double video_publisher_score(const Document& doc, const std::string& publisher_id, PublisherMode mode) {
  if (publisher_id.empty() || !doc.publisher_id || *doc.publisher_id != publisher_id) return 0.0;
  if (mode == PublisherMode::binary) return 1.0;
  const double ratio =
      static_cast<double>(doc.engagement.good_clicks) / (static_cast<double>(doc.engagement.clicks) + 1.0);
  return std::clamp(ratio, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Scorer interface and registry

enum class Scope { generic, intent_specific };

struct ScoringInput {
  const QueryContext& ctx;
  const QueryAnalysis& analysis;
  const Document& doc;
  const SharedSignals& signals;
  const Corpus& corpus;
};

/// A ranking component: a pure function of its input into [0,1].
class Scorer {
 public:
  Scorer(std::string id, Scope scope, std::string intent = {})
      : id_(std::move(id)), scope_(scope), intent_(std::move(intent)) {}
  virtual ~Scorer() = default;

  const std::string& id() const { return id_; }
  Scope scope() const { return scope_; }
  /// Intent gated by this component (empty for generic components).
  const std::string& intent() const { return intent_; }
  virtual std::string kind() const = 0;

  double score(const ScoringInput& in) const {
    const double v = compute(in);
    return std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
  }

 protected:
  virtual double compute(const ScoringInput& in) const = 0;

 private:
  std::string id_;
  Scope scope_;
  std::string intent_;
};

namespace scorers {

class Text : public Scorer {
 public:
  Text(std::string id, TextMix mix) : Scorer(std::move(id), Scope::generic), mix_(mix) {}
  std::string kind() const override { return "text_relevance"; }

 protected:
  double compute(const ScoringInput& in) const override { return text_relevance(in.signals, mix_); }

 private:
  TextMix mix_;
};

class Social : public Scorer {
 public:
  Social(std::string id, RelationWeights w) : Scorer(std::move(id), Scope::generic), w_(std::move(w)) {}
  std::string kind() const override { return "social_relevance"; }

 protected:
  double compute(const ScoringInput& in) const override { return social_relevance(in.signals.relations, w_); }

 private:
  RelationWeights w_;
};

class Location : public Scorer {
 public:
  Location(std::string id, double tau_km) : Scorer(std::move(id), Scope::generic), tau_(tau_km) {}
  std::string kind() const override { return "location_relevance"; }

 protected:
  double compute(const ScoringInput& in) const override {
    return location_relevance(in.ctx.user.location, in.doc.location, tau_);
  }

 private:
  double tau_;
};

class Language : public Scorer {
 public:
  explicit Language(std::string id) : Scorer(std::move(id), Scope::generic) {}
  std::string kind() const override { return "language_match"; }

 protected:
  double compute(const ScoringInput& in) const override { return in.signals.language_overlap; }
};

class Quality : public Scorer {
 public:
  explicit Quality(std::string id) : Scorer(std::move(id), Scope::generic) {}
  std::string kind() const override { return "document_quality"; }

 protected:
  double compute(const ScoringInput& in) const override { return document_quality(in.doc).score; }
};

class Engagement : public Scorer {
 public:
  Engagement(std::string id, EngagementModel model) : Scorer(std::move(id), Scope::generic), model_(std::move(model)) {
    model_.validate();
  }
  std::string kind() const override { return "engagement"; }
  const EngagementModel& model() const { return model_; }

 protected:
  double compute(const ScoringInput& in) const override {
    return engagement_score(model_,
                            engagement_features(model_.features, in.signals, in.doc, in.analysis.distribution));
  }

 private:
  EngagementModel model_;
};

/// Reads a precomputed external model score from the document.
class Passthrough : public Scorer {
 public:
  Passthrough(std::string id, std::string key) : Scorer(std::move(id), Scope::generic), key_(std::move(key)) {}
  std::string kind() const override { return "passthrough"; }

 protected:
  double compute(const ScoringInput& in) const override {
    auto it = in.doc.external_scores.find(key_);
    return it == in.doc.external_scores.end() ? 0.0 : it->second;
  }

 private:
  std::string key_;
};

class Friend : public Scorer {
 public:
  Friend(std::string id, std::string intent) : Scorer(std::move(id), Scope::intent_specific, std::move(intent)) {}
  std::string kind() const override { return "friend"; }

 protected:
  double compute(const ScoringInput& in) const override {
    auto it = in.analysis.targets.find(intent());
    if (it == in.analysis.targets.end()) return 0.0;
    return friend_intent_score(in.doc, it->second, in.corpus.graph());
  }
};

class Grammar : public Scorer {
 public:
  Grammar(std::string id, std::string intent) : Scorer(std::move(id), Scope::intent_specific, std::move(intent)) {}
  std::string kind() const override { return "special_grammar"; }

 protected:
  double compute(const ScoringInput& in) const override {
    if (!in.analysis.grammar) return 0.0;
    return grammar_intent_score(in.ctx.user, in.doc, *in.analysis.grammar);
  }
};

class VideoPublisher : public Scorer {
 public:
  VideoPublisher(std::string id, std::string intent, PublisherMode mode)
      : Scorer(std::move(id), Scope::intent_specific, std::move(intent)), mode_(mode) {}
  std::string kind() const override { return "video_publisher"; }
  PublisherMode mode() const { return mode_; }

 protected:
  double compute(const ScoringInput& in) const override {
    auto it = in.analysis.targets.find(intent());
    if (it == in.analysis.targets.end()) return 0.0;
    return video_publisher_score(in.doc, it->second, mode_);
  }

 private:
  PublisherMode mode_;
};

}  // namespace scorers

/// One entry of a component configuration file.
struct ComponentSpec {
  std::string component_id;
  std::string kind;
  /// "generic" or "intent:<intent id>".
  std::string scope = "generic";
  nlohmann::json params = nlohmann::json::object();
  double weight = 1.0;
};

inline ComponentSpec component_spec_from_json(const nlohmann::json& j) {
  ComponentSpec s;
  s.component_id = j.at("component_id").get<std::string>();
  s.kind = j.at("kind").get<std::string>();
  s.scope = j.value("scope", std::string("generic"));
  if (j.contains("params")) s.params = j["params"];
  s.weight = j.value("weight", 1.0);
  return s;
}

inline nlohmann::json to_json(const ComponentSpec& s) {
  return {{"component_id", s.component_id}, {"kind", s.kind}, {"scope", s.scope}, {"params", s.params},
          {"weight", s.weight}};
}

inline const std::vector<std::string>& generic_kinds() {
  static const std::vector<std::string> k = {"text_relevance", "engagement",       "social_relevance", "location_relevance",
                                             "language_match", "document_quality", "passthrough"};
  return k;
}

inline const std::vector<std::string>& intent_kinds() {
  static const std::vector<std::string> k = {"friend", "special_grammar", "video_publisher"};
  return k;
}

/// Prior used when no trained engagement model is configured.
inline EngagementModel default_engagement_model() {
  return {{"doc_gcr", "gcr_qd", "social", "bias1"}, {3.0, 3.0, 1.0, 0.0}, -2.0};
}

class ComponentRegistry {
 public:
  void add(std::unique_ptr<Scorer> s) {
    if (by_id_.count(s->id())) throw ConfigError("duplicate component id '" + s->id() + "'");
    if (s->scope() == Scope::intent_specific) {
      if (by_intent_.count(s->intent()))
        throw ConfigError("intent '" + s->intent() + "' already has component '" + by_intent_.at(s->intent()) + "'");
      by_intent_.emplace(s->intent(), s->id());
    }
    by_id_.emplace(s->id(), scorers_.size());
    scorers_.push_back(std::move(s));
  }

  const Scorer* find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : scorers_[it->second].get();
  }

  const Scorer* for_intent(const std::string& intent) const {
    auto it = by_intent_.find(intent);
    return it == by_intent_.end() ? nullptr : find(it->second);
  }

  /// Generic components in registration order.
  std::vector<const Scorer*> generic() const {
    std::vector<const Scorer*> out;
    for (const auto& s : scorers_)
      if (s->scope() == Scope::generic) out.push_back(s.get());
    return out;
  }

  /// Intent-specific components ordered by intent id.
  std::vector<const Scorer*> intent_specific() const {
    std::vector<const Scorer*> out;
    for (const auto& [_, id] : by_intent_) out.push_back(find(id));
    return out;
  }

  std::size_t size() const { return scorers_.size(); }

 private:
  std::vector<std::unique_ptr<Scorer>> scorers_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::string> by_intent_;
};

namespace detail {

inline std::string list_kinds() {
  std::string out;
  for (const auto& k : generic_kinds()) out += (out.empty() ? "" : ", ") + k;
  for (const auto& k : intent_kinds()) out += ", " + k;
  return out;
}

}  // namespace detail

/// Instantiates every spec. `engagement_model` backs `engagement` components
/// that carry no inline model.
inline ComponentRegistry build_registry(const std::vector<ComponentSpec>& specs, const IntentSpace& space,
                                        const std::optional<EngagementModel>& engagement_model = std::nullopt) {
  ComponentRegistry reg;
  for (const auto& s : specs) {
    if (s.component_id.empty()) throw ConfigError("component_id is empty");
    if (!(std::isfinite(s.weight) && s.weight >= 0.0))
      throw ConfigError("component '" + s.component_id + "' has a negative or non-finite weight");
    const bool is_generic = std::find(generic_kinds().begin(), generic_kinds().end(), s.kind) != generic_kinds().end();
    const bool is_intent = std::find(intent_kinds().begin(), intent_kinds().end(), s.kind) != intent_kinds().end();
    if (!is_generic && !is_intent)
      throw ConfigError("unknown component kind '" + s.kind + "'; valid kinds: " + detail::list_kinds());
    const auto& p = s.params;
    if (is_generic) {
      if (s.scope != "generic")
        throw ConfigError("component '" + s.component_id + "' of kind " + s.kind + " must have scope 'generic'");
      if (s.kind == "text_relevance") {
        TextMix mix{p.value("bm25", 0.5), p.value("proximity", 0.25), p.value("title", 0.25)};
        if (mix.bm25 < 0 || mix.proximity < 0 || mix.title < 0 ||
            std::abs(mix.bm25 + mix.proximity + mix.title - 1.0) > 1e-9)
          throw ConfigError("text_relevance mix weights must be nonnegative and sum to 1");
        reg.add(std::make_unique<scorers::Text>(s.component_id, mix));
      } else if (s.kind == "social_relevance") {
        RelationWeights w;
        if (p.contains("weights"))
          for (const auto& [name, v] : p["weights"].items()) {
            auto r = parse_relation(name);
            if (!r) throw ConfigError("unknown relation '" + name + "' in component '" + s.component_id + "'");
            w.weights[*r] = v.get<double>();
          }
        reg.add(std::make_unique<scorers::Social>(s.component_id, std::move(w)));
      } else if (s.kind == "location_relevance") {
        const double tau = p.value("tau_km", 50.0);
        if (!(tau > 0)) throw ConfigError("location_relevance tau_km must be > 0");
        reg.add(std::make_unique<scorers::Location>(s.component_id, tau));
      } else if (s.kind == "language_match") {
        reg.add(std::make_unique<scorers::Language>(s.component_id));
      } else if (s.kind == "document_quality") {
        reg.add(std::make_unique<scorers::Quality>(s.component_id));
      } else if (s.kind == "engagement") {
        EngagementModel m = p.contains("model")         ? engagement_model_from_json(p["model"])
                            : engagement_model.has_value() ? *engagement_model
                                                           : default_engagement_model();
        reg.add(std::make_unique<scorers::Engagement>(s.component_id, std::move(m)));
      } else {
        reg.add(std::make_unique<scorers::Passthrough>(s.component_id, p.value("key", s.component_id)));
      }
      continue;
    }
    if (s.scope.rfind("intent:", 0) != 0)
      throw ConfigError("component '" + s.component_id + "' of kind " + s.kind + " needs scope 'intent:<id>'");
    const std::string intent = s.scope.substr(7);
    if (intent == space.fallback || !space.contains(intent))
      throw ConfigError("component '" + s.component_id + "' gates unknown intent '" + intent + "'");
    if (s.kind == "friend") {
      reg.add(std::make_unique<scorers::Friend>(s.component_id, intent));
    } else if (s.kind == "special_grammar") {
      reg.add(std::make_unique<scorers::Grammar>(s.component_id, intent));
    } else {
      const auto mode = p.value("mode", std::string("binary"));
      if (mode != "binary" && mode != "good_click_weighted")
        throw ConfigError("video_publisher mode must be binary or good_click_weighted");
      reg.add(std::make_unique<scorers::VideoPublisher>(
          s.component_id, intent, mode == "binary" ? PublisherMode::binary : PublisherMode::good_click_weighted));
    }
  }
  return reg;
}

inline std::vector<std::string> default_intents() {
  return {"friend", "video_publisher", "special_grammar", "movie", "news", "sports", "music"};
}

/// Six generic components and the friend, special grammar and video
/// publisher components.
inline std::vector<ComponentSpec> default_component_specs() {
  return {
      {"text", "text_relevance", "generic", nlohmann::json::object(), 2.0},
      {"engagement", "engagement", "generic", nlohmann::json::object(), 0.5},
      {"social", "social_relevance", "generic", nlohmann::json::object(), 1.0},
      {"location", "location_relevance", "generic", nlohmann::json::object(), 0.3},
      {"language", "language_match", "generic", nlohmann::json::object(), 0.8},
      {"quality", "document_quality", "generic", nlohmann::json::object(), 0.5},
      {"friend", "friend", "intent:friend", nlohmann::json::object(), 3.0},
      {"grammar", "special_grammar", "intent:special_grammar", nlohmann::json::object(), 3.0},
      {"publisher", "video_publisher", "intent:video_publisher", nlohmann::json{{"mode", "binary"}}, 2.0},
  };
}

}  // namespace pirank
