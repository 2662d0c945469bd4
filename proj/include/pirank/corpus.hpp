#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pirank/error.hpp"
#include "pirank/text.hpp"

namespace pirank {

using json = nlohmann::json;

enum class DocType { user, page, group, post, video, photo, event };

inline constexpr std::array<std::string_view, 7> kDocTypeNames = {
    "user", "page", "group", "post", "video", "photo", "event"};

inline std::string_view to_string(DocType t) { return kDocTypeNames[static_cast<std::size_t>(t)]; }

inline std::optional<DocType> parse_doc_type(std::string_view s) {
  for (std::size_t i = 0; i < kDocTypeNames.size(); ++i)
    if (kDocTypeNames[i] == s) return static_cast<DocType>(i);
  return std::nullopt;
}

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
  bool operator==(const GeoPoint&) const = default;
};

struct QualitySignals {
  double kids_friendly = 1.0;
  double authentic = 1.0;
  double authoritative = 1.0;
  double readability = 1.0;
  std::optional<double> video_resolution;
  bool policy_reject = false;
  bool operator==(const QualitySignals&) const = default;
};

struct EngagementCounters {
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
  std::uint64_t good_clicks = 0;
  bool operator==(const EngagementCounters&) const = default;
};

/// A searchable social object. For `user` documents `author_id` is the
/// profile owner; for videos `publisher_id` names the publishing page.
struct Document {
  std::string doc_id;
  DocType doc_type = DocType::post;
  std::optional<std::string> author_id;
  std::optional<std::string> publisher_id;
  std::string title;
  std::string body;
  std::map<std::string, double> languages;
  std::optional<GeoPoint> location;
  std::int64_t created_ts = 0;
  std::set<std::string> entity_ids;
  QualitySignals quality;
  EngagementCounters engagement;
  /// Scores produced by external models, read by passthrough components.
  std::map<std::string, double> external_scores;
  bool operator==(const Document&) const = default;
};

struct UserContext {
  std::string user_id;
  std::vector<std::string> languages;
  std::optional<GeoPoint> location;
  /// doc_id -> unix seconds of the searcher's engagement.
  std::map<std::string, std::int64_t> engaged;
  bool operator==(const UserContext&) const = default;
};

enum class EdgeLabel { friend_of, follow, pending_friend, pending_join, member, engaged };

inline constexpr std::array<std::string_view, 6> kEdgeLabelNames = {
    "friend", "follow", "pending_friend", "pending_join", "member", "engaged"};

inline std::string_view to_string(EdgeLabel l) { return kEdgeLabelNames[static_cast<std::size_t>(l)]; }

inline std::optional<EdgeLabel> parse_edge_label(std::string_view s) {
  for (std::size_t i = 0; i < kEdgeLabelNames.size(); ++i)
    if (kEdgeLabelNames[i] == s) return static_cast<EdgeLabel>(i);
  return std::nullopt;
}

struct Edge {
  std::string src;
  std::string dst;
  EdgeLabel label = EdgeLabel::friend_of;
  auto operator<=>(const Edge&) const = default;
};

/// Labeled directed graph over users, pages, groups and documents. Friend
/// edges are stored in both directions.
class SocialGraph {
 public:
  void add_node(const std::string& id) { nodes_.insert(id); }

  void add_edge(const std::string& src, const std::string& dst, EdgeLabel label) {
    if (src.empty() || dst.empty()) throw DataError("edge endpoint is empty");
    if (src == dst && (label == EdgeLabel::friend_of || label == EdgeLabel::pending_friend ||
                       label == EdgeLabel::pending_join))
      throw DataError("self-loop on " + std::string(to_string(label)) + " edge for '" + src + "'");
    insert(src, dst, label);
    if (label == EdgeLabel::friend_of) insert(dst, src, label);
  }

  bool has_node(const std::string& id) const { return nodes_.count(id) > 0; }

  bool has_edge(const std::string& src, const std::string& dst, EdgeLabel label) const {
    auto it = out_.find(src);
    if (it == out_.end()) return false;
    const auto& targets = it->second[static_cast<std::size_t>(label)];
    return targets.count(dst) > 0;
  }

  const std::set<std::string>& neighbors(const std::string& src, EdgeLabel label) const {
    static const std::set<std::string> empty;
    auto it = out_.find(src);
    if (it == out_.end()) return empty;
    return it->second[static_cast<std::size_t>(label)];
  }

  /// All edges in a canonical order (friend edges appear in both directions).
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (const auto& [src, by_label] : out_)
      for (std::size_t l = 0; l < by_label.size(); ++l)
        for (const auto& dst : by_label[l]) out.push_back({src, dst, static_cast<EdgeLabel>(l)});
    std::sort(out.begin(), out.end());
    return out;
  }

  const std::set<std::string>& nodes() const { return nodes_; }

  bool operator==(const SocialGraph& o) const { return nodes_ == o.nodes_ && edges() == o.edges(); }

 private:
  void insert(const std::string& src, const std::string& dst, EdgeLabel label) {
    nodes_.insert(src);
    nodes_.insert(dst);
    out_[src][static_cast<std::size_t>(label)].insert(dst);
  }

  std::set<std::string> nodes_;
  std::unordered_map<std::string, std::array<std::set<std::string>, kEdgeLabelNames.size()>> out_;
};

enum class Relation {
  self,
  friend_of,
  friend_of_friend,
  self_engaged,
  friend_engaged,
  followee,
  follower,
  pending_friend,
  pending_joining
};

inline constexpr std::array<std::string_view, 9> kRelationNames = {
    "self",     "friend",   "friend_of_friend", "self_engaged",   "friend_engaged",
    "followee", "follower", "pending_friend",   "pending_joining"};

inline std::string_view to_string(Relation r) { return kRelationNames[static_cast<std::size_t>(r)]; }

inline std::optional<Relation> parse_relation(std::string_view s) {
  for (std::size_t i = 0; i < kRelationNames.size(); ++i)
    if (kRelationNames[i] == s) return static_cast<Relation>(i);
  return std::nullopt;
}

struct RelationSet {
  std::uint16_t bits = 0;
  /// Set when the searcher is not a node of the graph; `bits` is then empty.
  bool unknown_searcher = false;

  void insert(Relation r) { bits |= static_cast<std::uint16_t>(1u << static_cast<unsigned>(r)); }
  bool contains(Relation r) const { return (bits >> static_cast<unsigned>(r)) & 1u; }
  bool empty() const { return bits == 0; }

  std::vector<Relation> members() const {
    std::vector<Relation> out;
    for (std::size_t i = 0; i < kRelationNames.size(); ++i)
      if ((bits >> i) & 1u) out.push_back(static_cast<Relation>(i));
    return out;
  }
  bool operator==(const RelationSet&) const = default;
};

/// Relations between the searcher and a candidate document. friend_of_friend
/// uses paths of exactly two friend edges and is dropped when a direct
/// friendship holds.
inline RelationSet social_relations(const SocialGraph& graph, const std::string& searcher,
                                    const Document& doc) {
  RelationSet rel;
  if (!graph.has_node(searcher)) {
    rel.unknown_searcher = true;
    return rel;
  }
  const auto& friends = graph.neighbors(searcher, EdgeLabel::friend_of);
  const std::string* author = doc.author_id ? &*doc.author_id : nullptr;

  if (author && *author == searcher) rel.insert(Relation::self);
  if (author && *author != searcher) {
    if (friends.count(*author)) {
      rel.insert(Relation::friend_of);
    } else {
      for (const auto& f : friends)
        if (graph.has_edge(f, *author, EdgeLabel::friend_of)) {
          rel.insert(Relation::friend_of_friend);
          break;
        }
    }
  }
  if (graph.has_edge(searcher, doc.doc_id, EdgeLabel::engaged)) rel.insert(Relation::self_engaged);
  for (const auto& f : friends)
    if (graph.has_edge(f, doc.doc_id, EdgeLabel::engaged)) {
      rel.insert(Relation::friend_engaged);
      break;
    }
  if (graph.has_edge(searcher, doc.doc_id, EdgeLabel::follow) ||
      (author && graph.has_edge(searcher, *author, EdgeLabel::follow)) ||
      (doc.publisher_id && graph.has_edge(searcher, *doc.publisher_id, EdgeLabel::follow)))
    rel.insert(Relation::followee);
  if (doc.doc_type == DocType::user && author && *author != searcher) {
    if (graph.has_edge(*author, searcher, EdgeLabel::follow)) rel.insert(Relation::follower);
    if (graph.has_edge(*author, searcher, EdgeLabel::pending_friend))
      rel.insert(Relation::pending_friend);
  }
  if (doc.doc_type == DocType::group && graph.has_edge(searcher, doc.doc_id, EdgeLabel::pending_join))
    rel.insert(Relation::pending_joining);
  return rel;
}

struct StructuredSuggestion {
  std::string entity_id;
  std::string intent_id;
  bool operator==(const StructuredSuggestion&) const = default;
};

struct QueryRecord {
  std::string query_text;
  std::string user_id;
  std::int64_t ts = 0;
  std::vector<std::string> shown_doc_ids;
  std::set<std::string> clicked;
  std::set<std::string> good_clicked;
  std::optional<StructuredSuggestion> suggestion_click;
  bool operator==(const QueryRecord&) const = default;
};

struct RelevanceJudgment {
  std::string query_text;
  std::string user_id;
  std::string doc_id;
  int grade = 0;  // bad=0, okay=1, good=2, great=3, perfect=4
  bool operator==(const RelevanceJudgment&) const = default;
};

/// Canonical form of a query string used as a key in engagement tables and
/// judgment lookups.
inline std::string query_key(std::string_view text) { return join(tokenize(text)); }

/// In-memory corpus. Immutable once loading finishes.
class Corpus {
 public:
  void add_document(Document doc) {
    validate(doc);
    if (doc_index_.count(doc.doc_id)) throw DataError("duplicate doc_id '" + doc.doc_id + "'");
    doc_index_.emplace(doc.doc_id, documents_.size());
    documents_.push_back(std::move(doc));
  }

  void add_user(UserContext user) {
    if (user.user_id.empty()) throw DataError("user_id is empty");
    if (users_.count(user.user_id)) throw DataError("duplicate user_id '" + user.user_id + "'");
    if (user.location) validate_location(*user.location, "user '" + user.user_id + "'");
    for (const auto& [doc, ts] : user.engaged) {
      if (ts < 0 || ts > now_)
        throw DataError("field 'engaged." + doc + "' timestamp out of range in user '" +
                        user.user_id + "'");
      graph_.add_edge(user.user_id, doc, EdgeLabel::engaged);
    }
    graph_.add_node(user.user_id);
    users_.emplace(user.user_id, std::move(user));
  }

  void add_edge(const Edge& e) { graph_.add_edge(e.src, e.dst, e.label); }

  void add_query(QueryRecord q) {
    std::set<std::string> shown(q.shown_doc_ids.begin(), q.shown_doc_ids.end());
    if (!std::includes(shown.begin(), shown.end(), q.clicked.begin(), q.clicked.end()))
      throw DataError("field 'clicked' not a subset of 'shown' for query '" + q.query_text + "'");
    if (!std::includes(q.clicked.begin(), q.clicked.end(), q.good_clicked.begin(),
                       q.good_clicked.end()))
      throw DataError("field 'good_clicked' not a subset of 'clicked' for query '" + q.query_text +
                      "'");
    const auto key = query_key(q.query_text);
    for (const auto& id : q.shown_doc_ids) {
      auto& c = qd_engagement_[{key, id}];
      ++c.impressions;
      c.clicks += q.clicked.count(id);
      c.good_clicks += q.good_clicked.count(id);
    }
    queries_.push_back(std::move(q));
  }

  void add_judgment(RelevanceJudgment j) {
    if (j.grade < 0 || j.grade > 4)
      throw DataError("field 'grade' must be in 0..4 for doc '" + j.doc_id + "'");
    if (j.doc_id.empty()) throw DataError("field 'doc_id' is empty in judgment");
    judgments_.push_back(std::move(j));
  }

  /// Upper bound for user engagement timestamps (defaults to "no limit").
  void set_now(std::int64_t now) { now_ = now; }

  const Document* find_document(const std::string& id) const {
    auto it = doc_index_.find(id);
    return it == doc_index_.end() ? nullptr : &documents_[it->second];
  }
  const UserContext* find_user(const std::string& id) const {
    auto it = users_.find(id);
    return it == users_.end() ? nullptr : &it->second;
  }

  const std::vector<Document>& documents() const { return documents_; }
  const std::map<std::string, UserContext>& users() const { return users_; }
  const SocialGraph& graph() const { return graph_; }
  const std::vector<QueryRecord>& queries() const { return queries_; }
  const std::vector<RelevanceJudgment>& judgments() const { return judgments_; }

  /// Engagement of a (query, doc) pair aggregated from the query log.
  EngagementCounters query_doc_engagement(const std::string& key, const std::string& doc_id) const {
    auto it = qd_engagement_.find({key, doc_id});
    return it == qd_engagement_.end() ? EngagementCounters{} : it->second;
  }

  std::map<std::string, std::size_t> counts_by_type() const {
    std::map<std::string, std::size_t> out;
    for (const auto& d : documents_) ++out[std::string(to_string(d.doc_type))];
    return out;
  }

  std::vector<std::string>& warnings() { return warnings_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  bool operator==(const Corpus& o) const {
    return documents_ == o.documents_ && users_ == o.users_ && graph_ == o.graph_ &&
           queries_ == o.queries_ && judgments_ == o.judgments_;
  }

 private:
  static void validate_location(const GeoPoint& p, const std::string& owner) {
    if (!(p.lat >= -90.0 && p.lat <= 90.0)) throw DataError("field 'location.lat' out of range in " + owner);
    if (!(p.lon >= -180.0 && p.lon <= 180.0)) throw DataError("field 'location.lon' out of range in " + owner);
  }

  static void validate(const Document& d) {
    if (d.doc_id.empty()) throw DataError("field 'doc_id' is empty");
    const std::string owner = "document '" + d.doc_id + "'";
    auto unit = [&](double v, const char* field) {
      if (!(v >= 0.0 && v <= 1.0)) throw DataError(std::string("field '") + field + "' out of [0,1] in " + owner);
    };
    for (const auto& [code, p] : d.languages) {
      if (!(p >= 0.0 && p <= 1.0))
        throw DataError("field 'languages." + code + "' out of [0,1] in " + owner);
    }
    if (d.location) validate_location(*d.location, owner);
    unit(d.quality.kids_friendly, "quality.kids_friendly");
    unit(d.quality.authentic, "quality.authentic");
    unit(d.quality.authoritative, "quality.authoritative");
    unit(d.quality.readability, "quality.readability");
    if (d.quality.video_resolution) unit(*d.quality.video_resolution, "quality.video_resolution");
    const auto& e = d.engagement;
    if (e.good_clicks > e.clicks) throw DataError("field 'engagement.good_clicks' exceeds clicks in " + owner);
    if (e.clicks > e.impressions) throw DataError("field 'engagement.clicks' exceeds impressions in " + owner);
  }

  std::vector<Document> documents_;
  std::unordered_map<std::string, std::size_t> doc_index_;
  std::map<std::string, UserContext> users_;
  SocialGraph graph_;
  std::vector<QueryRecord> queries_;
  std::vector<RelevanceJudgment> judgments_;
  std::map<std::pair<std::string, std::string>, EngagementCounters> qd_engagement_;
  std::int64_t now_ = std::numeric_limits<std::int64_t>::max();
  std::vector<std::string> warnings_;
};

// ---------------------------------------------------------------------------
// Record (de)serialization. One JSON object per line, field names as in the
// structs above.

namespace detail {

inline void warn_unknown(const json& j, std::initializer_list<std::string_view> known,
                         const std::string& where, std::vector<std::string>& warnings) {
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      warnings.push_back(where + ": unknown field '" + key + "' ignored");
}

inline std::optional<GeoPoint> geo_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  if (j.is_array()) return GeoPoint{j.at(0).get<double>(), j.at(1).get<double>()};
  return GeoPoint{j.at("lat").get<double>(), j.at("lon").get<double>()};
}

inline json geo_to_json(const GeoPoint& p) { return json{{"lat", p.lat}, {"lon", p.lon}}; }

}  // namespace detail

inline Document document_from_json(const json& j, std::vector<std::string>* warnings = nullptr,
                                   const std::string& where = {}) {
  Document d;
  d.doc_id = j.at("doc_id").get<std::string>();
  auto type_name = j.at("doc_type").get<std::string>();
  auto type = parse_doc_type(type_name);
  if (!type) throw DataError("field 'doc_type' has unknown value '" + type_name + "' in document '" + d.doc_id + "'");
  d.doc_type = *type;
  if (j.contains("author_id") && !j["author_id"].is_null()) d.author_id = j["author_id"].get<std::string>();
  if (j.contains("publisher_id") && !j["publisher_id"].is_null())
    d.publisher_id = j["publisher_id"].get<std::string>();
  d.title = j.value("title", std::string{});
  d.body = j.value("body", std::string{});
  if (j.contains("languages")) d.languages = j["languages"].get<std::map<std::string, double>>();
  if (j.contains("location")) d.location = detail::geo_from_json(j["location"]);
  d.created_ts = j.value("created_ts", std::int64_t{0});
  if (j.contains("entity_ids")) d.entity_ids = j["entity_ids"].get<std::set<std::string>>();
  if (j.contains("quality")) {
    const auto& q = j["quality"];
    d.quality.kids_friendly = q.value("kids_friendly", 1.0);
    d.quality.authentic = q.value("authentic", 1.0);
    d.quality.authoritative = q.value("authoritative", 1.0);
    d.quality.readability = q.value("readability", 1.0);
    if (q.contains("video_resolution") && !q["video_resolution"].is_null())
      d.quality.video_resolution = q["video_resolution"].get<double>();
    d.quality.policy_reject = q.value("policy_reject", false);
  }
  if (j.contains("engagement")) {
    const auto& e = j["engagement"];
    auto count = [&](const char* k) {
      auto v = e.value(k, std::int64_t{0});
      if (v < 0) throw DataError(std::string("field 'engagement.") + k + "' is negative in document '" + d.doc_id + "'");
      return static_cast<std::uint64_t>(v);
    };
    d.engagement = {count("impressions"), count("clicks"), count("good_clicks")};
  }
  if (j.contains("external_scores"))
    d.external_scores = j["external_scores"].get<std::map<std::string, double>>();
  if (warnings)
    detail::warn_unknown(j,
                         {"doc_id", "doc_type", "author_id", "publisher_id", "title", "body", "languages",
                          "location", "created_ts", "entity_ids", "quality", "engagement", "external_scores"},
                         where, *warnings);
  return d;
}

inline json to_json(const Document& d) {
  json j;
  j["doc_id"] = d.doc_id;
  j["doc_type"] = std::string(to_string(d.doc_type));
  if (d.author_id) j["author_id"] = *d.author_id;
  if (d.publisher_id) j["publisher_id"] = *d.publisher_id;
  j["title"] = d.title;
  j["body"] = d.body;
  j["languages"] = d.languages;
  if (d.location) j["location"] = detail::geo_to_json(*d.location);
  j["created_ts"] = d.created_ts;
  j["entity_ids"] = d.entity_ids;
  json q{{"kids_friendly", d.quality.kids_friendly},
         {"authentic", d.quality.authentic},
         {"authoritative", d.quality.authoritative},
         {"readability", d.quality.readability},
         {"policy_reject", d.quality.policy_reject}};
  if (d.quality.video_resolution) q["video_resolution"] = *d.quality.video_resolution;
  j["quality"] = q;
  j["engagement"] = {{"impressions", d.engagement.impressions},
                     {"clicks", d.engagement.clicks},
                     {"good_clicks", d.engagement.good_clicks}};
  if (!d.external_scores.empty()) j["external_scores"] = d.external_scores;
  return j;
}

inline UserContext user_from_json(const json& j, std::vector<std::string>* warnings = nullptr,
                                  const std::string& where = {}) {
  UserContext u;
  u.user_id = j.at("user_id").get<std::string>();
  if (j.contains("languages")) u.languages = j["languages"].get<std::vector<std::string>>();
  if (j.contains("location")) u.location = detail::geo_from_json(j["location"]);
  if (j.contains("engaged")) u.engaged = j["engaged"].get<std::map<std::string, std::int64_t>>();
  if (warnings) detail::warn_unknown(j, {"user_id", "languages", "location", "engaged"}, where, *warnings);
  return u;
}

inline json to_json(const UserContext& u) {
  json j{{"user_id", u.user_id}, {"languages", u.languages}, {"engaged", u.engaged}};
  if (u.location) j["location"] = detail::geo_to_json(*u.location);
  return j;
}

inline Edge edge_from_json(const json& j, std::vector<std::string>* warnings = nullptr,
                           const std::string& where = {}) {
  auto label_name = j.at("label").get<std::string>();
  auto label = parse_edge_label(label_name);
  if (!label) throw DataError("field 'label' has unknown value '" + label_name + "'");
  if (warnings) detail::warn_unknown(j, {"src", "dst", "label"}, where, *warnings);
  return {j.at("src").get<std::string>(), j.at("dst").get<std::string>(), *label};
}

inline json to_json(const Edge& e) {
  return json{{"src", e.src}, {"dst", e.dst}, {"label", std::string(to_string(e.label))}};
}

inline QueryRecord query_from_json(const json& j, std::vector<std::string>* warnings = nullptr,
                                   const std::string& where = {}) {
  QueryRecord q;
  q.query_text = j.at("query_text").get<std::string>();
  q.user_id = j.at("user_id").get<std::string>();
  q.ts = j.value("ts", std::int64_t{0});
  if (j.contains("shown_doc_ids")) q.shown_doc_ids = j["shown_doc_ids"].get<std::vector<std::string>>();
  if (j.contains("clicked")) q.clicked = j["clicked"].get<std::set<std::string>>();
  if (j.contains("good_clicked")) q.good_clicked = j["good_clicked"].get<std::set<std::string>>();
  if (j.contains("suggestion_click") && !j["suggestion_click"].is_null()) {
    const auto& s = j["suggestion_click"];
    q.suggestion_click = StructuredSuggestion{s.at("entity_id").get<std::string>(),
                                              s.at("intent_id").get<std::string>()};
  }
  if (warnings)
    detail::warn_unknown(j,
                         {"query_text", "user_id", "ts", "shown_doc_ids", "clicked", "good_clicked",
                          "suggestion_click"},
                         where, *warnings);
  return q;
}

inline json to_json(const QueryRecord& q) {
  json j{{"query_text", q.query_text}, {"user_id", q.user_id},   {"ts", q.ts},
         {"shown_doc_ids", q.shown_doc_ids}, {"clicked", q.clicked}, {"good_clicked", q.good_clicked}};
  if (q.suggestion_click)
    j["suggestion_click"] = {{"entity_id", q.suggestion_click->entity_id},
                             {"intent_id", q.suggestion_click->intent_id}};
  return j;
}

inline RelevanceJudgment judgment_from_json(const json& j, std::vector<std::string>* warnings = nullptr,
                                            const std::string& where = {}) {
  RelevanceJudgment r;
  r.query_text = j.at("query_text").get<std::string>();
  r.user_id = j.value("user_id", std::string{});
  r.doc_id = j.at("doc_id").get<std::string>();
  r.grade = j.at("grade").get<int>();
  if (warnings) detail::warn_unknown(j, {"query_text", "user_id", "doc_id", "grade"}, where, *warnings);
  return r;
}

inline json to_json(const RelevanceJudgment& r) {
  return json{{"query_text", r.query_text}, {"user_id", r.user_id}, {"doc_id", r.doc_id}, {"grade", r.grade}};
}

namespace detail {

// Runs `fn` on each record and rewraps library errors with file and line.
template <typename Fn>
void load_records(const std::string& path, Fn&& fn) {
  for_each_record(path, [&](const json& j, std::size_t line) {
    const std::string where = path + ":" + std::to_string(line);
    try {
      fn(j, where);
    } catch (const ParseError&) {
      throw;
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what(), line);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  });
}

}  // namespace detail

inline void load_documents(const std::string& path, Corpus& corpus) {
  detail::load_records(path, [&](const json& j, const std::string& where) {
    corpus.add_document(document_from_json(j, &corpus.warnings(), where));
  });
}

inline void load_users(const std::string& path, Corpus& corpus) {
  detail::load_records(path, [&](const json& j, const std::string& where) {
    corpus.add_user(user_from_json(j, &corpus.warnings(), where));
  });
}

inline void load_edges(const std::string& path, Corpus& corpus) {
  detail::load_records(path, [&](const json& j, const std::string& where) {
    corpus.add_edge(edge_from_json(j, &corpus.warnings(), where));
  });
}

inline void load_queries(const std::string& path, Corpus& corpus) {
  detail::load_records(path, [&](const json& j, const std::string& where) {
    corpus.add_query(query_from_json(j, &corpus.warnings(), where));
  });
}

inline void load_judgments(const std::string& path, Corpus& corpus) {
  detail::load_records(path, [&](const json& j, const std::string& where) {
    corpus.add_judgment(judgment_from_json(j, &corpus.warnings(), where));
  });
}

/// Paths of the record files that make up a corpus. Empty paths are skipped.
struct CorpusPaths {
  std::string documents;
  std::string users;
  std::string edges;
  std::string queries;
  std::string judgments;

  /// Standard file names inside a directory; missing files are left empty.
  static CorpusPaths in_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("corpus directory '" + dir.string() + "' not found");
    auto pick = [&](const char* name) {
      auto p = dir / name;
      return std::filesystem::exists(p) ? p.string() : std::string{};
    };
    return {pick("documents.jsonl"), pick("users.jsonl"), pick("edges.jsonl"), pick("queries.jsonl"),
            pick("judgments.jsonl")};
  }
};

/// Loads users first so edges and engagement can reference them, then the
/// documents, graph, query log and judgments.
inline Corpus load_corpus(const CorpusPaths& paths,
                          std::int64_t now = std::numeric_limits<std::int64_t>::max()) {
  Corpus corpus;
  corpus.set_now(now);
  if (!paths.users.empty()) load_users(paths.users, corpus);
  if (!paths.documents.empty()) load_documents(paths.documents, corpus);
  if (!paths.edges.empty()) load_edges(paths.edges, corpus);
  if (!paths.queries.empty()) load_queries(paths.queries, corpus);
  if (!paths.judgments.empty()) load_judgments(paths.judgments, corpus);
  return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  return load_corpus(CorpusPaths::in_directory(dir));
}

/// Writes every record kind to its standard file name under `dir`.
inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, auto&& records) {
    std::ofstream out(dir / name);
    if (!out) throw DataError("cannot write '" + (dir / name).string() + "'");
    for (const auto& r : records) out << to_json(r).dump() << '\n';
  };
  write("documents.jsonl", corpus.documents());
  std::vector<UserContext> users;
  for (const auto& [_, u] : corpus.users()) users.push_back(u);
  write("users.jsonl", users);
  write("edges.jsonl", corpus.graph().edges());
  write("queries.jsonl", corpus.queries());
  write("judgments.jsonl", corpus.judgments());
}

}  // namespace pirank
