#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "pirank/corpus.hpp"
#include "pirank/error.hpp"
#include "pirank/text.hpp"

namespace pirank {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct TokenizerConfig {
  std::set<std::string> stopwords;

  std::vector<std::string> apply(std::string_view text) const {
    auto tokens = tokenize(text);
    if (!stopwords.empty())
      std::erase_if(tokens, [&](const std::string& t) { return stopwords.count(t) > 0; });
    return tokens;
  }
};

inline constexpr std::uint8_t kInTitle = 1;
inline constexpr std::uint8_t kInBody = 2;

struct Posting {
  std::string doc_id;
  std::uint32_t tf = 0;
  std::uint8_t fields = 0;
  /// Offsets in the title-then-body token stream.
  std::vector<std::uint32_t> positions;
};

/// One index node: postings sorted by doc_id and per-document lengths.
struct Shard {
  std::map<std::string, std::vector<Posting>> postings;
  std::map<std::string, std::uint32_t> doc_lengths;

  const Posting* find(const std::string& term, const std::string& doc_id) const {
    auto it = postings.find(term);
    if (it == postings.end()) return nullptr;
    const auto& list = it->second;
    auto p = std::lower_bound(list.begin(), list.end(), doc_id,
                              [](const Posting& x, const std::string& id) { return x.doc_id < id; });
    return (p != list.end() && p->doc_id == doc_id) ? &*p : nullptr;
  }
};

struct GlobalStats {
  std::size_t num_docs = 0;
  std::map<std::string, std::size_t> df;
  double avgdl = 0.0;

  std::size_t doc_freq(const std::string& term) const {
    auto it = df.find(term);
    return it == df.end() ? 0 : it->second;
  }
};

struct Candidate {
  std::string doc_id;
  double first_pass_score = 0.0;
  bool operator==(const Candidate&) const = default;
};

/// Total order used for every ranked list: score descending, doc_id ascending.
inline bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.first_pass_score != b.first_pass_score) return a.first_pass_score > b.first_pass_score;
  return a.doc_id < b.doc_id;
}

inline double bm25_idf(std::size_t num_docs, std::size_t df) {
  const double n = static_cast<double>(num_docs);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

inline double bm25_term_weight(double tf, double doc_len, double avgdl, const Bm25Params& p) {
  if (tf <= 0.0) return 0.0;
  const double norm = avgdl > 0.0 ? doc_len / avgdl : 0.0;
  return tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm));
}

/// BM25 of one document. `query_terms` should be distinct; `tf_of` maps a
/// term to its frequency in the document (0 when absent).
template <typename TfLookup>
double first_pass_score(const std::vector<std::string>& query_terms, TfLookup&& tf_of, double doc_len,
                        const GlobalStats& stats, const Bm25Params& params = {}) {
  double score = 0.0;
  for (const auto& term : query_terms) {
    const double tf = static_cast<double>(tf_of(term));
    if (tf <= 0.0) continue;
    score += bm25_idf(stats.num_docs, stats.doc_freq(term)) *
             bm25_term_weight(tf, doc_len, stats.avgdl, params);
  }
  return score;
}

class ShardedIndex {
 public:
  static constexpr int kSnapshotVersion = 1;

  ShardedIndex() = default;
  ShardedIndex(std::size_t num_shards, TokenizerConfig tokenizer)
      : shards_(num_shards), tokenizer_(std::move(tokenizer)) {
    if (num_shards < 1) throw ConfigError("num_shards must be >= 1");
  }

  std::size_t num_shards() const { return shards_.size(); }
  const std::vector<Shard>& shards() const { return shards_; }
  const GlobalStats& stats() const { return stats_; }
  const TokenizerConfig& tokenizer() const { return tokenizer_; }

  std::size_t shard_of(const std::string& doc_id) const { return fnv1a64(doc_id) % shards_.size(); }

  const Shard& shard_for(const std::string& doc_id) const { return shards_[shard_of(doc_id)]; }

  bool contains(const std::string& doc_id) const { return shard_for(doc_id).doc_lengths.count(doc_id) > 0; }

  std::uint32_t doc_length(const std::string& doc_id) const {
    const auto& lengths = shard_for(doc_id).doc_lengths;
    auto it = lengths.find(doc_id);
    return it == lengths.end() ? 0 : it->second;
  }

  const Posting* posting(const std::string& term, const std::string& doc_id) const {
    return shard_for(doc_id).find(term, doc_id);
  }

  std::vector<std::string> query_terms(std::string_view query) const {
    return unique_tokens(tokenizer_.apply(query));
  }

  /// BM25 of one indexed document using global statistics.
  double score(const std::vector<std::string>& query_terms, const std::string& doc_id,
               const Bm25Params& params = {}) const {
    const auto& shard = shard_for(doc_id);
    return first_pass_score(
        query_terms,
        [&](const std::string& t) {
          const auto* p = shard.find(t, doc_id);
          return p ? p->tf : 0u;
        },
        static_cast<double>(doc_length(doc_id)), stats_, params);
  }

  void add(const Document& doc) {
    auto& shard = shards_[shard_of(doc.doc_id)];
    if (shard.doc_lengths.count(doc.doc_id)) throw DataError("document '" + doc.doc_id + "' indexed twice");
    const auto title = tokenizer_.apply(doc.title);
    const auto body = tokenizer_.apply(doc.body);
    std::map<std::string, Posting> by_term;
    std::uint32_t pos = 0;
    auto feed = [&](const std::vector<std::string>& tokens, std::uint8_t field) {
      for (const auto& t : tokens) {
        auto& p = by_term[t];
        p.doc_id = doc.doc_id;
        ++p.tf;
        p.fields |= field;
        p.positions.push_back(pos++);
      }
    };
    feed(title, kInTitle);
    feed(body, kInBody);
    shard.doc_lengths[doc.doc_id] = pos;
    for (auto& [term, posting] : by_term) {
      auto& list = shard.postings[term];
      auto at = std::lower_bound(list.begin(), list.end(), posting.doc_id,
                                 [](const Posting& x, const std::string& id) { return x.doc_id < id; });
      list.insert(at, std::move(posting));
    }
  }

  /// Rebuilds global statistics from the shards.
  void finalize() {
    stats_ = {};
    std::uint64_t total_len = 0;
    for (const auto& shard : shards_) {
      stats_.num_docs += shard.doc_lengths.size();
      for (const auto& [_, len] : shard.doc_lengths) total_len += len;
      for (const auto& [term, list] : shard.postings) stats_.df[term] += list.size();
    }
    stats_.avgdl = stats_.num_docs ? static_cast<double>(total_len) / static_cast<double>(stats_.num_docs) : 0.0;
  }

  /// Top `k` documents of one shard by BM25 with global statistics.
  std::vector<Candidate> search_shard(std::size_t shard_id, const std::vector<std::string>& terms,
                                      std::size_t k, const Bm25Params& params) const {
    const auto& shard = shards_[shard_id];
    std::unordered_map<std::string, double> acc;
    for (const auto& term : terms) {
      auto it = shard.postings.find(term);
      if (it == shard.postings.end()) continue;
      const double idf = bm25_idf(stats_.num_docs, stats_.doc_freq(term));
      for (const auto& p : it->second) {
        const double len = static_cast<double>(shard.doc_lengths.at(p.doc_id));
        acc[p.doc_id] += idf * bm25_term_weight(p.tf, len, stats_.avgdl, params);
      }
    }
    std::vector<Candidate> out;
    out.reserve(acc.size());
    for (auto& [id, s] : acc) out.push_back({id, s});
    return top_k(std::move(out), k);
  }

  static std::vector<Candidate> top_k(std::vector<Candidate> v, std::size_t k) {
    if (v.size() > k) {
      std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(), candidate_before);
      v.resize(k);
    } else {
      std::sort(v.begin(), v.end(), candidate_before);
    }
    return v;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write index snapshot '" + path + "'");
    out << nlohmann::json{{"format", "pirank-index"},
                          {"version", kSnapshotVersion},
                          {"num_shards", shards_.size()},
                          {"stopwords", tokenizer_.stopwords}}
               .dump()
        << '\n';
    for (std::size_t s = 0; s < shards_.size(); ++s) {
      for (const auto& [id, len] : shards_[s].doc_lengths)
        out << nlohmann::json{{"shard", s}, {"doc", id}, {"length", len}}.dump() << '\n';
      for (const auto& [term, list] : shards_[s].postings) {
        nlohmann::json plist = nlohmann::json::array();
        for (const auto& p : list) plist.push_back({p.doc_id, p.tf, p.fields, p.positions});
        out << nlohmann::json{{"shard", s}, {"term", term}, {"postings", plist}}.dump() << '\n';
      }
    }
  }

  static ShardedIndex load(const std::string& path) {
    ShardedIndex index;
    bool have_header = false;
    for_each_record(path, [&](const nlohmann::json& j, std::size_t line) {
      if (!have_header) {
        if (j.value("format", "") != "pirank-index") throw ParseError(path + ": not an index snapshot", line);
        const int version = j.value("version", -1);
        if (version != kSnapshotVersion)
          throw DataError(path + ": index snapshot version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kSnapshotVersion) + ")");
        TokenizerConfig tok;
        tok.stopwords = j.value("stopwords", std::set<std::string>{});
        index = ShardedIndex(j.at("num_shards").get<std::size_t>(), std::move(tok));
        have_header = true;
        return;
      }
      const auto s = j.at("shard").get<std::size_t>();
      if (s >= index.shards_.size()) throw ParseError(path + ": shard out of range", line);
      auto& shard = index.shards_[s];
      if (j.contains("doc")) {
        shard.doc_lengths[j["doc"].get<std::string>()] = j.at("length").get<std::uint32_t>();
      } else {
        auto& list = shard.postings[j.at("term").get<std::string>()];
        for (const auto& p : j.at("postings"))
          list.push_back({p.at(0).get<std::string>(), p.at(1).get<std::uint32_t>(), p.at(2).get<std::uint8_t>(),
                          p.at(3).get<std::vector<std::uint32_t>>()});
      }
    });
    if (!have_header) throw DataError(path + ": empty index snapshot");
    index.finalize();
    return index;
  }

 private:
  std::vector<Shard> shards_;
  GlobalStats stats_;
  TokenizerConfig tokenizer_;
};

inline ShardedIndex build_index(const Corpus& corpus, std::size_t num_shards, const TokenizerConfig& tokenizer = {}) {
  if (num_shards < 1) throw ConfigError("num_shards must be >= 1, got " + std::to_string(num_shards));
  ShardedIndex index(num_shards, tokenizer);
  for (const auto& doc : corpus.documents()) index.add(doc);
  index.finalize();
  return index;
}

struct RetrieveOptions {
  std::size_t per_shard_k = 0;  // 0 means "same as k"
  std::size_t k = 100;
  /// Allow per_shard_k < k; results may then differ from a single shard.
  bool allow_small_per_shard_k = false;
  /// Number of rank aggregators; 0 picks ceil(sqrt(num_shards)).
  std::size_t rank_aggregators = 0;
  bool parallel = false;
  Bm25Params bm25;
};

/// Fan-out/merge retrieval: index nodes score their shard, rank aggregators
/// merge groups of shards, the top aggregator merges aggregators into the
/// global top k.
inline std::vector<Candidate> retrieve(const ShardedIndex& index, const std::vector<std::string>& query_tokens,
                                       const RetrieveOptions& opts = {}) {
  const auto terms = [&] {
    auto t = unique_tokens(query_tokens);
    std::sort(t.begin(), t.end());
    return t;
  }();
  if (terms.empty() || opts.k == 0) return {};
  std::size_t per_shard = opts.per_shard_k == 0 ? opts.k : opts.per_shard_k;
  if (per_shard < opts.k && !opts.allow_small_per_shard_k) per_shard = opts.k;

  const std::size_t num_shards = index.num_shards();
  std::vector<std::vector<Candidate>> shard_results(num_shards);
  if (opts.parallel && num_shards > 1) {
    std::vector<std::future<std::vector<Candidate>>> futures;
    for (std::size_t s = 0; s < num_shards; ++s)
      futures.push_back(std::async(std::launch::async,
                                   [&, s] { return index.search_shard(s, terms, per_shard, opts.bm25); }));
    for (std::size_t s = 0; s < num_shards; ++s) shard_results[s] = futures[s].get();
  } else {
    for (std::size_t s = 0; s < num_shards; ++s) shard_results[s] = index.search_shard(s, terms, per_shard, opts.bm25);
  }

  std::size_t aggregators = opts.rank_aggregators;
  if (aggregators == 0) aggregators = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(num_shards))));
  aggregators = std::clamp<std::size_t>(aggregators, 1, num_shards);

  std::vector<std::vector<Candidate>> merged(aggregators);
  for (std::size_t s = 0; s < num_shards; ++s) {
    auto& dst = merged[s % aggregators];
    dst.insert(dst.end(), shard_results[s].begin(), shard_results[s].end());
  }
  std::vector<Candidate> top;
  for (auto& m : merged) {
    auto part = ShardedIndex::top_k(std::move(m), per_shard);
    top.insert(top.end(), part.begin(), part.end());
  }
  return ShardedIndex::top_k(std::move(top), opts.k);
}

}  // namespace pirank
