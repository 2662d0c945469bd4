#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pirank/corpus.hpp"
#include "pirank/text.hpp"

namespace pirank {

/// A personalized query: the text plus everything known about the searcher
/// at query time.
struct QueryContext {
  std::string query_text;
  std::vector<std::string> tokens;
  UserContext user;
  const SocialGraph* graph = nullptr;
  std::optional<StructuredSuggestion> suggestion;
  /// Query time in unix seconds; relative time expressions resolve against it.
  std::int64_t now = 0;

  static QueryContext make(std::string text, UserContext user, const SocialGraph* graph = nullptr,
                           std::int64_t now = 0) {
    QueryContext ctx;
    ctx.tokens = tokenize(text);
    ctx.query_text = std::move(text);
    ctx.user = std::move(user);
    ctx.graph = graph;
    ctx.now = now;
    return ctx;
  }

  std::string key() const { return join(tokens); }

  /// True when `id` is a friend of the searcher or a group they joined.
  bool connected(const std::string& id) const {
    if (!graph) return false;
    return graph->has_edge(user.user_id, id, EdgeLabel::friend_of) ||
           graph->has_edge(user.user_id, id, EdgeLabel::member);
  }
};

}  // namespace pirank
