#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "pirank/components.hpp"

using namespace pirank;

namespace {

EngagementDataset separable(std::mt19937_64& rng, std::size_t n) {
  EngagementDataset d{{"x1", "x2"}, {}, {}};
  std::normal_distribution<double> noise(0.0, 0.3);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    d.rows.push_back({(y ? 1.0 : -1.0) + noise(rng), noise(rng)});
    d.labels.push_back(y);
  }
  return d;
}

}  // namespace

TEST(Components, SocialRelevanceTakesStrongestRelation) {
  RelationSet r;
  EXPECT_DOUBLE_EQ(social_relevance(r), 0.0);
  r.insert(Relation::follower);
  EXPECT_DOUBLE_EQ(social_relevance(r), 0.3);
  r.insert(Relation::friend_of);
  EXPECT_DOUBLE_EQ(social_relevance(r), 0.8);
  r.insert(Relation::self);
  EXPECT_DOUBLE_EQ(social_relevance(r), 1.0);
}

TEST(Components, LocationDecaysWithDistance) {
  const GeoPoint here{40.0, -3.0};
  EXPECT_DOUBLE_EQ(location_relevance(here, here), 1.0);
  EXPECT_DOUBLE_EQ(location_relevance(std::nullopt, here), 0.0);
  const GeoPoint there{41.0, -3.0};
  EXPECT_NEAR(location_relevance(here, there), std::exp(-haversine_km(here, there) / 50.0), 1e-15);
  EXPECT_LT(location_relevance(here, there, 10.0), location_relevance(here, there, 100.0));
}

TEST(Components, LanguageMatchIsNeutralWhenUnknown) {
  EXPECT_DOUBLE_EQ(language_match({}, {{"en", 1.0}}), 0.5);
  EXPECT_DOUBLE_EQ(language_match({"en"}, {}), 0.5);
  EXPECT_DOUBLE_EQ(language_match({"es", "en"}, {{"en", 0.7}, {"es", 0.2}}), 0.7);
  EXPECT_DOUBLE_EQ(language_match({"fr"}, {{"en", 0.7}}), 0.0);
}

TEST(Components, QualityAveragesAvailableSubscores) {
  Document d;
  d.quality = {0.2, 0.4, 0.6, 0.8, std::nullopt, false};
  EXPECT_NEAR(document_quality(d).score, 0.5, 1e-15);
  d.quality.video_resolution = 1.0;
  EXPECT_NEAR(document_quality(d).score, 0.6, 1e-15);
  d.quality.policy_reject = true;
  EXPECT_TRUE(document_quality(d).policy_reject);
}

TEST(Components, TextRelevanceMixesSquashedBm25) {
  SharedSignals s;
  s.bm25 = 3.0;
  s.proximity = 0.5;
  s.title_hit_ratio = 1.0;
  EXPECT_NEAR(text_relevance(s), 0.5 * 0.75 + 0.25 * 0.5 + 0.25, 1e-15);
  EXPECT_NEAR(text_relevance(s, {1.0, 0.0, 0.0}), 0.75, 1e-15);
  EXPECT_DOUBLE_EQ(text_relevance(SharedSignals{}), 0.0);
}

TEST(Engagement, FeaturesUseSmoothedRatesAndTopIntent) {
  SharedSignals s;
  s.query_doc = {9, 4, 2};
  Document d;
  d.engagement = {99, 10, 5};
  IntentDistribution dist;
  dist.probs = {{"generic", 0.4}, {"movie", 0.4}, {"news", 0.2}};
  std::size_t missing = 0;
  const auto x = engagement_features({"ctr_qd", "gcr_qd", "doc_ctr", "doc_gcr", "intent:generic", "intent:movie",
                                      "bias1", "nonsense"},
                                     s, d, dist, &missing);
  EXPECT_DOUBLE_EQ(x[0], 0.4);
  EXPECT_DOUBLE_EQ(x[1], 0.2);
  EXPECT_DOUBLE_EQ(x[2], 0.1);
  EXPECT_DOUBLE_EQ(x[3], 0.05);
  EXPECT_DOUBLE_EQ(x[4], 1.0);  // tie goes to the smaller id
  EXPECT_DOUBLE_EQ(x[5], 0.0);
  EXPECT_DOUBLE_EQ(x[6], 1.0);
  EXPECT_DOUBLE_EQ(x[7], 0.0);
  EXPECT_EQ(missing, 1u);
}

TEST(Engagement, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  auto d = separable(rng, 40);
  EngagementModel m{d.features, {0.3, -0.7}, 0.1};
  const double l2 = 0.05;
  const auto g = log_loss_gradient(m, d, l2);
  const double h = 1e-6;
  for (std::size_t k = 0; k < 2; ++k) {
    auto up = m, down = m;
    up.weights[k] += h;
    down.weights[k] -= h;
    const double fd = (log_loss(up, d, l2) - log_loss(down, d, l2)) / (2 * h);
    EXPECT_NEAR(g.weights[k], fd, 1e-7);
  }
  auto up = m, down = m;
  up.bias += h;
  down.bias -= h;
  EXPECT_NEAR(g.bias, (log_loss(up, d, l2) - log_loss(down, d, l2)) / (2 * h), 1e-7);
}

TEST(Engagement, LogLossIsStableForLargeMargins) {
  EngagementDataset d{{"x"}, {{1000.0}, {-1000.0}}, {1, 0}};
  EngagementModel m{{"x"}, {1.0}, 0.0};
  EXPECT_NEAR(log_loss(m, d), 0.0, 1e-300);
  m.weights[0] = -1.0;
  EXPECT_NEAR(log_loss(m, d), 1000.0, 1e-9);
}

TEST(Engagement, AucHandlesTies) {
  EXPECT_DOUBLE_EQ(auc({0.1, 0.9}, {0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(auc({0.9, 0.1}, {0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(auc({0.5, 0.5}, {0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(auc({0.2, 0.5, 0.5, 0.9}, {0, 0, 1, 1}), 0.875);
  EXPECT_DOUBLE_EQ(auc({0.2, 0.3}, {1, 1}), 0.5);
}

TEST(Engagement, TrainingIsDeterministicAndLearns) {
  std::mt19937_64 rng(2);
  const auto d = separable(rng, 200);
  TrainParams p;
  p.batch_size = 16;
  p.seed = 9;
  const auto a = train_engagement(d, p);
  const auto b = train_engagement(d, p);
  EXPECT_EQ(a.model, b.model);
  EXPECT_GT(a.auc, 0.95);
  EXPECT_GT(a.model.weights[0], 0.0);
  EngagementModel zero{d.features, {0.0, 0.0}, 0.0};
  EXPECT_LT(a.loss, log_loss(zero, d));
  p.seed = 10;
  EXPECT_NE(train_engagement(d, p).model, a.model);
}

TEST(Engagement, SingleClassIsRejectedWithAHint) {
  EngagementDataset d{{"x"}, {{1.0}, {2.0}}, {0, 0}};
  try {
    train_engagement(d, {});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("positive"), std::string::npos);
  }
  EXPECT_THROW(train_engagement(EngagementDataset{{"x"}, {}, {}}, {}), DataError);
  EngagementDataset ok{{"x"}, {{1.0}, {2.0}}, {0, 1}};
  EXPECT_THROW(train_engagement(ok, {}, EngagementModel{{"y"}, {0.0}, 0.0}), ConfigError);
}

TEST(Engagement, ModelJsonRoundTrip) {
  EngagementModel m{{"bm25", "social"}, {0.25, -1.5}, 0.75};
  EXPECT_EQ(engagement_model_from_json(to_json(m)), m);
  EXPECT_THROW(engagement_model_from_json({{"features", {"a"}}, {"weights", {1.0, 2.0}}}), ConfigError);
}

TEST(IntentComponents, FriendScores) {
  SocialGraph g;
  g.add_edge("f", "liked_post", EdgeLabel::engaged);
  Document profile;
  profile.doc_id = "p";
  profile.doc_type = DocType::user;
  profile.author_id = "f";
  EXPECT_DOUBLE_EQ(friend_intent_score(profile, "f", g), 1.0);
  Document post;
  post.doc_id = "x";
  post.author_id = "f";
  EXPECT_DOUBLE_EQ(friend_intent_score(post, "f", g), 0.8);
  Document liked;
  liked.doc_id = "liked_post";
  EXPECT_DOUBLE_EQ(friend_intent_score(liked, "f", g), 0.6);
  Document tagged;
  tagged.doc_id = "t";
  tagged.entity_ids = {"f"};
  EXPECT_DOUBLE_EQ(friend_intent_score(tagged, "f", g), 0.6);
  EXPECT_DOUBLE_EQ(friend_intent_score(tagged, "someone", g), 0.0);
  EXPECT_DOUBLE_EQ(friend_intent_score(post, "", g), 0.0);
}

TEST(IntentComponents, GrammarScoresRespectWindow) {
  UserContext u{"u", {}, std::nullopt, {{"v1", 150}, {"v2", 50}}};
  Document v1;
  v1.doc_id = "v1";
  v1.doc_type = DocType::video;
  Document v2 = v1;
  v2.doc_id = "v2";
  GrammarSpec g{DocType::video, true, 100, 200};
  EXPECT_DOUBLE_EQ(grammar_intent_score(u, v1, g), 1.0);
  EXPECT_DOUBLE_EQ(grammar_intent_score(u, v2, g), 0.0);
  g.self_seen = false;
  EXPECT_DOUBLE_EQ(grammar_intent_score(u, v2, g), 1.0);
  g.target_type = DocType::post;
  EXPECT_DOUBLE_EQ(grammar_intent_score(u, v1, g), 0.0);
}

TEST(IntentComponents, PublisherScoresBothModes) {
  Document d;
  d.publisher_id = "page";
  d.engagement = {100, 9, 6};
  EXPECT_DOUBLE_EQ(video_publisher_score(d, "page", PublisherMode::binary), 1.0);
  EXPECT_DOUBLE_EQ(video_publisher_score(d, "page", PublisherMode::good_click_weighted), 0.6);
  EXPECT_DOUBLE_EQ(video_publisher_score(d, "other", PublisherMode::binary), 0.0);
}

TEST(Registry, BuildsDefaultsAndRejectsBadSpecs) {
  const IntentSpace space = {default_intents(), "generic"};
  const auto reg = build_registry(default_component_specs(), space);
  EXPECT_EQ(reg.generic().size(), 6u);
  ASSERT_NE(reg.for_intent("friend"), nullptr);
  EXPECT_EQ(reg.for_intent("friend")->kind(), "friend");
  EXPECT_EQ(reg.for_intent("movie"), nullptr);

  auto expect_error = [&](std::vector<ComponentSpec> specs, const std::string& fragment) {
    try {
      build_registry(specs, space);
      ADD_FAILURE() << "expected ConfigError containing " << fragment;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  expect_error({{"x", "teleport"}}, "valid kinds");
  expect_error({{"x", "friend", "generic"}}, "intent:<id>");
  expect_error({{"x", "friend", "intent:weather"}}, "weather");
  expect_error({{"x", "text_relevance", "intent:friend"}}, "generic");
  expect_error({{"a", "language_match"}, {"a", "document_quality"}}, "duplicate");
  expect_error({{"a", "friend", "intent:friend"}, {"b", "friend", "intent:friend"}}, "already has");
  expect_error({{"a", "language_match", "generic", {}, -1.0}}, "negative");
  expect_error({{"a", "text_relevance", "generic", {{"bm25", 0.9}}}}, "sum to 1");
  expect_error({{"a", "social_relevance", "generic", {{"weights", {{"cousin", 0.5}}}}}}, "cousin");
}

TEST(Registry, PassthroughReadsExternalScores) {
  const IntentSpace space = {{"movie"}, "generic"};
  const auto reg = build_registry({{"ext", "passthrough", "generic", {{"key", "ctr_model"}}}}, space);
  Corpus corpus;
  Document d;
  d.doc_id = "a";
  d.external_scores["ctr_model"] = 1.7;
  const auto ctx = QueryContext::make("q", UserContext{"u", {}, std::nullopt, {}});
  QueryAnalysis analysis;
  SharedSignals s;
  EXPECT_DOUBLE_EQ(reg.find("ext")->score({ctx, analysis, d, s, corpus}), 1.0);  // clamped
  d.external_scores.clear();
  EXPECT_DOUBLE_EQ(reg.find("ext")->score({ctx, analysis, d, s, corpus}), 0.0);
}
