#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>
#include <httplib.h>

#include "fixtures.hpp"

using namespace pirank;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(PIRANK_CLI) + " " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string config() { return std::string(PIRANK_DATA_DIR) + "/demo/engine.json"; }

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Engine, SearchIsDeterministicAcrossShardCounts) {
  const auto demo = fixtures::demo_engine();
  auto c = demo.corpus();
  const auto one = fixtures::make_engine(c, default_component_specs(), 1, demo.now());
  const auto seven = fixtures::make_engine(c, default_component_specs(), 7, demo.now());
  for (const auto& q : demo.corpus().queries()) {
    const SearchRequest req{q.query_text, q.user_id, q.suggestion_click};
    EXPECT_EQ(one.search(req).entries, seven.search(req).entries) << q.query_text;
  }
}

TEST(Engine, UnknownUserIsNotFound) {
  const auto demo = fixtures::demo_engine();
  EXPECT_THROW(demo.search({"taylor", "nobody", std::nullopt}), NotFoundError);
}

TEST(Engine, SelfSeenGrammarAddsEngagedDocuments) {
  const auto demo = fixtures::demo_engine();
  const auto* user = [&]() -> const UserContext* {
    for (const auto& [_, u] : demo.corpus().users())
      for (const auto& [id, _] : u.engaged)
        if (const auto* d = demo.corpus().find_document(id); d && d->doc_type == DocType::video) return &u;
    return nullptr;
  }();
  ASSERT_NE(user, nullptr) << "demo data has no user who watched a video";
  const auto list = demo.search({"videos i have watched", user->user_id, std::nullopt});
  EXPECT_TRUE(list.triggered.count("special_grammar"));
  ASSERT_FALSE(list.entries.empty());
  const auto* top = demo.corpus().find_document(list.entries[0].doc_id);
  EXPECT_EQ(top->doc_type, DocType::video);
  EXPECT_TRUE(user->engaged.count(top->doc_id));
}

TEST(Engine, EngagementDatasetHasOneRowPerShownDocument) {
  const auto demo = fixtures::demo_engine();
  std::size_t skipped = 0;
  const auto data = demo.engagement_dataset(demo.corpus().queries(), {"bm25", "bias1"}, &skipped);
  std::size_t shown = 0;
  for (const auto& q : demo.corpus().queries()) shown += q.shown_doc_ids.size();
  EXPECT_EQ(data.rows.size(), shown);
  EXPECT_EQ(data.labels.size(), shown);
  EXPECT_EQ(skipped, 0u);
}

TEST(Cli, HelpAndUsageErrors) {
  const auto help = run("--help");
  EXPECT_EQ(help.code, 0);
  for (const char* sub : {"ingest", "index", "search", "explain", "intents", "bvt", "tune", "abtest", "train", "serve"})
    EXPECT_NE(help.out.find(sub), std::string::npos) << sub;
  EXPECT_EQ(run("search --frobnicate").code, 1);
  EXPECT_EQ(run("").code, 1);
}

TEST(Cli, SearchIsRepeatableAndMatchesExplainFingerprint) {
  const auto args = "search --config " + config() + " -q 'taylor smith' -u u_alice";
  const auto a = run(args);
  const auto b = run(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  const auto l = lines(a.out);
  ASSERT_GT(l.size(), 5u);
  EXPECT_NE(l[5].find("d_user_taylor"), std::string::npos) << a.out;
  const auto ex = run("explain --config " + config() + " -q 'taylor smith' -u u_alice -d d_user_taylor");
  ASSERT_EQ(ex.code, 0);
  EXPECT_NE(ex.out.find(l[2]), std::string::npos);  // same "config: <fingerprint>" line
}

TEST(Cli, DataErrorsExitWithTwo) {
  EXPECT_EQ(run("search --config " + config() + " -q taylor -u nobody").code, 2);
  EXPECT_EQ(run("ingest --corpus /nonexistent/dir").code, 2);
}

TEST(Cli, ExplainMatchesGoldenAndReportsUnretrievedDocs) {
  const auto ex = run("explain --config " + config() + " -q 'taylor smith' -u u_alice -d d_user_taylor");
  ASSERT_EQ(ex.code, 0);
  EXPECT_NE(ex.out.find(read_file(std::string(PIRANK_GOLDEN_DIR) + "/explain_taylor_smith.txt")), std::string::npos);
  const auto miss = run("explain --config " + config() + " -q 'taylor smith' -u u_alice -d d_user_carol");
  EXPECT_EQ(miss.code, 0);
  EXPECT_NE(miss.out.find("not retrieved"), std::string::npos) << miss.out;
  EXPECT_EQ(run("explain --config " + config() + " -q 'taylor smith' -u u_alice -d no_such_doc").code, 2);
}

TEST(Cli, IntentsForMovieTrailerQuery) {
  const auto r = run("intents --config " + config() + " -q 'avengers trailers'");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("intent movie"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("pattern movie_trailers"), std::string::npos) << r.out;
}

TEST(Cli, BvtSuitePasses) {
  const auto r = run("bvt --config " + config());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("bvt pass"), std::string::npos);
}

TEST(Cli, AbtestOfIdenticalConfigsHasZeroDeltas) {
  const auto r = run("abtest --config " + config() + " --resamples 200");
  ASSERT_EQ(r.code, 0);
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 4u) << r.out;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto j = nlohmann::json::parse(l[i]);
    EXPECT_EQ(j["delta"].get<double>(), 0.0) << l[i];
    EXPECT_EQ(j["p_value"].get<double>(), 1.0) << l[i];
  }
  EXPECT_TRUE(nlohmann::json::parse(l[3]).contains("bvt"));
}

TEST(Cli, TrainWritesAModelTheEngineCanLoad) {
  const auto path = (std::filesystem::temp_directory_path() / "pirank_cli_model.json").string();
  const auto r = run("train --config " + config() + " --out " + path);
  ASSERT_EQ(r.code, 0);
  const auto model = engagement_model_from_json(nlohmann::json::parse(read_file(path)));
  EXPECT_EQ(model.features.size(), model.weights.size());
  std::filesystem::remove(path);
}

TEST(Cli, ServeAnswersSearchRequests) {
  const int port = 18000 + static_cast<int>(::getpid() % 1000);
  const pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    const auto cfg = config();
    const auto port_s = std::to_string(port);
    std::freopen("/dev/null", "w", stderr);
    ::execl(PIRANK_CLI, PIRANK_CLI, "serve", "--config", cfg.c_str(), "--port", port_s.c_str(), nullptr);
    std::_Exit(127);
  }
  httplib::Client client("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 100 && !res; ++i) {
    res = client.Get("/search?q=taylor%20smith&user=u_alice");
    if (!res) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  ASSERT_TRUE(res) << "server did not come up";
  EXPECT_EQ(res->status, 200);
  EXPECT_NE(res->body.find("d_user_taylor"), std::string::npos);
  const auto bad = client.Get("/search?q=x&user=nobody");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
}
