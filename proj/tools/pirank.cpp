// pirank command-line tool.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pirank/combiner.hpp"
#include "pirank/components.hpp"
#include "pirank/corpus.hpp"
#include "pirank/engine.hpp"
#include "pirank/error.hpp"
#include "pirank/eval.hpp"
#include "pirank/index.hpp"
#include "pirank/intent.hpp"
#include "pirank/tuner.hpp"

namespace {

using nlohmann::json;
using namespace pirank;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;
constexpr int kExitBvtFailures = 4;

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "Engine config file (JSON)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "Write the primary output here instead of stdout");
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
}

/// Writes to --out when given, otherwise to stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw DataError("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

RankerConfig load_ranker(const std::string& path, const RankerConfig& fallback) {
  if (path.empty()) return fallback;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ranker config '" + path + "'");
  try {
    RankerConfig c = fallback;
    const auto j = json::parse(in);
    const auto parsed = RankerConfig::from_json(j);
    if (j.contains("generic_weights")) c.generic_weights = parsed.generic_weights;
    if (j.contains("intent_weights")) c.intent_weights = parsed.intent_weights;
    if (j.contains("theta")) c.theta = parsed.theta;
    if (j.contains("k_final")) c.k_final = parsed.k_final;
    return c;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

std::optional<StructuredSuggestion> suggestion_of(const std::string& intent, const std::string& entity) {
  if (intent.empty() && entity.empty()) return std::nullopt;
  if (intent.empty() || entity.empty())
    throw ConfigError("--suggest-intent and --suggest-entity must be given together");
  return StructuredSuggestion{entity, intent};
}

std::string render_ranked(const RankedList& list, const Corpus& corpus) {
  std::string out = fmt::format("query: {}\nuser: {}\nconfig: {}\n", list.query_text, list.user_id, list.fingerprint);
  out += "intents:";
  for (const auto& [id, p] : list.intents.probs) out += fmt::format(" {}={:.6f}", id, p);
  out += fmt::format("\ncandidates: {}\n", list.candidate_ids.size());
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    const auto& e = list.entries[i];
    const auto* d = corpus.find_document(e.doc_id);
    out += fmt::format("{:>3}  {:<20} {:>12.9f}  {:<6} {}\n", i + 1, e.doc_id, e.score,
                       d ? to_string(d->doc_type) : "?", d ? d->title : "");
  }
  return out;
}

std::string render_explain(const Engine& engine, const SearchRequest& req, const std::string& doc_id,
                           const RankerConfig& config) {
  if (!engine.corpus().find_document(doc_id)) throw NotFoundError("document '" + doc_id + "' is not in the corpus");
  const auto list = engine.search(req, config);
  if (!list.trace(doc_id))
    return fmt::format("query: {}\nuser: {}\ndoc: {}\nverdict: not retrieved (outside the top {} candidates)\n",
                       list.query_text, list.user_id, doc_id, engine.settings().candidates);
  std::string verdict;
  const auto* t = list.trace(doc_id);
  if (t->filtered)
    verdict = "retrieved but filtered";
  else if (list.rank_of(doc_id))
    verdict = "retrieved and shown";
  else
    verdict = "retrieved but ranked low";
  return "verdict: " + verdict + "\n" + explain(list, doc_id);
}

std::string render_intents(const QueryAnalysis& a) {
  std::string out;
  for (const auto& [id, p] : a.distribution.probs) out += fmt::format("intent {:<16} {:.6f}\n", id, p);
  for (const auto& m : a.matches) {
    out += fmt::format("pattern {} -> {} confidence {:.6f}", m.pattern_id, m.target_intent, m.confidence);
    for (const auto& c : m.captures) out += fmt::format(" {}={}", c.slot, c.value);
    out += "\n";
  }
  for (const auto& l : a.links)
    out += fmt::format("entity {} ({}) tokens [{}, {}) score {:.6f}\n", l.entity_id, l.entity_type, l.begin, l.end,
                       l.score);
  for (const auto& [intent, c] : a.classifier_outputs)
    out += fmt::format("classifier {} {:.6f}{}\n", intent, c.confidence, c.target ? " target=" + *c.target : "");
  for (const auto& [intent, target] : a.targets) out += fmt::format("target {} {}\n", intent, target);
  for (const auto& w : a.warnings) out += "warning: " + w + "\n";
  return out;
}

std::vector<BVTCase> suite_from(const std::string& flag, const EngineConfig& cfg) {
  const auto path = flag.empty() ? cfg.bvt_suite_path : flag;
  if (path.empty()) throw DataError("no BVT suite: pass --suite or set bvt_suite in the engine config");
  return load_bvt_suite(path);
}

int run(int argc, char** argv) {
  CLI::App app{"pirank: intent-aware personalized search ranking"};
  app.require_subcommand(1);

  // ingest
  Common ingest_c;
  std::string corpus_dir;
  auto* ingest = app.add_subcommand("ingest", "Validate corpus files and write a normalized copy");
  add_common(ingest, ingest_c, false);
  ingest->add_option("--corpus", corpus_dir, "Directory with documents/users/edges/queries/judgments .jsonl");

  // index
  Common index_c;
  auto* index = app.add_subcommand("index", "Build the sharded index and write a snapshot");
  add_common(index, index_c);

  // search
  Common search_c;
  std::string query, user, ranker_path, trace_path, sugg_intent, sugg_entity;
  std::size_t k = 0;
  auto* search = app.add_subcommand("search", "Rank results for a query");
  add_common(search, search_c);
  search->add_option("-q,--query", query, "Query text")->required();
  search->add_option("-u,--user", user, "Searcher user_id")->required();
  search->add_option("-k,--k", k, "Results to print (default: ranker k_final)");
  search->add_option("--ranker", ranker_path, "Ranker config override (JSON)");
  search->add_option("--trace", trace_path, "Write score traces as JSONL");
  search->add_option("--suggest-intent", sugg_intent, "Clicked suggestion intent");
  search->add_option("--suggest-entity", sugg_entity, "Clicked suggestion entity");

  // explain
  Common explain_c;
  std::string doc_id;
  auto* explain_cmd = app.add_subcommand("explain", "Show how one document was scored");
  add_common(explain_cmd, explain_c);
  explain_cmd->add_option("-q,--query", query, "Query text")->required();
  explain_cmd->add_option("-u,--user", user, "Searcher user_id")->required();
  explain_cmd->add_option("-d,--doc", doc_id, "Document id")->required();
  explain_cmd->add_option("--ranker", ranker_path, "Ranker config override (JSON)");
  explain_cmd->add_option("--suggest-intent", sugg_intent, "Clicked suggestion intent");
  explain_cmd->add_option("--suggest-entity", sugg_entity, "Clicked suggestion entity");

  // intents
  Common intents_c;
  auto* intents = app.add_subcommand("intents", "Show detected intents, pattern matches and entities");
  add_common(intents, intents_c);
  intents->add_option("-q,--query", query, "Query text")->required();
  intents->add_option("-u,--user", user, "Searcher user_id (optional)");
  intents->add_option("--suggest-intent", sugg_intent, "Clicked suggestion intent");
  intents->add_option("--suggest-entity", sugg_entity, "Clicked suggestion entity");

  // bvt
  Common bvt_c;
  std::string suite_path;
  auto* bvt = app.add_subcommand("bvt", "Run a BVT suite; exit 4 when any case fails");
  add_common(bvt, bvt_c);
  bvt->add_option("--suite", suite_path, "BVT suite (JSONL); default: bvt_suite from the config");
  bvt->add_option("--ranker", ranker_path, "Ranker config override (JSON)");

  // tune
  Common tune_c;
  std::string spec_path;
  auto* tune_cmd = app.add_subcommand("tune", "Search ranker weights against the offline objective");
  add_common(tune_cmd, tune_c);
  tune_cmd->add_option("--spec", spec_path, "Tune spec (JSON)")->required()->check(CLI::ExistingFile);
  tune_cmd->add_option("--suite", suite_path, "BVT suite (JSONL); default: bvt_suite from the config");
  tune_cmd->add_option("--ranker", ranker_path, "Initial ranker config (JSON)");

  // abtest
  Common ab_c;
  std::string arm_a, arm_b;
  std::vector<std::string> metrics = {"sgcr", "ndcg", "err"};
  std::size_t ab_k = 10, resamples = 10000;
  auto* ab = app.add_subcommand("abtest", "Compare two ranker configs with a paired bootstrap");
  add_common(ab, ab_c);
  ab->add_option("--a", arm_a, "Control ranker config (default: engine ranker)");
  ab->add_option("--b", arm_b, "Test ranker config (default: engine ranker)");
  ab->add_option("--metrics", metrics, "Metrics: sgcr ndcg err")->capture_default_str();
  ab->add_option("-k,--k", ab_k, "Metric cutoff")->capture_default_str();
  ab->add_option("--resamples", resamples, "Bootstrap resamples")->capture_default_str();
  ab->add_option("--suite", suite_path, "BVT suite (JSONL); default: bvt_suite from the config");

  // train
  Common train_c;
  std::vector<std::string> features = {"doc_gcr", "gcr_qd", "ctr_qd", "social", "bm25", "bias1"};
  TrainParams tp;
  auto* train = app.add_subcommand("train", "Fit the engagement model on the query log");
  add_common(train, train_c);
  train->add_option("--features", features, "Feature names")->capture_default_str();
  train->add_option("--iterations", tp.iterations, "Gradient steps")->capture_default_str();
  train->add_option("--lr", tp.learning_rate, "Learning rate")->capture_default_str();
  train->add_option("--l2", tp.l2, "L2 penalty")->capture_default_str();
  train->add_option("--batch", tp.batch_size, "Mini-batch size (0 = full batch)")->capture_default_str();

  // serve
  Common serve_c;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve GET /search and GET /explain over HTTP");
  add_common(serve, serve_c);
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (ingest->parsed()) {
    CorpusPaths paths;
    std::int64_t now = std::numeric_limits<std::int64_t>::max();
    if (!corpus_dir.empty()) {
      paths = CorpusPaths::in_directory(corpus_dir);
    } else if (!ingest_c.config.empty()) {
      const auto cfg = load_engine_config(ingest_c.config);
      paths = cfg.corpus;
      if (cfg.now > 0) now = cfg.now;
    } else {
      throw ConfigError("ingest needs --corpus or --config");
    }
    const Corpus corpus = load_corpus(paths, now);
    std::string summary;
    for (const auto& [type, n] : corpus.counts_by_type()) summary += fmt::format("documents {} {}\n", type, n);
    summary += fmt::format("users {}\nedges {}\nqueries {}\njudgments {}\n", corpus.users().size(),
                           corpus.graph().edges().size(), corpus.queries().size(), corpus.judgments().size());
    for (const auto& w : corpus.warnings()) summary += "warning: " + w + "\n";
    if (!ingest_c.out.empty()) save_corpus(corpus, ingest_c.out);
    std::cout << summary;
    return kExitOk;
  }

  const Common& c = ingest->parsed()       ? ingest_c
                    : index->parsed()      ? index_c
                    : search->parsed()     ? search_c
                    : explain_cmd->parsed() ? explain_c
                    : intents->parsed()    ? intents_c
                    : bvt->parsed()        ? bvt_c
                    : tune_cmd->parsed()   ? tune_c
                    : ab->parsed()         ? ab_c
                    : train->parsed()      ? train_c
                                           : serve_c;
  const EngineConfig cfg = load_engine_config(c.config);
  const Engine engine = load_engine(cfg);

  if (index->parsed()) {
    if (c.out.empty()) throw ConfigError("index needs --out for the snapshot file");
    engine.index().save(c.out);
    std::cout << fmt::format("documents {}\nshards {}\nterms {}\n", engine.index().stats().num_docs,
                             engine.index().num_shards(), engine.index().stats().df.size());
    return kExitOk;
  }

  if (search->parsed()) {
    RankerConfig rc = load_ranker(ranker_path, engine.ranker());
    if (k > 0) rc.k_final = k;
    const auto list = engine.search({query, user, suggestion_of(sugg_intent, sugg_entity)}, rc);
    Output out(c.out);
    out.stream() << render_ranked(list, engine.corpus());
    if (!trace_path.empty()) {
      std::ofstream tf(trace_path);
      if (!tf) throw DataError("cannot write '" + trace_path + "'");
      for (const auto& t : list.traces) tf << to_json(t).dump() << '\n';
    }
    return kExitOk;
  }

  if (explain_cmd->parsed()) {
    const RankerConfig rc = load_ranker(ranker_path, engine.ranker());
    Output out(c.out);
    out.stream() << render_explain(engine, {query, user, suggestion_of(sugg_intent, sugg_entity)}, doc_id, rc);
    return kExitOk;
  }

  if (intents->parsed()) {
    UserContext anon;
    const UserContext* u = &anon;
    if (!user.empty()) {
      u = engine.corpus().find_user(user);
      if (!u) throw NotFoundError("unknown user_id '" + user + "'");
    }
    auto ctx = QueryContext::make(query, *u, &engine.corpus().graph(), engine.now());
    ctx.suggestion = suggestion_of(sugg_intent, sugg_entity);
    Output out(c.out);
    out.stream() << render_intents(engine.analyze(ctx));
    return kExitOk;
  }

  if (bvt->parsed()) {
    const auto suite = suite_from(suite_path, cfg);
    const auto rep = run_bvts(suite, engine, load_ranker(ranker_path, engine.ranker()));
    if (!c.out.empty()) {
      Output out(c.out);
      const auto report = to_json(rep);
      for (const auto& cr : report["cases"]) out.stream() << cr.dump() << '\n';
    }
    std::cout << fmt::format("bvt pass {}/{} ({:.4f})\n", rep.overall.passes, rep.overall.total, rep.overall.rate());
    for (const auto& [intent, pr] : rep.by_intent)
      std::cout << fmt::format("intent {} {}/{} ({:.4f})\n", intent, pr.passes, pr.total, pr.rate());
    for (const auto& [lang, pr] : rep.by_language)
      std::cout << fmt::format("language {} {}/{} ({:.4f})\n", lang, pr.passes, pr.total, pr.rate());
    for (const auto& cr : rep.cases)
      if (cr.status != CaseStatus::pass)
        std::cout << fmt::format("{} {}: {}{}\n", to_string(cr.status), cr.case_id,
                                 cr.failed_expectation ? "'" + *cr.failed_expectation + "' " : std::string(),
                                 cr.message);
    return rep.overall.passes == rep.overall.total ? kExitOk : kExitBvtFailures;
  }

  if (tune_cmd->parsed()) {
    std::ifstream in(spec_path);
    TuneSpec spec = tune_spec_from_json(json::parse(in));
    spec.seed = c.seed;
    TuningAssets assets{engine.corpus().queries(), engine.corpus().judgments(), {}};
    if (spec.gamma > 0.0 || !suite_path.empty() || !cfg.bvt_suite_path.empty()) assets.suite = suite_from(suite_path, cfg);
    const EngineObjective objective(engine, assets, spec);
    const auto result = tune(load_ranker(ranker_path, engine.ranker()), spec, objective);
    Output out(c.out);
    out.stream() << to_json(result, spec).dump() << '\n';
    std::cerr << fmt::format("objective {:.6f} -> {:.6f}, {} evaluations, {} rejected{}\n", result.initial_objective,
                             result.best_objective, result.evaluations, result.rejections,
                             result.incomplete ? ", incomplete" : "");
    return kExitOk;
  }

  if (ab->parsed()) {
    const auto a = load_ranker(arm_a, engine.ranker());
    const auto b = load_ranker(arm_b, engine.ranker());
    std::vector<BVTCase> suite;
    if (!suite_path.empty() || !cfg.bvt_suite_path.empty()) suite = suite_from(suite_path, cfg);
    ABOptions opts{metrics, ab_k, resamples, c.seed};
    const auto rep = ab_compare(engine, a, b, engine.corpus().queries(), engine.corpus().judgments(), suite, opts);
    Output out(c.out);
    const auto report = to_json(rep);
    for (const auto& m : report["metrics"]) out.stream() << m.dump() << '\n';
    out.stream() << json{{"bvt", report["bvt"]}}.dump() << '\n';
    return kExitOk;
  }

  if (train->parsed()) {
    tp.seed = c.seed;
    std::size_t skipped = 0;
    const auto data = engine.engagement_dataset(engine.corpus().queries(), features, &skipped);
    const auto report = train_engagement(data, tp);
    Output out(c.out);
    out.stream() << to_json(report.model).dump() << '\n';
    std::cerr << fmt::format("rows {} skipped_records {} loss {:.6f} auc {:.6f}\n", data.rows.size(), skipped,
                             report.loss, report.auc);
    return kExitOk;
  }

  if (serve->parsed()) {
    httplib::Server server;
    server.Get("/search", [&](const httplib::Request& req, httplib::Response& res) {
      try {
        RankerConfig rc = engine.ranker();
        if (req.has_param("k")) rc.k_final = std::stoul(req.get_param_value("k"));
        const auto list = engine.search({req.get_param_value("q"), req.get_param_value("user"), std::nullopt}, rc);
        res.set_content(render_ranked(list, engine.corpus()), "text/plain");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(std::string("error: ") + e.what() + "\n", "text/plain");
      }
    });
    server.Get("/explain", [&](const httplib::Request& req, httplib::Response& res) {
      try {
        res.set_content(render_explain(engine, {req.get_param_value("q"), req.get_param_value("user"), std::nullopt},
                                       req.get_param_value("doc"), engine.ranker()),
                        "text/plain");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(std::string("error: ") + e.what() + "\n", "text/plain");
      }
    });
    std::cerr << fmt::format("listening on {}:{}\n", host, port);
    if (!server.listen(host, port)) throw DataError(fmt::format("cannot bind {}:{}", host, port));
    return kExitOk;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const pirank::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}
