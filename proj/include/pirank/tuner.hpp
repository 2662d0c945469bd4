#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pirank/combiner.hpp"
#include "pirank/engine.hpp"
#include "pirank/error.hpp"
#include "pirank/eval.hpp"

namespace pirank {

/// Candidate values of one free parameter: explicit `values`, or the
/// geometric sequence lo, lo*factor, ... up to hi (optionally with 0).
struct Grid {
  double lo = 0.125;
  double hi = 8.0;
  double factor = 2.0;
  bool include_zero = false;
  std::vector<double> values;

  std::vector<double> points() const {
    if (!values.empty()) return values;
    if (!(lo > 0.0 && hi >= lo && factor > 1.0)) throw ConfigError("grid needs 0 < lo <= hi and factor > 1");
    std::vector<double> out;
    if (include_zero) out.push_back(0.0);
    for (double v = lo; v <= hi * (1.0 + 1e-12); v *= factor) out.push_back(v);
    return out;
  }
};

/// A tunable weight. Paths: "generic.<component_id>", "intent.<intent_id>"
/// or "theta".
struct FreeParam {
  std::string path;
  Grid grid;
};

inline double get_param(const RankerConfig& c, const std::string& path) {
  if (path == "theta") return c.theta;
  if (path.rfind("generic.", 0) == 0) return detail::weight_of(c.generic_weights, path.substr(8));
  if (path.rfind("intent.", 0) == 0) return detail::weight_of(c.intent_weights, path.substr(7));
  throw ConfigError("unknown parameter path '" + path + "' (expected generic.<id>, intent.<id> or theta)");
}

inline void set_param(RankerConfig& c, const std::string& path, double v) {
  if (path == "theta") {
    c.theta = v;
  } else if (path.rfind("generic.", 0) == 0) {
    c.generic_weights[path.substr(8)] = v;
  } else if (path.rfind("intent.", 0) == 0) {
    c.intent_weights[path.substr(7)] = v;
  } else {
    throw ConfigError("unknown parameter path '" + path + "' (expected generic.<id>, intent.<id> or theta)");
  }
}

struct TuneSpec {
  std::vector<FreeParam> params;
  double alpha = 1.0 / 3.0;  // SGCR
  double beta = 1.0 / 3.0;   // NDCG
  double gamma = 1.0 / 3.0;  // BVT pass rate
  std::size_t k = 10;
  std::size_t budget = 100;
  std::size_t restarts = 0;
  std::uint64_t seed = 0;
  double epsilon = 0.02;

  void validate() const {
    for (double w : {alpha, beta, gamma})
      if (!(std::isfinite(w) && w >= 0.0)) throw ConfigError("objective weights must be finite and nonnegative");
    if (std::abs(alpha + beta + gamma - 1.0) > 1e-9) throw ConfigError("objective weights alpha + beta + gamma must sum to 1");
    if (budget == 0) throw ConfigError("tuning budget must be positive");
    if (!(epsilon >= 0.0)) throw ConfigError("guardrail epsilon must be nonnegative");
    for (const auto& p : params) {
      get_param(RankerConfig{}, p.path);
      if (p.grid.points().empty()) throw ConfigError("parameter '" + p.path + "' has an empty grid");
    }
  }
};

/// {"params": [{"path", "lo", "hi", "factor", "include_zero"} | {"path", "values"}],
///  "alpha", "beta", "gamma", "k", "budget", "restarts", "seed", "epsilon"}
inline TuneSpec tune_spec_from_json(const nlohmann::json& j) {
  TuneSpec s;
  for (const auto& pj : j.at("params")) {
    FreeParam p;
    p.path = pj.at("path").get<std::string>();
    p.grid.lo = pj.value("lo", p.grid.lo);
    p.grid.hi = pj.value("hi", p.grid.hi);
    p.grid.factor = pj.value("factor", p.grid.factor);
    p.grid.include_zero = pj.value("include_zero", false);
    if (pj.contains("values")) p.grid.values = pj["values"].get<std::vector<double>>();
    s.params.push_back(std::move(p));
  }
  s.alpha = j.value("alpha", s.alpha);
  s.beta = j.value("beta", s.beta);
  s.gamma = j.value("gamma", s.gamma);
  s.k = j.value("k", s.k);
  s.budget = j.value("budget", s.budget);
  s.restarts = j.value("restarts", s.restarts);
  s.seed = j.value("seed", s.seed);
  s.epsilon = j.value("epsilon", s.epsilon);
  s.validate();
  return s;
}

/// What an evaluator reports for one configuration.
struct Evaluation {
  double objective = 0.0;
  std::map<std::string, double> bvt_rate_by_intent;
};

struct TrajectoryPoint {
  std::size_t index = 0;
  std::vector<double> values;
  double objective = 0.0;
  bool accepted = false;
  double best_so_far = 0.0;
};

struct TuneResult {
  RankerConfig best;
  double best_objective = 0.0;
  double initial_objective = 0.0;
  std::vector<TrajectoryPoint> trajectory;
  std::size_t evaluations = 0;
  std::size_t rejections = 0;
  /// The budget ran out before one full coordinate sweep finished.
  bool incomplete = false;
};

inline bool passes_guardrail(const Evaluation& e, const std::map<std::string, double>& baseline, double epsilon) {
  for (const auto& [intent, base] : baseline) {
    auto it = e.bvt_rate_by_intent.find(intent);
    const double rate = it == e.bvt_rate_by_intent.end() ? 0.0 : it->second;
    if (rate < base - epsilon - 1e-12) return false;
  }
  return true;
}

/// Coordinate descent over the parameter grids, followed by `restarts`
/// descents from seeded random grid points. A move is taken only on strict
/// improvement, the earliest grid value winning ties. Candidates that drop
/// any intent's BVT pass rate more than epsilon below the starting
/// configuration are rejected. Each distinct configuration is evaluated
/// once; repeats come from the cache and cost no budget.
template <typename Evaluate>
TuneResult tune(const RankerConfig& initial, const TuneSpec& spec, Evaluate&& evaluate) {
  spec.validate();
  const std::size_t np = spec.params.size();
  std::vector<std::vector<double>> grids;
  for (const auto& p : spec.params) grids.push_back(p.grid.points());

  auto config_of = [&](const std::vector<double>& v) {
    RankerConfig c = initial;
    for (std::size_t i = 0; i < np; ++i) set_param(c, spec.params[i].path, v[i]);
    return c;
  };

  TuneResult res;
  std::map<std::vector<double>, std::optional<double>> cache;  // nullopt = rejected
  std::map<std::string, double> baseline;
  std::vector<double> best_vals;
  bool exhausted = false;

  // Returns the objective, or nullopt for a rejected or unaffordable point.
  auto eval = [&](const std::vector<double>& v) -> std::optional<double> {
    if (auto it = cache.find(v); it != cache.end()) return it->second;
    if (res.evaluations >= spec.budget) {
      exhausted = true;
      return std::nullopt;
    }
    const Evaluation e = evaluate(config_of(v));
    ++res.evaluations;
    const bool first = res.trajectory.empty();
    if (first) baseline = e.bvt_rate_by_intent;
    const bool ok = first || passes_guardrail(e, baseline, spec.epsilon);
    if (!ok) ++res.rejections;
    if (ok && (first || e.objective > res.best_objective)) {
      res.best_objective = e.objective;
      best_vals = v;
    }
    res.trajectory.push_back({res.trajectory.size(), v, e.objective, ok, res.best_objective});
    std::optional<double> out;
    if (ok) out = e.objective;
    cache.emplace(v, out);
    return out;
  };

  auto descend = [&](std::vector<double> cur, double cur_obj, bool* swept) {
    for (;;) {
      bool improved = false;
      for (std::size_t p = 0; p < np; ++p) {
        std::optional<std::size_t> pick;
        double pick_obj = cur_obj;
        for (std::size_t g = 0; g < grids[p].size(); ++g) {
          if (grids[p][g] == cur[p]) continue;
          auto cand = cur;
          cand[p] = grids[p][g];
          const auto obj = eval(cand);
          if (exhausted) return;
          if (obj && *obj > pick_obj) {
            pick = g;
            pick_obj = *obj;
          }
        }
        if (pick) {
          cur[p] = grids[p][*pick];
          cur_obj = pick_obj;
          improved = true;
        }
      }
      if (swept) *swept = true;
      if (!improved) return;
    }
  };

  std::vector<double> start(np);
  for (std::size_t i = 0; i < np; ++i) start[i] = get_param(initial, spec.params[i].path);
  const double obj0 = *eval(start);
  res.initial_objective = obj0;

  bool swept = np == 0;
  descend(start, obj0, &swept);
  res.incomplete = !swept;

  std::mt19937_64 rng(spec.seed);
  for (std::size_t r = 0; r < spec.restarts && !exhausted && np > 0; ++r) {
    std::vector<double> v(np);
    for (std::size_t i = 0; i < np; ++i) {
      std::uniform_int_distribution<std::size_t> pick(0, grids[i].size() - 1);
      v[i] = grids[i][pick(rng)];
    }
    const auto obj = eval(v);
    if (exhausted) break;
    if (obj) descend(v, *obj, nullptr);
  }

  res.best = config_of(best_vals);
  return res;
}

inline nlohmann::json to_json(const TuneResult& r, const TuneSpec& spec) {
  nlohmann::json j;
  j["best"] = r.best.to_json();
  j["best_objective"] = r.best_objective;
  j["initial_objective"] = r.initial_objective;
  j["evaluations"] = r.evaluations;
  j["rejections"] = r.rejections;
  j["incomplete"] = r.incomplete;
  j["trajectory"] = nlohmann::json::array();
  for (const auto& t : r.trajectory) {
    nlohmann::json params;
    for (std::size_t i = 0; i < t.values.size(); ++i) params[spec.params[i].path] = t.values[i];
    j["trajectory"].push_back({{"index", t.index},
                               {"params", params},
                               {"objective", t.objective},
                               {"accepted", t.accepted},
                               {"best_so_far", t.best_so_far}});
  }
  return j;
}

// ---------------------------------------------------------------------------
// Engine-backed objective

struct TuningAssets {
  std::vector<QueryRecord> log;
  std::vector<RelevanceJudgment> judgments;
  std::vector<BVTCase> suite;
};

/// alpha * SGCR@k + beta * NDCG@k + gamma * BVT pass rate.
class EngineObjective {
 public:
  EngineObjective(const Engine& engine, const TuningAssets& assets, const TuneSpec& spec)
      : engine_(engine), assets_(assets), spec_(spec) {
    if (spec.alpha > 0.0 && assets.log.empty()) throw DataError("objective needs a query log (alpha > 0)");
    if (spec.beta > 0.0 && assets.judgments.empty()) throw DataError("objective needs relevance judgments (beta > 0)");
    if (spec.gamma > 0.0 && assets.suite.empty()) throw DataError("objective needs a BVT suite (gamma > 0)");
  }

  Evaluation operator()(const RankerConfig& config) const {
    Evaluation e;
    double obj = 0.0;
    if (spec_.alpha > 0.0) obj += spec_.alpha * sgcr_replay(engine_, config, assets_.log, spec_.k).value;
    if (spec_.beta > 0.0) obj += spec_.beta * mean_ndcg(engine_, config, assets_.judgments, spec_.k).value;
    if (!assets_.suite.empty()) {
      const auto rep = run_bvts(assets_.suite, engine_, config);
      e.bvt_rate_by_intent = rep.intent_rates();
      obj += spec_.gamma * rep.overall.rate();
    }
    e.objective = obj;
    return e;
  }

 private:
  const Engine& engine_;
  const TuningAssets& assets_;
  const TuneSpec& spec_;
};

}  // namespace pirank
