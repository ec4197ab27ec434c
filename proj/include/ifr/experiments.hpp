// Baselines, ablations, transfer evaluation and result rendering: the
// method semantics behind the eval/transfer/ablate-edges/curve commands.

#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ifr/adaptation.hpp"
#include "ifr/generator.hpp"
#include "ifr/metrics.hpp"
#include "ifr/nets.hpp"
#include "ifr/trainer.hpp"

namespace ifr {

enum class MethodId {
  random,
  abla_no_binary_prior,
  abla_no_scene_prior,
  abla_random_explore,
  abla_random_adapt,
  prior_only,
  ours_final,
  exhaustive,
};

inline std::string to_string(MethodId m) {
  switch (m) {
    case MethodId::random: return "random";
    case MethodId::abla_no_binary_prior: return "abla_no_binary_prior";
    case MethodId::abla_no_scene_prior: return "abla_no_scene_prior";
    case MethodId::abla_random_explore: return "abla_random_explore";
    case MethodId::abla_random_adapt: return "abla_random_adapt";
    case MethodId::prior_only: return "prior_only";
    case MethodId::ours_final: return "ours_final";
    case MethodId::exhaustive: return "exhaustive";
  }
  return "?";
}

inline MethodId method_from_string(const std::string& s) {
  for (MethodId m : {MethodId::random, MethodId::abla_no_binary_prior, MethodId::abla_no_scene_prior,
                     MethodId::abla_random_explore, MethodId::abla_random_adapt, MethodId::prior_only,
                     MethodId::ours_final, MethodId::exhaustive})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown method id '" + s + "'");
}

inline AdaptationConfig budget_from_string(const std::string& s) {
  AdaptationConfig cfg;
  if (s == "frac10") {
    cfg.mode = AdaptationConfig::Mode::budget_fraction;
    cfg.budget_fraction = 0.10;
  } else if (s == "frac20") {
    cfg.mode = AdaptationConfig::Mode::budget_fraction;
    cfg.budget_fraction = 0.20;
  } else if (s == "certainty") {
    cfg.mode = AdaptationConfig::Mode::certainty;
  } else {
    throw std::invalid_argument("unknown budget mode '" + s + "' (frac10|frac20|certainty)");
  }
  return cfg;
}

struct LoadedModel {
  RelationNets nets;
  ParamStore store;
};

inline LoadedModel load_relation_model(const std::filesystem::path& ckpt) {
  LoadedModel m;
  m.store.load(ckpt);
  return m;
}

// ---------------------------------------------------------------------------
// Per-scene prediction dump: edge list with scores, observed flags and the
// interaction order, for external plotting.
// ---------------------------------------------------------------------------

inline json scene_dump(const Scene& scene, const Tensor& final_belief,
                       const RelationGraph& prediction,
                       const std::vector<InteractionRecord>& log) {
  json j;
  j["scene_id"] = scene.scene_id;
  j["family"] = scene.family;
  json order = json::array();
  for (const auto& rec : log) order.push_back(rec.trigger);
  j["interaction_order"] = order;
  std::set<std::size_t> observed;
  for (const auto& rec : log) observed.insert(rec.trigger);
  json edges = json::array();
  const std::size_t n = scene.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      if (!prediction.edge(i, k) && !scene.ground_truth.edge(i, k)) continue;
      edges.push_back({{"from", i},
                       {"to", k},
                       {"score", final_belief.at(i, k)},
                       {"predicted", prediction.edge(i, k)},
                       {"truth", scene.ground_truth.edge(i, k)},
                       {"observed", observed.count(i) > 0}});
    }
  j["edges"] = edges;
  return j;
}

// ---------------------------------------------------------------------------
// Method runner
// ---------------------------------------------------------------------------

struct MethodRun {
  MetricsReport report;
  std::vector<json> dumps;
};

// The random baseline predicts exactly the union of observed positive
// pairs, which makes its precision 1 whenever it observed anything.
inline void run_random_baseline(const Scene& scene, const AdaptationConfig& budget, Rng& rng,
                                MetricsReport& report, std::vector<json>* dumps) {
  const std::size_t n = scene.size();
  std::size_t k = n;
  if (budget.mode == AdaptationConfig::Mode::budget_fraction)
    k = std::min<std::size_t>(
        static_cast<std::size_t>(std::ceil(budget.budget_fraction * static_cast<double>(n))), n);
  std::vector<std::size_t> candidates(n);
  std::iota(candidates.begin(), candidates.end(), 0);
  rng.shuffle(candidates);
  Environment env(scene);
  Tensor prior({n, n}, 0.5);
  env.reset(prior, n);
  RelationGraph pred(n);
  Tensor belief = Tensor::zeros({n, n});
  std::vector<InteractionRecord> log;
  for (std::size_t t = 0; t < k; ++t) {
    const std::size_t i = candidates[t];
    StepResult sr = env.step(i);
    log.push_back(InteractionRecord{scene.scene_id, t, i, effects_to_bits(sr.observation.effects),
                                    sr.reward});
    for (std::size_t j = 0; j < n; ++j)
      if (sr.observation.effects[j]) {
        pred.set_edge(i, j, 0);
        belief.at(i, j) = 1.0;
      }
  }
  report.add_scene(scene.scene_id, pred, scene.ground_truth, k);
  if (dumps) dumps->push_back(scene_dump(scene, belief, pred, log));
}

inline MethodRun run_method(const std::vector<Scene>& scenes, MethodId method,
                            AdaptationConfig budget, LoadedModel* model, std::uint64_t seed,
                            bool want_dumps = false, EdgeParams edge_override = {},
                            bool use_edge_override = false) {
  MethodRun run;
  run.report.observation_only = (method == MethodId::random);
  Rng rng(seed ^ 0x5f3759df9e3779b9ULL);

  if (method != MethodId::random && model == nullptr)
    throw std::invalid_argument("run_method: method '" + to_string(method) +
                                "' requires a checkpoint");

  for (const auto& scene : scenes) {
    if (method == MethodId::random) {
      run_random_baseline(scene, budget, rng, run.report, want_dumps ? &run.dumps : nullptr);
      continue;
    }

    RelationNets nets = model->nets;
    if (use_edge_override) nets.edges = edge_override;
    ParamStore& store = model->store;
    Tensor geom = nets.encode_scene(store, scene);
    Tensor br = nets.br_prior(store, scene);

    if (method == MethodId::prior_only) {
      // Scene prior thresholded at 0.5, zero interactions.
      Tensor prior = nets.sr_prior(store, geom, scene, br);
      RelationGraph pred = threshold_graph(prior, 0.5);
      run.report.add_scene(scene.scene_id, pred, scene.ground_truth, 0);
      if (want_dumps) run.dumps.push_back(scene_dump(scene, prior, pred, {}));
      continue;
    }

    Tensor initial;
    if (method == MethodId::abla_no_binary_prior) {
      // Scene prior computed with every input edge forced to w = 1.
      RelationNets ablated = nets;
      ablated.edges.mode = EdgeParams::Mode::all_ones;
      initial = ablated.scene_scores(store, geom, scene, br);
    } else if (method == MethodId::abla_no_scene_prior) {
      initial = br;  // adaptation starts from the binary prior
    } else {
      initial = nets.sr_prior(store, geom, scene, br);
    }

    AdaptationConfig cfg = budget;
    if (method == MethodId::exhaustive) {
      cfg.mode = AdaptationConfig::Mode::budget_fraction;
      cfg.budget_fraction = 1.0;
    }
    Rng scene_rng = rng.split(std::hash<std::string>{}(scene.scene_id));
    Rng* random_pick = (method == MethodId::abla_random_adapt) ? &scene_rng : nullptr;
    auto res = run_adaptation(scene, nets, store, initial, cfg, random_pick, &geom);
    run.report.add_scene(scene.scene_id, res.prediction, scene.ground_truth, res.interactions);
    if (want_dumps)
      run.dumps.push_back(scene_dump(scene, res.final_belief, res.prediction, res.log));
  }
  run.report.finalize();
  return run;
}

// ---------------------------------------------------------------------------
// Transfer evaluation: test on a foreign family, with recall over pairs
// involving categories unseen in the training family reported separately.
// ---------------------------------------------------------------------------

struct TransferReport {
  MetricsReport report;
  double unseen_pair_recall = 0.0;
  std::int64_t unseen_pairs = 0;
  bool degenerate = false;  // train family == test family
};

inline TransferReport run_transfer(const std::vector<Scene>& train_family_scenes,
                                   const std::vector<Scene>& test_family_scenes,
                                   const std::string& train_family, const std::string& test_family,
                                   LoadedModel& model, AdaptationConfig budget) {
  TransferReport tr;
  if (train_family == test_family) {
    tr.degenerate = true;
    std::cerr << "warning: transfer with identical train/test family '" << train_family << "'\n";
  }
  std::set<int> seen_categories;
  for (const auto& s : train_family_scenes)
    for (const auto& o : s.objects) seen_categories.insert(o.category_id);

  std::int64_t unseen_tp = 0, unseen_fn = 0;
  MethodRun run = run_method(test_family_scenes, MethodId::ours_final, budget, &model, 0);
  tr.report = run.report;
  // Re-walk predictions for the unseen-pair bookkeeping.
  for (const auto& scene : test_family_scenes) {
    Tensor geom = model.nets.encode_scene(model.store, scene);
    Tensor br = model.nets.br_prior(model.store, scene);
    Tensor prior = model.nets.sr_prior(model.store, geom, scene, br);
    auto res = run_adaptation(scene, model.nets, model.store, prior, budget, nullptr, &geom);
    for (std::size_t i = 0; i < scene.size(); ++i)
      for (std::size_t j = 0; j < scene.size(); ++j) {
        if (!scene.ground_truth.edge(i, j)) continue;
        const bool unseen = !seen_categories.count(scene.objects[i].category_id) ||
                            !seen_categories.count(scene.objects[j].category_id);
        if (!unseen) continue;
        ++tr.unseen_pairs;
        if (res.prediction.edge(i, j))
          ++unseen_tp;
        else
          ++unseen_fn;
      }
  }
  tr.unseen_pair_recall =
      (unseen_tp + unseen_fn) > 0
          ? static_cast<double>(unseen_tp) / static_cast<double>(unseen_tp + unseen_fn)
          : 0.0;
  return tr;
}

// ---------------------------------------------------------------------------
// Result rendering
// ---------------------------------------------------------------------------

struct ResultRow {
  std::string method;
  std::string budget;
  MetricValues values;
  double mean_interactions = 0.0;
};

inline std::string render_table(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(24) << "method" << std::setw(11) << "budget" << std::right
     << std::setw(8) << "P" << std::setw(8) << "R" << std::setw(8) << "F1" << std::setw(8) << "MCC"
     << std::setw(8) << "inter" << '\n';
  os << std::string(75, '-') << '\n';
  os << std::fixed << std::setprecision(3);
  for (const auto& r : rows) {
    os << std::left << std::setw(24) << r.method << std::setw(11) << r.budget << std::right
       << std::setw(8) << r.values.precision << std::setw(8) << r.values.recall << std::setw(8)
       << r.values.f1 << std::setw(8) << r.values.mcc << std::setw(8) << std::setprecision(2)
       << r.mean_interactions << std::setprecision(3) << '\n';
  }
  return os.str();
}

inline json results_json(const std::vector<ResultRow>& rows) {
  json j = json::array();
  for (const auto& r : rows)
    j.push_back({{"method", r.method},
                 {"budget", r.budget},
                 {"precision", r.values.precision},
                 {"recall", r.values.recall},
                 {"f1", r.values.f1},
                 {"mcc", r.values.mcc},
                 {"mean_interactions", r.mean_interactions}});
  return j;
}

// Header documents the 0/0-precision convention so reports are
// self-describing.
inline void write_results(const std::filesystem::path& dir, const std::vector<ResultRow>& rows,
                          const std::vector<json>* dumps = nullptr) {
  std::filesystem::create_directories(dir);
  std::ofstream table(dir / "results.txt");
  table << "# pair universe: all n^2 ordered pairs incl. diagonal\n"
        << "# 0/0 precision -> 1.0 for observation-only predictors, else 0.0\n";
  table << render_table(rows);
  std::ofstream jf(dir / "results.json");
  jf << results_json(rows).dump(1) << '\n';
  if (dumps) {
    std::filesystem::create_directories(dir / "graphs");
    for (const auto& d : *dumps) {
      std::ofstream df(dir / "graphs" / (d.at("scene_id").get<std::string>() + ".json"));
      df << d.dump(1) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Edge-initialization ablation: prior-only / distance-only edges plus a
// sweep over the proximity weight, all through the same runner.
// ---------------------------------------------------------------------------

inline std::vector<ResultRow> ablate_edges(const std::vector<Scene>& scenes, LoadedModel& model,
                                           AdaptationConfig budget, const std::string& budget_name) {
  std::vector<ResultRow> rows;
  auto eval = [&](const std::string& label, EdgeParams params) {
    MethodRun run =
        run_method(scenes, MethodId::ours_final, budget, &model, 0, false, params, true);
    rows.push_back(ResultRow{label, budget_name, run.report.aggregate, run.report.mean_interactions});
  };
  eval("edges_prior_only", EdgeParams{0.5, 0.6, EdgeParams::Mode::prior_only});
  eval("edges_distance_only", EdgeParams{0.5, 0.6, EdgeParams::Mode::distance_only});
  for (double gamma : {0.4, 0.6, 0.8, 1.0}) {
    char label[48];
    std::snprintf(label, sizeof(label), "edges_gamma_%.1f", gamma);
    eval(label, EdgeParams{0.5, gamma, EdgeParams::Mode::combined});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// F1-vs-interactions curve (mean over scenes; scenes that finish early hold
// their final value).
// ---------------------------------------------------------------------------

inline std::vector<std::pair<std::size_t, double>> f1_curve(const std::vector<Scene>& scenes,
                                                            LoadedModel& model, double tau = 0.9) {
  std::vector<std::vector<double>> per_scene;
  std::size_t max_t = 0;
  AdaptationConfig cfg;
  cfg.mode = AdaptationConfig::Mode::budget_fraction;
  cfg.budget_fraction = 1.0;
  cfg.decision_threshold = tau;
  for (const auto& scene : scenes) {
    Tensor geom = model.nets.encode_scene(model.store, scene);
    Tensor br = model.nets.br_prior(model.store, scene);
    Tensor prior = model.nets.sr_prior(model.store, geom, scene, br);
    auto res = run_adaptation(scene, model.nets, model.store, prior, cfg, nullptr, &geom);
    std::vector<double> f1s;
    for (const auto& belief : res.belief_history) {
      RelationGraph pred = threshold_graph(belief, tau);
      f1s.push_back(compute_metrics(pred, scene.ground_truth).f1);
    }
    max_t = std::max(max_t, f1s.size());
    per_scene.push_back(std::move(f1s));
  }
  std::vector<std::pair<std::size_t, double>> curve;
  for (std::size_t t = 0; t < max_t; ++t) {
    double sum = 0.0;
    for (const auto& f1s : per_scene) sum += t < f1s.size() ? f1s[t] : f1s.back();
    curve.push_back({t, sum / static_cast<double>(per_scene.size())});
  }
  return curve;
}

inline void write_curve(const std::filesystem::path& path,
                        const std::vector<std::pair<std::size_t, double>>& curve) {
  std::ofstream os(path);
  os << "t,f1\n";
  for (const auto& [t, f1] : curve) os << t << ',' << std::setprecision(10) << f1 << '\n';
}

}  // namespace ifr
