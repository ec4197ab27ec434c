// Training-time system: rollout collection under a global interaction
// budget, the alternating supervision of the prior/posterior nets from
// collected observations, and clipped-surrogate policy-gradient updates.

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "ifr/adaptation.hpp"
#include "ifr/environment.hpp"
#include "ifr/metrics.hpp"
#include "ifr/nets.hpp"
#include "ifr/optim.hpp"
#include "ifr/policy.hpp"
#include "ifr/scene.hpp"

namespace ifr {

struct PolicyStep {
  std::size_t scene_index = 0;
  Tensor belief;          // state snapshot before the action
  std::size_t action = 0; // 0..n-1 = trigger object, n = stop
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;     // baseline estimate at collection time
};

struct EpisodeTrace {
  std::size_t scene_index = 0;
  std::string scene_id;
  std::vector<PolicyStep> steps;
};

struct SceneObservations {
  std::size_t scene_index = 0;
  std::vector<std::size_t> order;  // distinct interacted triggers, first-occurrence order
  ObservationSet observations;
};

struct PpoConfig {
  double clip = 0.2;
  double discount = 0.99;
  int epochs = 4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  std::size_t minibatch = 64;
};

struct TrainConfig {
  std::size_t budget = 1000;       // global interactions per collection loop
  int loops = 6;
  int supervised_epochs = 3;
  std::size_t supervised_scene_cap = 0;  // 0 = no cap
  PpoConfig ppo;
  double class_weight_cap = 20.0;
  double val_fraction = 0.15;
  int plateau_patience = 3;
  double plateau_min_delta = 0.002;
  bool random_explore = false;  // ablation: uniform action choice during collection
  bool stop_action = true;
  std::uint64_t seed = 1;
};

struct CollectResult {
  std::vector<EpisodeTrace> traces;
  std::vector<SceneObservations> observations;
  std::size_t total_interactions = 0;
  double mean_reward = 0.0;
  bool empty = false;
};

// Rows supervised by the posterior pass at step t (1-based, t < m): the
// future interacted triggers i_{t+1}..i_m. Never-interacted triggers are
// never supervision targets.
inline std::vector<std::size_t> posterior_supervised_rows(const std::vector<std::size_t>& order,
                                                          std::size_t t) {
  if (t < 1 || t >= order.size())
    throw std::invalid_argument("posterior_supervised_rows: t must lie in [1, m)");
  return {order.begin() + static_cast<long>(t), order.end()};
}

// ---------------------------------------------------------------------------
// Rollout collection
// ---------------------------------------------------------------------------

inline std::vector<Tensor> encode_all(const RelationNets& nets, ParamStore& store,
                                      const std::vector<Scene>& scenes) {
  std::vector<Tensor> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(nets.encode_scene(store, s));
  return out;
}

// The agent walks the shuffled scene list once; every interaction consumes
// one unit of the global budget, the stop action (or the per-scene cap of n
// interactions) advances to the next scene. The evolving posterior is part
// of the state throughout.
inline CollectResult collect_rollouts(const std::vector<Scene>& scenes,
                                      const std::vector<Tensor>& geom_cache,
                                      const RelationNets& nets, ParamStore& relation_store,
                                      const PolicyNet& policy, ParamStore& policy_store,
                                      std::size_t budget, Rng& rng, bool random_explore,
                                      bool stop_action) {
  if (scenes.empty()) throw std::invalid_argument("collect_rollouts: empty scene list");
  CollectResult result;
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  std::size_t budget_left = budget;
  double reward_sum = 0.0;
  std::size_t reward_steps = 0;

  for (std::size_t scene_index : order) {
    if (budget_left == 0) break;
    const Scene& scene = scenes[scene_index];
    const Tensor& geom = geom_cache[scene_index];
    const std::size_t n = scene.size();

    Tensor br = nets.br_prior(relation_store, scene);
    Tensor belief = nets.sr_prior(relation_store, geom, scene, br);
    Environment env(scene);
    env.reset(belief, n);  // per-scene cap: n interactions

    EpisodeTrace trace;
    trace.scene_index = scene_index;
    trace.scene_id = scene.scene_id;
    ObservationSet observations;

    while (budget_left > 0 && env.state().budget_remaining > 0) {
      Tensor probs;
      double value = 0.0;
      {
        Tape tape;
        PolicyOutput out =
            policy.forward_traced(tape, policy_store, nets, geom, scene, env.state().belief);
        probs = out.distribution.val();
        value = out.value.val().data[0];
      }
      std::size_t action;
      double log_prob;
      if (random_explore) {
        action = rng.uniform_index(stop_action ? n + 1 : n);
        log_prob = -std::log(static_cast<double>(stop_action ? n + 1 : n));
      } else if (stop_action) {
        action = sample_categorical(probs, rng);
        log_prob = std::log(std::max(probs.data[action], 1e-300));
      } else {
        Tensor masked({n});
        double mass = 0.0;
        for (std::size_t i = 0; i < n; ++i) mass += probs.data[i];
        for (std::size_t i = 0; i < n; ++i) masked.data[i] = probs.data[i] / mass;
        action = sample_categorical(masked, rng);
        log_prob = std::log(std::max(masked.data[action], 1e-300));
      }

      PolicyStep step;
      step.scene_index = scene_index;
      step.belief = env.state().belief;
      step.action = action;
      step.log_prob = log_prob;
      step.value = value;

      if (action == n) {  // stop: free, ends the episode
        step.reward = 0.0;
        trace.steps.push_back(std::move(step));
        break;
      }
      StepResult sr = env.step(action);
      step.reward = sr.reward;
      reward_sum += sr.reward;
      ++reward_steps;
      --budget_left;
      ++result.total_interactions;
      observations[action] = sr.observation.effects;
      trace.steps.push_back(std::move(step));
      Tensor updated = nets.posterior_step(relation_store, geom, scene, env.state().belief,
                                           observations);
      env.update_belief(updated);
    }

    if (!trace.steps.empty()) result.traces.push_back(std::move(trace));
    if (!env.state().interaction_order.empty()) {
      SceneObservations so;
      so.scene_index = scene_index;
      so.order = env.state().interaction_order;
      so.observations = observations;
      result.observations.push_back(std::move(so));
    }
  }

  result.mean_reward = reward_steps ? reward_sum / static_cast<double>(reward_steps) : 0.0;
  if (result.total_interactions == 0) {
    result.empty = true;
    std::cerr << "warning: collection produced zero interactions (policy stopped everywhere)\n";
  }
  return result;
}

// Logged rewards must match an environment recomputation on the stored
// state snapshots; throws on the first mismatch.
inline void verify_trace_rewards(const std::vector<EpisodeTrace>& traces,
                                 const std::vector<Scene>& scenes) {
  for (const auto& trace : traces) {
    const Scene& scene = scenes[trace.scene_index];
    Environment env(scene);
    for (const auto& step : trace.steps) {
      if (step.action >= scene.size()) continue;  // stop
      const double r = reward_of(step.belief, step.action, env.observe(step.action));
      if (r != step.reward)
        throw std::runtime_error("trace replay: reward mismatch in scene '" + trace.scene_id + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Supervised training of BR prior + shared scene net
// ---------------------------------------------------------------------------

// BR is trained on all observed (i, j) pairs; the shared scene net gets a
// prior pass (supervising every observed row) and a chain of posterior
// passes, each clamping rows i_1..i_t and supervising the future rows
// i_{t+1}..i_m. All losses are class-weighted BCE.
inline void train_supervised(const std::vector<SceneObservations>& dataset,
                             const std::vector<Scene>& scenes, const RelationNets& nets,
                             ParamStore& store, const TrainConfig& cfg, Rng& rng) {
  if (dataset.empty()) {
    std::cerr << "warning: train_supervised called with an empty dataset; no-op\n";
    return;
  }

  auto class_weights = [&](const Tensor& target) {
    double pos = 0.0;
    for (double t : target.data) pos += t;
    const double neg = static_cast<double>(target.size()) - pos;
    double wpos = 1.0;
    if (pos > 0.0 && neg > 0.0) wpos = std::min(neg / pos, cfg.class_weight_cap);
    Tensor w(target.shape, 1.0);
    for (std::size_t i = 0; i < target.size(); ++i)
      if (target.data[i] == 1.0) w.data[i] = wpos;
    return w;
  };

  for (int epoch = 0; epoch < cfg.supervised_epochs; ++epoch) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::size_t cap = cfg.supervised_scene_cap ? cfg.supervised_scene_cap : order.size();
    for (std::size_t b = 0; b < std::min(cap, order.size()); ++b) {
      const SceneObservations& so = dataset[order[b]];
      const Scene& scene = scenes[so.scene_index];
      const std::size_t n = scene.size();
      const std::size_t m = so.order.size();

      // Supervision targets must be the ground-truth adjacency.
      for (const auto& [i, row] : so.observations)
        for (std::size_t j = 0; j < n; ++j)
          if ((row[j] != 0) != scene.ground_truth.edge(i, j))
            throw std::runtime_error("train_supervised: observation does not match ground truth");

      store.zero_grad();

      // BR pass: traced encoder, observed rows only.
      Tensor geom_detached;
      {
        Tape tape;
        Var feats = nets.encode_scene_traced(tape, store, scene);
        geom_detached = feats.val();
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        Tensor target({m * n, 1});
        std::size_t k = 0;
        for (std::size_t i : so.order)
          for (std::size_t j = 0; j < n; ++j) {
            pairs.push_back({i, j});
            target.data[k++] = scene.ground_truth.edge(i, j) ? 1.0 : 0.0;
          }
        Var scores = nets.br_pair_scores_traced(tape, store, feats, pairs);
        Var loss = bce_loss(scores, target, class_weights(target));
        tape.backward(loss);
      }

      // Full BR matrix (current weights, detached features) as the prior
      // pass's edge source.
      Tensor br_full({n, n});
      {
        Tape tape;
        Var feats = tape.leaf(geom_detached);
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) pairs.push_back({i, j});
        br_full = Tensor({n, n}, nets.br_pair_scores_traced(tape, store, feats, pairs).val().data);
      }

      auto supervised_rows_loss = [&](Var scores_nn, const std::vector<std::size_t>& rows) {
        Var picked = gather_rows(scores_nn, rows);
        Tensor target({rows.size(), n});
        std::size_t k = 0;
        for (std::size_t i : rows)
          for (std::size_t j = 0; j < n; ++j)
            target.data[k++] = scene.ground_truth.edge(i, j) ? 1.0 : 0.0;
        return bce_loss(picked, target, class_weights(target));
      };

      // Prior pass: edges from BR, supervise all observed rows.
      Tensor prior_out;
      {
        Tape tape;
        Var scores = nets.scene_scores_traced(tape, store, geom_detached, scene, br_full);
        prior_out = scores.val();
        Var loss = supervised_rows_loss(scores, so.order);
        tape.backward(loss);
      }

      // Posterior chain: pass t clamps rows i_1..i_t of the previous
      // output and supervises rows i_{t+1}..i_m of the new output.
      if (m >= 2) {
        Tensor belief = prior_out;
        ObservationSet clamped;
        const double pass_scale = 1.0 / static_cast<double>(m - 1);
        for (std::size_t t = 1; t < m; ++t) {
          clamped[so.order[t - 1]] = so.observations.at(so.order[t - 1]);
          Tensor input = belief;
          RelationNets::apply_observations(input, clamped, n);
          Tape tape;
          Var scores = nets.scene_scores_traced(tape, store, geom_detached, scene, input);
          Var loss = scale(supervised_rows_loss(scores, posterior_supervised_rows(so.order, t)),
                           pass_scale);
          tape.backward(loss);
          belief = scores.val();
          RelationNets::apply_observations(belief, clamped, n);
        }
      }

      store.adam_step();
    }
  }
}

// ---------------------------------------------------------------------------
// PPO update
// ---------------------------------------------------------------------------

// Clipped-surrogate update with advantage = discounted return - collection-
// time value baseline, multiple epochs over the trace batch, entropy bonus.
inline void policy_update(const std::vector<EpisodeTrace>& traces, const std::vector<Scene>& scenes,
                          const std::vector<Tensor>& geom_cache, const RelationNets& nets,
                          const PolicyNet& policy, ParamStore& policy_store, const PpoConfig& cfg,
                          Rng& rng, bool stop_action = true) {
  if (traces.empty()) throw std::invalid_argument("policy_update: no traces");

  struct FlatStep {
    const PolicyStep* step;
    std::size_t scene_index;
    double ret;
    double adv;
  };
  std::vector<FlatStep> flat;
  for (const auto& trace : traces) {
    double g = 0.0;
    std::vector<double> returns(trace.steps.size());
    for (std::size_t k = trace.steps.size(); k-- > 0;) {
      g = trace.steps[k].reward + cfg.discount * g;
      returns[k] = g;
    }
    for (std::size_t k = 0; k < trace.steps.size(); ++k)
      flat.push_back({&trace.steps[k], trace.scene_index, returns[k],
                      returns[k] - trace.steps[k].value});
  }

  // Advantage normalization (skipped when the batch is degenerate).
  double mean = 0.0;
  for (const auto& f : flat) mean += f.adv;
  mean /= static_cast<double>(flat.size());
  double var = 0.0;
  for (const auto& f : flat) var += (f.adv - mean) * (f.adv - mean);
  const double stddev = std::sqrt(var / static_cast<double>(flat.size()));
  if (stddev > 1e-8)
    for (auto& f : flat) f.adv = (f.adv - mean) / stddev;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(flat.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      const std::size_t end = std::min(order.size(), start + cfg.minibatch);
      const double inv = 1.0 / static_cast<double>(end - start);
      policy_store.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const FlatStep& f = flat[order[k]];
        const Scene& scene = scenes[f.scene_index];
        const std::size_t n = scene.size();
        Tape tape;
        PolicyOutput out = policy.forward_traced(tape, policy_store, nets, geom_cache[f.scene_index],
                                                 scene, f.step->belief);
        Var logp;
        if (stop_action) {
          logp = log_op(clamp_op(pick(out.distribution, f.step->action), 1e-300, 1.0));
        } else {
          Var pa = log_op(clamp_op(pick(out.distribution, f.step->action), 1e-300, 1.0));
          Var one = tape.leaf(Tensor::scalar(1.0));
          Var keep = log_op(clamp_op(sub(one, pick(out.distribution, n)), 1e-300, 1.0));
          logp = sub(pa, keep);
        }
        Var ratio = exp_op(sub(logp, tape.leaf(Tensor::scalar(f.step->log_prob))));
        Var surr1 = scale(ratio, f.adv);
        Var surr2 = scale(clamp_op(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), f.adv);
        Var objective = minimum(surr1, surr2);
        Var entropy = scale(
            sum_all(mul(out.distribution, log_op(clamp_op(out.distribution, 1e-12, 1.0)))), -1.0);
        Var verr = sub(out.value, tape.leaf(Tensor::scalar(f.ret)));
        Var vloss = sum_all(mul(verr, verr));
        Var loss = add(add(scale(objective, -1.0), scale(entropy, -cfg.entropy_coef)),
                       scale(vloss, cfg.value_coef));
        tape.backward(scale(loss, inv));
      }
      policy_store.adam_step();
    }
  }
}

// ---------------------------------------------------------------------------
// Alternating training loop
// ---------------------------------------------------------------------------

struct LoopMetrics {
  int loop = 0;
  std::size_t steps = 0;
  double mean_reward = 0.0;
  double val_f1_10 = 0.0;
  double val_f1_20 = 0.0;
};

struct TrainOutputs {
  std::filesystem::path relation_checkpoint;
  std::filesystem::path policy_checkpoint;
  std::vector<LoopMetrics> history;
  int best_loop = 0;
};

inline double validation_f1(const std::vector<Scene>& val_scenes, const RelationNets& nets,
                            ParamStore& store, double fraction) {
  MetricsReport report;
  AdaptationConfig cfg;
  cfg.mode = AdaptationConfig::Mode::budget_fraction;
  cfg.budget_fraction = fraction;
  for (const auto& scene : val_scenes) {
    Tensor geom = nets.encode_scene(store, scene);
    Tensor br = nets.br_prior(store, scene);
    Tensor prior = nets.sr_prior(store, geom, scene, br);
    auto res = run_adaptation(scene, nets, store, prior, cfg, nullptr, &geom);
    report.add_scene(scene.scene_id, res.prediction, scene.ground_truth, res.interactions);
  }
  report.finalize();
  return report.aggregate.f1;
}

// Alternation: {collect -> supervise -> policy update}, loop metrics logged
// per loop, per-loop checkpoints, early stop on a validation-F1 plateau.
// The final checkpoint is the best-validation loop (ties keep the earliest).
inline TrainOutputs alternate_train(const std::vector<Scene>& train_scenes, TrainConfig cfg,
                                    const std::filesystem::path& out_dir) {
  if (train_scenes.empty()) throw std::invalid_argument("alternate_train: no training scenes");
  std::filesystem::create_directories(out_dir);

  Rng master(cfg.seed);
  Rng init_rng = master.split(1);
  Rng collect_rng = master.split(2);
  Rng supervise_rng = master.split(3);
  Rng ppo_rng = master.split(4);

  // Hold out a validation slice of the training scenes for plateau stopping.
  std::vector<std::size_t> idx(train_scenes.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng split_rng = master.split(5);
  split_rng.shuffle(idx);
  std::size_t val_count = static_cast<std::size_t>(cfg.val_fraction *
                                                   static_cast<double>(train_scenes.size()));
  if (train_scenes.size() >= 8 && val_count == 0) val_count = 1;
  std::vector<Scene> collect_scenes, val_scenes;
  for (std::size_t k = 0; k < idx.size(); ++k)
    (k < val_count ? val_scenes : collect_scenes).push_back(train_scenes[idx[k]]);
  if (collect_scenes.empty()) {
    collect_scenes = val_scenes;  // degenerate tiny datasets
    val_scenes.clear();
  }

  RelationNets nets;
  PolicyNet policy;
  ParamStore relation_store, policy_store;
  nets.init(relation_store, init_rng);
  policy.init(policy_store, init_rng);

  std::ofstream log(out_dir / "train_log.jsonl");
  TrainOutputs outputs;
  double best_f1 = -1.0;
  int stale = 0;

  for (int loop = 0; loop < cfg.loops; ++loop) {
    std::vector<Tensor> geom_cache = encode_all(nets, relation_store, collect_scenes);
    CollectResult collected =
        collect_rollouts(collect_scenes, geom_cache, nets, relation_store, policy, policy_store,
                         cfg.budget, collect_rng, cfg.random_explore, cfg.stop_action);
    train_supervised(collected.observations, collect_scenes, nets, relation_store, cfg,
                     supervise_rng);
    if (!cfg.random_explore && !collected.traces.empty())
      policy_update(collected.traces, collect_scenes, geom_cache, nets, policy, policy_store,
                    cfg.ppo, ppo_rng, cfg.stop_action);

    LoopMetrics lm;
    lm.loop = loop;
    lm.steps = collected.total_interactions;
    lm.mean_reward = collected.mean_reward;
    if (!val_scenes.empty()) {
      lm.val_f1_10 = validation_f1(val_scenes, nets, relation_store, 0.10);
      lm.val_f1_20 = validation_f1(val_scenes, nets, relation_store, 0.20);
    }
    outputs.history.push_back(lm);
    json jl = {{"loop", lm.loop},
               {"steps", lm.steps},
               {"mean_reward", lm.mean_reward},
               {"val_f1_10", lm.val_f1_10},
               {"val_f1_20", lm.val_f1_20}};
    log << jl.dump() << '\n';
    log.flush();

    char buf[64];
    std::snprintf(buf, sizeof(buf), "relation_%03d.ifrt", loop);
    relation_store.save(out_dir / buf);
    std::snprintf(buf, sizeof(buf), "policy_%03d.ifrt", loop);
    policy_store.save(out_dir / buf);

    if (lm.val_f1_10 > best_f1 + cfg.plateau_min_delta) {
      best_f1 = lm.val_f1_10;
      outputs.best_loop = loop;
      stale = 0;
    } else {
      ++stale;
      if (!val_scenes.empty() && stale >= cfg.plateau_patience) break;
    }
  }

  char buf[64];
  std::snprintf(buf, sizeof(buf), "relation_%03d.ifrt", outputs.best_loop);
  std::filesystem::copy_file(out_dir / buf, out_dir / "relation_final.ifrt",
                             std::filesystem::copy_options::overwrite_existing);
  std::snprintf(buf, sizeof(buf), "policy_%03d.ifrt", outputs.best_loop);
  std::filesystem::copy_file(out_dir / buf, out_dir / "policy_final.ifrt",
                             std::filesystem::copy_options::overwrite_existing);
  outputs.relation_checkpoint = out_dir / "relation_final.ifrt";
  outputs.policy_checkpoint = out_dir / "policy_final.ifrt";

  RelationNets card_nets;
  std::ofstream card(out_dir / "model_card.json");
  json jc = card_nets.model_card();
  jc["train"] = {{"budget", cfg.budget},
                 {"loops", cfg.loops},
                 {"supervised_epochs", cfg.supervised_epochs},
                 {"seed", cfg.seed},
                 {"random_explore", cfg.random_explore},
                 {"best_loop", outputs.best_loop}};
  card << jc.dump(1) << '\n';
  return outputs;
}

}  // namespace ifr
