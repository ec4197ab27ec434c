// Test-time fast adaptation: repeatedly trigger the most uncertain object,
// clamp the observation, re-run the posterior, and stop on certainty or
// budget. Emits the final thresholded graph plus the interaction log.

#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "ifr/environment.hpp"
#include "ifr/nets.hpp"
#include "ifr/rng.hpp"
#include "ifr/scene.hpp"

namespace ifr {

struct AdaptationConfig {
  enum class Mode { budget_fraction, certainty };
  Mode mode = Mode::budget_fraction;
  double budget_fraction = 0.10;   // used in budget_fraction mode
  double stop_threshold = 0.05;    // certainty mode: stop when all margins fall below
  double decision_threshold = 0.9; // final edges: r > threshold (strict)

  void validate() const {
    if (!(stop_threshold > 0.0 && stop_threshold < 0.5))
      throw std::invalid_argument("adaptation: stop threshold must lie in (0, 0.5)");
    if (!(decision_threshold > 0.5 && decision_threshold < 1.0))
      throw std::invalid_argument("adaptation: decision threshold must lie in (0.5, 1)");
    if (budget_fraction < 0.0 || budget_fraction > 1.0)
      throw std::invalid_argument("adaptation: budget fraction must lie in [0, 1]");
  }
};

inline double uncertainty(double r) { return std::min(r, 1.0 - r); }

// argmax over non-interacted i of max_j min(r_ij, 1 - r_ij); ties break to
// the lowest index. Returns nullopt when every object has been interacted.
inline std::optional<std::size_t> select_next(const Tensor& belief,
                                              const std::set<std::size_t>& interacted) {
  const std::size_t n = belief.rows();
  std::optional<std::size_t> best;
  double best_score = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (interacted.count(i)) continue;
    double row_score = 0.0;
    for (std::size_t j = 0; j < n; ++j) row_score = std::max(row_score, uncertainty(belief.at(i, j)));
    if (row_score > best_score) {
      best_score = row_score;
      best = i;
    }
  }
  return best;
}

// True iff min(r, 1-r) < threshold holds for every entry (strict).
inline bool should_stop(const Tensor& belief, double threshold = 0.05) {
  for (double v : belief.data)
    if (!(uncertainty(v) < threshold)) return false;
  return true;
}

struct AdaptationResult {
  RelationGraph prediction;               // thresholded final graph (types unset)
  Tensor final_belief;
  std::vector<InteractionRecord> log;
  std::vector<Tensor> belief_history;     // belief after t interactions, t = 0..T
  std::size_t interactions = 0;
};

inline RelationGraph threshold_graph(const Tensor& belief, double tau) {
  const std::size_t n = belief.rows();
  RelationGraph g(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (belief.at(i, j) > tau) g.set_edge(i, j, 0);
  return g;
}

// Shared driver for the uncertainty strategy and the random-pick ablation.
// random_rng, when set, replaces Eq.-style selection with a uniform draw
// over non-interacted objects.
inline AdaptationResult run_adaptation(const Scene& scene, const RelationNets& nets,
                                       ParamStore& store, const Tensor& initial_belief,
                                       AdaptationConfig cfg, Rng* random_rng = nullptr,
                                       const Tensor* geom_feats_cached = nullptr) {
  cfg.validate();
  const std::size_t n = scene.size();
  Tensor geom = geom_feats_cached ? *geom_feats_cached : nets.encode_scene(store, scene);

  Environment env(scene);
  env.reset(initial_belief, n);

  std::size_t budget = n;
  if (cfg.mode == AdaptationConfig::Mode::budget_fraction)
    budget = std::min<std::size_t>(
        static_cast<std::size_t>(std::ceil(cfg.budget_fraction * static_cast<double>(n))), n);

  AdaptationResult res;
  ObservationSet observations;
  res.belief_history.push_back(env.state().belief);

  while (true) {
    if (cfg.mode == AdaptationConfig::Mode::certainty &&
        should_stop(env.state().belief, cfg.stop_threshold))
      break;
    if (res.interactions >= budget) break;
    std::optional<std::size_t> pick;
    if (random_rng) {
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < n; ++i)
        if (!env.state().interacted.count(i)) candidates.push_back(i);
      if (!candidates.empty()) pick = candidates[random_rng->uniform_index(candidates.size())];
    } else {
      pick = select_next(env.state().belief, env.state().interacted);
    }
    if (!pick) break;  // exhausted

    StepResult step = env.step(*pick);
    observations[*pick] = step.observation.effects;
    res.log.push_back(InteractionRecord{scene.scene_id, res.interactions, *pick,
                                        effects_to_bits(step.observation.effects), step.reward});
    ++res.interactions;
    Tensor updated = nets.posterior_step(store, geom, scene, env.state().belief, observations);
    env.update_belief(updated);
    res.belief_history.push_back(env.state().belief);
  }

  res.final_belief = env.state().belief;
  res.prediction = threshold_graph(res.final_belief, cfg.decision_threshold);
  return res;
}

}  // namespace ifr
