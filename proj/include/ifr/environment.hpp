// Interaction environment: one trigger action per step, noiseless
// observation of the affected objects, Eq.-style reward and budget
// accounting, plus a replayable interaction-log format.

#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ifr/scene.hpp"
#include "ifr/tensor.hpp"

namespace ifr {

struct RewardCoeffs {
  double alpha = 2.0;  // belief-correction term
  double beta = 1.0;   // any-effect bonus
  double cost = 1.0;   // per-interaction cost
};

struct ObservationRow {
  std::size_t trigger = 0;
  std::vector<std::uint8_t> effects;  // ground-truth row, one entry per object

  bool any_effect() const {
    for (auto e : effects)
      if (e) return true;
    return false;
  }
};

// reward = alpha * max_j |r_ij - e_ij| + beta * 1[any effect] - cost,
// evaluated on the pre-interaction belief row. Bounded in [-1, 2] with the
// default coefficients.
inline double reward_of(const Tensor& belief, std::size_t trigger, const ObservationRow& obs,
                        RewardCoeffs coeffs = {}) {
  if (belief.ndim() != 2 || belief.rows() != belief.cols())
    throw std::invalid_argument("reward_of: belief must be square, got " + shape_str(belief.shape));
  const std::size_t n = belief.rows();
  if (obs.effects.size() != n || trigger >= n)
    throw std::invalid_argument("reward_of: observation size mismatch");
  double max_err = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    max_err = std::max(max_err, std::abs(belief.at(trigger, j) - static_cast<double>(obs.effects[j])));
  return coeffs.alpha * max_err + coeffs.beta * (obs.any_effect() ? 1.0 : 0.0) - coeffs.cost;
}

struct EnvState {
  Tensor belief;                   // n x n probabilities; interacted rows clamped
  std::vector<std::size_t> interaction_order;  // first occurrences, in order
  std::set<std::size_t> interacted;
  std::size_t t = 0;
  std::size_t budget_remaining = 0;
};

struct StepResult {
  ObservationRow observation;
  double reward = 0.0;
  bool terminal = false;  // budget was already exhausted; no state change
};

class Environment {
 public:
  explicit Environment(const Scene& scene, RewardCoeffs coeffs = {})
      : scene_(&scene), coeffs_(coeffs) {}

  EnvState& reset(const Tensor& initial_belief, std::size_t budget) {
    const std::size_t n = scene_->size();
    if (initial_belief.ndim() != 2 || initial_belief.rows() != n || initial_belief.cols() != n)
      throw std::invalid_argument("env reset: belief shape " + shape_str(initial_belief.shape) +
                                  " does not match scene with " + std::to_string(n) + " objects");
    for (double v : initial_belief.data)
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("env reset: belief entries must lie in [0,1]");
    state_ = EnvState{};
    state_.belief = initial_belief;
    state_.budget_remaining = budget;
    return state_;
  }

  StepResult step(std::size_t trigger) {
    const std::size_t n = scene_->size();
    if (trigger >= n) throw std::invalid_argument("env step: trigger index out of range");
    StepResult res;
    if (state_.budget_remaining == 0) {
      res.terminal = true;
      return res;
    }
    res.observation = observe(trigger);
    res.reward = reward_of(state_.belief, trigger, res.observation, coeffs_);
    for (std::size_t j = 0; j < n; ++j)
      state_.belief.at(trigger, j) = static_cast<double>(res.observation.effects[j]);
    if (state_.interacted.insert(trigger).second) state_.interaction_order.push_back(trigger);
    ++state_.t;
    --state_.budget_remaining;
    return res;
  }

  // Noiseless ground-truth row; idempotent.
  ObservationRow observe(std::size_t trigger) const {
    const std::size_t n = scene_->size();
    if (trigger >= n) throw std::invalid_argument("env observe: trigger index out of range");
    ObservationRow row;
    row.trigger = trigger;
    row.effects.resize(n);
    for (std::size_t j = 0; j < n; ++j)
      row.effects[j] = scene_->ground_truth.edge(trigger, j) ? 1 : 0;
    return row;
  }

  // Replace the belief (e.g. after a posterior pass). Interacted rows must
  // still equal their observations exactly.
  void update_belief(const Tensor& belief) {
    const std::size_t n = scene_->size();
    if (belief.ndim() != 2 || belief.rows() != n || belief.cols() != n)
      throw std::invalid_argument("env update_belief: shape mismatch");
    for (std::size_t i : state_.interacted)
      for (std::size_t j = 0; j < n; ++j)
        if (belief.at(i, j) != (scene_->ground_truth.edge(i, j) ? 1.0 : 0.0))
          throw std::invalid_argument("env update_belief: observed row " + std::to_string(i) +
                                      " no longer matches its observation");
    for (double v : belief.data)
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("env update_belief: belief entries must lie in [0,1]");
    state_.belief = belief;
  }

  const EnvState& state() const { return state_; }
  const Scene& scene() const { return *scene_; }
  RewardCoeffs coeffs() const { return coeffs_; }

 private:
  const Scene* scene_;
  RewardCoeffs coeffs_;
  EnvState state_;
};

// ---------------------------------------------------------------------------
// Interaction log (JSON lines): ordered records replayable for offline
// supervision and for verifying logged rewards against the environment.
// ---------------------------------------------------------------------------

struct InteractionRecord {
  std::string scene_id;
  std::size_t t = 0;
  std::size_t trigger = 0;
  std::string effects;  // bitset as '0'/'1' chars, one per object
  double reward = 0.0;
};

inline std::string effects_to_bits(const std::vector<std::uint8_t>& effects) {
  std::string s(effects.size(), '0');
  for (std::size_t i = 0; i < effects.size(); ++i)
    if (effects[i]) s[i] = '1';
  return s;
}

inline void append_interaction_log(std::ostream& os, const InteractionRecord& rec) {
  json j;
  j["scene_id"] = rec.scene_id;
  j["t"] = rec.t;
  j["trigger"] = rec.trigger;
  j["effects"] = rec.effects;
  j["reward"] = rec.reward;
  os << j.dump() << '\n';
}

inline std::vector<InteractionRecord> read_interaction_log(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("interaction log: cannot open '" + path.string() + "'");
  std::vector<InteractionRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    InteractionRecord rec;
    rec.scene_id = j.at("scene_id").get<std::string>();
    rec.t = j.at("t").get<std::size_t>();
    rec.trigger = j.at("trigger").get<std::size_t>();
    rec.effects = j.at("effects").get<std::string>();
    rec.reward = j.at("reward").get<double>();
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace ifr
