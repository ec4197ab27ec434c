// Pair-level evaluation over all n^2 ordered object pairs (diagonal
// included): precision, recall, F1 and Matthews correlation, per scene and
// micro-aggregated from summed confusion counts.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ifr/scene.hpp"

namespace ifr {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

// 0/0 precision defaults to 0; observation-only predictors (whose every
// prediction is a direct observation) report 1.0 instead, matching the
// convention used for random-interaction baselines.
struct MetricValues {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
};

inline MetricValues metrics_from_counts(const ConfusionCounts& c, bool observation_only = false) {
  MetricValues m;
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  m.precision = (tp + fp > 0) ? tp / (tp + fp) : (observation_only ? 1.0 : 0.0);
  m.recall = (tp + fn > 0) ? tp / (tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall > 0) ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  m.mcc = denom > 0 ? (tp * tn - fp * fn) / std::sqrt(denom) : 0.0;
  return m;
}

inline ConfusionCounts confusion(const RelationGraph& prediction, const RelationGraph& truth) {
  if (prediction.n != truth.n)
    throw std::invalid_argument("compute_metrics: size mismatch " + std::to_string(prediction.n) +
                                " vs " + std::to_string(truth.n));
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.n; ++i)
    for (std::size_t j = 0; j < truth.n; ++j) {
      const bool p = prediction.edge(i, j);
      const bool t = truth.edge(i, j);
      if (p && t)
        ++c.tp;
      else if (p && !t)
        ++c.fp;
      else if (!p && t)
        ++c.fn;
      else
        ++c.tn;
    }
  return c;
}

struct SceneMetrics {
  std::string scene_id;
  ConfusionCounts counts;
  MetricValues values;
  std::size_t interactions = 0;
};

struct MetricsReport {
  std::vector<SceneMetrics> per_scene;
  ConfusionCounts totals;
  MetricValues aggregate;        // micro-average over summed counts
  MetricValues macro;            // mean of per-scene values
  double mean_interactions = 0.0;
  bool observation_only = false;

  void finalize() {
    totals = ConfusionCounts{};
    macro = MetricValues{};
    double inter = 0.0;
    for (const auto& s : per_scene) {
      totals += s.counts;
      macro.precision += s.values.precision;
      macro.recall += s.values.recall;
      macro.f1 += s.values.f1;
      macro.mcc += s.values.mcc;
      inter += static_cast<double>(s.interactions);
    }
    const double ns = per_scene.empty() ? 1.0 : static_cast<double>(per_scene.size());
    macro.precision /= ns;
    macro.recall /= ns;
    macro.f1 /= ns;
    macro.mcc /= ns;
    mean_interactions = inter / ns;
    aggregate = metrics_from_counts(totals, observation_only);
  }

  void add_scene(const std::string& scene_id, const RelationGraph& prediction,
                 const RelationGraph& truth, std::size_t interactions) {
    SceneMetrics sm;
    sm.scene_id = scene_id;
    sm.counts = confusion(prediction, truth);
    sm.values = metrics_from_counts(sm.counts, observation_only);
    sm.interactions = interactions;
    per_scene.push_back(std::move(sm));
  }

  json to_json() const {
    json j;
    j["aggregate"] = {{"precision", aggregate.precision},
                      {"recall", aggregate.recall},
                      {"f1", aggregate.f1},
                      {"mcc", aggregate.mcc}};
    j["macro"] = {{"precision", macro.precision},
                  {"recall", macro.recall},
                  {"f1", macro.f1},
                  {"mcc", macro.mcc}};
    j["counts"] = {{"tp", totals.tp}, {"fp", totals.fp}, {"fn", totals.fn}, {"tn", totals.tn}};
    j["mean_interactions"] = mean_interactions;
    j["scenes"] = per_scene.size();
    j["observation_only"] = observation_only;
    return j;
  }
};

inline MetricValues compute_metrics(const RelationGraph& prediction, const RelationGraph& truth,
                                    bool observation_only = false) {
  return metrics_from_counts(confusion(prediction, truth), observation_only);
}

}  // namespace ifr
