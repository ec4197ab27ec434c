// Exploration policy: the same graph backbone family as the scene nets
// (separate parameters) with a shared action-score MLP over
// [node embedding | global scene feature], a termination score from the
// duplicated scene feature, and a scalar value head for the PPO baseline.

#pragma once

#include <string>
#include <vector>

#include "ifr/nets.hpp"
#include "ifr/optim.hpp"

namespace ifr {

struct PolicyOutput {
  Var distribution;  // n+1 action probabilities, last entry = stop
  Var value;         // scalar baseline
};

class PolicyNet {
 public:
  NetDims dims;
  EdgeParams edges;

  void init(ParamStore& store, Rng& rng) const {
    auto he = [&](const std::string& name, std::size_t in, std::size_t out) {
      Tensor& w = store.create(name, {in, out});
      w.fill_normal(rng, 0.0, std::sqrt(2.0 / static_cast<double>(in)));
    };
    auto head = [&](const std::string& name, std::size_t in, std::size_t out) {
      Tensor& w = store.create(name, {in, out});
      w.fill_normal(rng, 0.0, 0.01);  // near-uniform initial policy
    };
    auto bias = [&](const std::string& name, std::size_t n) { store.create(name, {n}); };
    he("pol.proj.w", dims.node_in, dims.proj);
    bias("pol.proj.b", dims.proj);
    he("pol.gcn1.w", dims.proj, dims.gcn1);
    he("pol.gcn2.w", dims.gcn1, dims.gcn2);
    he("pol.gcn3.w", dims.gcn2, dims.gcn3);
    he("pol.act.h.w", 2 * dims.gcn3, dims.pair_hidden);
    bias("pol.act.h.b", dims.pair_hidden);
    head("pol.act.out.w", dims.pair_hidden, 1);
    bias("pol.act.out.b", 1);
    he("pol.val.h.w", dims.gcn3, 16);
    bias("pol.val.h.b", 16);
    head("pol.val.out.w", 16, 1);
    bias("pol.val.out.b", 1);
  }

  // Backbone consumes (scene, belief) exactly as the relation nets do: same
  // node features, same edge construction. Heads emit n+1 logits
  // (objects then stop) -> softmax.
  PolicyOutput forward_traced(Tape& tape, ParamStore& store, const RelationNets& nets,
                              const Tensor& geom_feats, const Scene& scene,
                              const Tensor& belief) const {
    const std::size_t n = scene.size();
    if (belief.ndim() != 2 || belief.rows() != n || belief.cols() != n)
      throw std::invalid_argument("policy_forward: belief shape " + shape_str(belief.shape) +
                                  " does not match scene");
    Tensor adj = build_edges(belief, scene.objects, edges);
    Var nodes = nets.node_inputs_traced(tape, store, geom_feats, scene, "pol");
    Var emb = nets.gcn_forward(tape, store, nodes, adj, "pol");  // n x gcn3
    Var scene_feat = reshape(mean_axis(emb, 0), {1, dims.gcn3});

    // n object rows [n_i | n_S] plus one stop row [n_S | n_S], one MLP.
    std::vector<std::size_t> zeros(n, 0);
    Var scene_rows = gather_rows(scene_feat, zeros);  // n x gcn3
    Var obj_in = concat({emb, scene_rows}, 1);
    Var stop_in = concat({scene_feat, scene_feat}, 1);
    Var all_in = concat({obj_in, stop_in}, 0);  // (n+1) x 2*gcn3
    Var h = relu(affine(all_in, store.use(tape, "pol.act.h.w"), store.use(tape, "pol.act.h.b")));
    Var logits = affine(h, store.use(tape, "pol.act.out.w"), store.use(tape, "pol.act.out.b"));
    Var dist = softmax_last(reshape(logits, {n + 1}));

    Var vh = relu(affine(scene_feat, store.use(tape, "pol.val.h.w"), store.use(tape, "pol.val.h.b")));
    Var value = reshape(affine(vh, store.use(tape, "pol.val.out.w"), store.use(tape, "pol.val.out.b")),
                        {1});
    return PolicyOutput{dist, value};
  }

  Tensor action_probabilities(ParamStore& store, const RelationNets& nets, const Tensor& geom_feats,
                              const Scene& scene, const Tensor& belief) const {
    Tape tape;
    return forward_traced(tape, store, nets, geom_feats, scene, belief).distribution.val();
  }
};

inline std::size_t sample_categorical(const Tensor& probs, Rng& rng) {
  double u = rng.next_double();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    u -= probs.data[i];
    if (u < 0.0) return i;
  }
  return probs.size() - 1;
}

}  // namespace ifr
