// Learned models: permutation-invariant point-set encoder, the pairwise
// binary-relationship prior, and the shared scene-graph network that serves
// as both the scene prior and the posterior (same weights, same code path).

#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ifr/optim.hpp"
#include "ifr/scene.hpp"
#include "ifr/tensor.hpp"

namespace ifr {

using ObservationSet = std::map<std::size_t, std::vector<std::uint8_t>>;

struct NetDims {
  std::size_t enc_h1 = 64;
  std::size_t enc_h2 = 128;
  std::size_t enc_out = 64;
  std::size_t node_in = 68;  // enc_out + center(3) + scale(1)
  std::size_t proj = 64;
  std::size_t gcn1 = 64;
  std::size_t gcn2 = 64;
  std::size_t gcn3 = 32;
  std::size_t pair_hidden = 32;
  std::size_t br_pair_hidden = 64;
};

struct EdgeParams {
  enum class Mode { combined, prior_only, distance_only, all_ones };
  double radius = 0.5;   // meters
  double weight = 0.6;   // proximity edge weight
  Mode mode = Mode::combined;
};

// ---------------------------------------------------------------------------
// Edge construction: w_ij = max(pair_weight_ij, weight * 1[dist < radius])
// off-diagonal; the diagonal stays zero (the graph convolution supplies an
// implicit unit self-loop).
// ---------------------------------------------------------------------------

inline Tensor build_edges(const Tensor& pair_weights, const std::vector<ObjectInstance>& objects,
                          EdgeParams params = {}) {
  const std::size_t n = objects.size();
  if (pair_weights.ndim() != 2 || pair_weights.rows() != n || pair_weights.cols() != n)
    throw std::invalid_argument("build_edges: pair weights shape " + shape_str(pair_weights.shape) +
                                " does not match " + std::to_string(n) + " objects");
  for (double v : pair_weights.data)
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("build_edges: pair weights must lie in [0,1]");
  Tensor w({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool near = center_distance(objects[i], objects[j]) < params.radius;
      double v = 0.0;
      switch (params.mode) {
        case EdgeParams::Mode::combined:
          v = std::max(pair_weights.at(i, j), near ? params.weight : 0.0);
          break;
        case EdgeParams::Mode::prior_only:
          v = pair_weights.at(i, j);
          break;
        case EdgeParams::Mode::distance_only:
          v = near ? params.weight : 0.0;
          break;
        case EdgeParams::Mode::all_ones:
          v = 1.0;
          break;
      }
      w.at(i, j) = v;
    }
  return w;
}

// ---------------------------------------------------------------------------
// RelationNets: parameter layout + forward passes
// ---------------------------------------------------------------------------

class RelationNets {
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
      w.fill_normal(rng, 0.0, 0.01);  // fresh nets should score ~0.5 everywhere
    };
    auto bias = [&](const std::string& name, std::size_t n) { store.create(name, {n}); };

    he("enc.l1.w", 3, dims.enc_h1);
    bias("enc.l1.b", dims.enc_h1);
    he("enc.l2.w", dims.enc_h1, dims.enc_h2);
    bias("enc.l2.b", dims.enc_h2);
    he("enc.proj.w", dims.enc_h2, dims.enc_out);
    bias("enc.proj.b", dims.enc_out);

    he("br.h.w", 2 * dims.enc_out, dims.br_pair_hidden);
    bias("br.h.b", dims.br_pair_hidden);
    head("br.out.w", dims.br_pair_hidden, 1);
    bias("br.out.b", 1);

    he("sg.proj.w", dims.node_in, dims.proj);
    bias("sg.proj.b", dims.proj);
    he("sg.gcn1.w", dims.proj, dims.gcn1);
    he("sg.gcn2.w", dims.gcn1, dims.gcn2);
    he("sg.gcn3.w", dims.gcn2, dims.gcn3);
    he("sg.pair.h.w", 2 * dims.gcn3, dims.pair_hidden);
    bias("sg.pair.h.b", dims.pair_hidden);
    head("sg.pair.out.w", dims.pair_hidden, 1);
    bias("sg.pair.out.b", 1);
  }

  // Per-point MLP + max pool + projection: permutation invariant by
  // construction. Input points are a P x 3 tensor; output is 1 x enc_out.
  Var encode_object_traced(Tape& tape, ParamStore& store, const Tensor& points) const {
    if (points.ndim() != 2 || points.cols() != 3)
      throw std::invalid_argument("encode_object: expected P x 3 points, got " +
                                  shape_str(points.shape));
    Var x = tape.leaf(points);
    Var h1 = relu(affine(x, store.use(tape, "enc.l1.w"), store.use(tape, "enc.l1.b")));
    Var h2 = relu(affine(h1, store.use(tape, "enc.l2.w"), store.use(tape, "enc.l2.b")));
    Var pooled = reshape(max_axis(h2, 0), {1, dims.enc_h2});
    return affine(pooled, store.use(tape, "enc.proj.w"), store.use(tape, "enc.proj.b"));
  }

  Tensor encode_object(ParamStore& store, const Tensor& points) const {
    Tape tape;
    return encode_object_traced(tape, store, points).val();
  }

  // All objects of a scene stacked into n x enc_out.
  Var encode_scene_traced(Tape& tape, ParamStore& store, const Scene& scene) const {
    std::vector<Var> rows;
    for (const auto& obj : scene.objects) {
      Tensor pts({obj.point_count, 3}, obj.points);
      rows.push_back(encode_object_traced(tape, store, pts));
    }
    return rows.size() == 1 ? rows[0] : concat(rows, 0);
  }

  Tensor encode_scene(ParamStore& store, const Scene& scene) const {
    Tape tape;
    return encode_scene_traced(tape, store, scene).val();
  }

  // Pair scores from encoder features for an explicit pair list.
  Var br_pair_scores_traced(Tape& tape, ParamStore& store, Var feats,
                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs) const {
    std::vector<std::size_t> firsts, seconds;
    firsts.reserve(pairs.size());
    seconds.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
      firsts.push_back(i);
      seconds.push_back(j);
    }
    Var cat = concat({gather_rows(feats, firsts), gather_rows(feats, seconds)}, 1);
    Var h = relu(affine(cat, store.use(tape, "br.h.w"), store.use(tape, "br.h.b")));
    return sigmoid(affine(h, store.use(tape, "br.out.w"), store.use(tape, "br.out.b")));
  }

  // Binary-relationship prior over all ordered pairs, diagonal included.
  // Geometry only: centers and scales never enter this path.
  Tensor br_prior(ParamStore& store, const Scene& scene) const {
    Tape tape;
    Var feats = encode_scene_traced(tape, store, scene);
    const std::size_t n = scene.size();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) pairs.push_back({i, j});
    Var scores = br_pair_scores_traced(tape, store, feats, pairs);
    return Tensor({n, n}, scores.val().data);
  }

  // Three graph convolutions per the normalized-aggregation rule:
  //   n_i^(k) = Theta_k sum_j (w_ji / sqrt(d_j d_i)) n_j^(k-1),
  //   d_i = 1 + sum_j w_ji, with an implicit self loop of weight 1.
  // ReLU after layers 1 and 2, none after layer 3.
  Var gcn_forward(Tape& tape, ParamStore& store, Var node_feats, const Tensor& adjacency,
                  const std::string& prefix = "sg") const {
    const std::size_t n = node_feats.val().rows();
    if (adjacency.ndim() != 2 || adjacency.rows() != n || adjacency.cols() != n)
      throw std::invalid_argument("gcn_forward: adjacency shape " + shape_str(adjacency.shape) +
                                  " does not match " + std::to_string(n) + " nodes");
    if (!adjacency.all_finite()) throw std::invalid_argument("gcn_forward: adjacency contains NaN/inf");
    std::vector<double> deg(n, 1.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i)
        if (i != j) deg[i] += adjacency.at(j, i);
    Tensor M({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        M.at(i, j) = adjacency.at(j, i) / std::sqrt(deg[j] * deg[i]);
      }
      M.at(i, i) = 1.0 / deg[i];
    }
    Var m = tape.leaf(std::move(M));
    Var h = node_feats;
    h = relu(matmul(matmul(m, h), store.use(tape, prefix + ".gcn1.w")));
    h = relu(matmul(matmul(m, h), store.use(tape, prefix + ".gcn2.w")));
    return matmul(matmul(m, h), store.use(tape, prefix + ".gcn3.w"));
  }

  // Projected node inputs: [geometry feature | center | scale] -> proj.
  Var node_inputs_traced(Tape& tape, ParamStore& store, const Tensor& geom_feats,
                         const Scene& scene, const std::string& prefix = "sg") const {
    const std::size_t n = scene.size();
    if (geom_feats.ndim() != 2 || geom_feats.rows() != n || geom_feats.cols() != dims.enc_out)
      throw std::invalid_argument("node_inputs: geometry features shape " +
                                  shape_str(geom_feats.shape) + " unexpected");
    Tensor cs({n, 4});
    for (std::size_t i = 0; i < n; ++i) {
      cs.at(i, 0) = scene.objects[i].center[0];
      cs.at(i, 1) = scene.objects[i].center[1];
      cs.at(i, 2) = scene.objects[i].center[2];
      cs.at(i, 3) = scene.objects[i].scale;
    }
    Var x = concat({tape.leaf(geom_feats), tape.leaf(std::move(cs))}, 1);
    return relu(affine(x, store.use(tape, prefix + ".proj.w"), store.use(tape, prefix + ".proj.b")));
  }

  // Scene-level pair scores: edge_source (pair beliefs in [0,1]) feeds edge
  // construction, node embeddings feed a pair head over all ordered pairs.
  Var scene_scores_traced(Tape& tape, ParamStore& store, const Tensor& geom_feats,
                          const Scene& scene, const Tensor& edge_source) const {
    const std::size_t n = scene.size();
    Tensor adj = build_edges(edge_source, scene.objects, edges);
    Var nodes = node_inputs_traced(tape, store, geom_feats, scene);
    Var emb = gcn_forward(tape, store, nodes, adj);
    std::vector<std::size_t> firsts, seconds;
    firsts.reserve(n * n);
    seconds.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        firsts.push_back(i);
        seconds.push_back(j);
      }
    Var cat = concat({gather_rows(emb, firsts), gather_rows(emb, seconds)}, 1);
    Var h = relu(affine(cat, store.use(tape, "sg.pair.h.w"), store.use(tape, "sg.pair.h.b")));
    Var out = sigmoid(affine(h, store.use(tape, "sg.pair.out.w"), store.use(tape, "sg.pair.out.b")));
    return reshape(out, {n, n});
  }

  Tensor scene_scores(ParamStore& store, const Tensor& geom_feats, const Scene& scene,
                      const Tensor& edge_source) const {
    Tape tape;
    return scene_scores_traced(tape, store, geom_feats, scene, edge_source).val();
  }

  // Scene prior: the shared net driven by the binary prior.
  Tensor sr_prior(ParamStore& store, const Tensor& geom_feats, const Scene& scene,
                  const Tensor& br_matrix) const {
    return scene_scores(store, geom_feats, scene, br_matrix);
  }

  // One posterior update: clamp observed rows into the belief, run the
  // shared net on the clamped matrix, then re-clamp the output so observed
  // facts are never overwritten.
  Tensor posterior_step(ParamStore& store, const Tensor& geom_feats, const Scene& scene,
                        const Tensor& belief, const ObservationSet& observations) const {
    const std::size_t n = scene.size();
    if (belief.ndim() != 2 || belief.rows() != n || belief.cols() != n)
      throw std::invalid_argument("posterior_step: belief shape " + shape_str(belief.shape) +
                                  " does not match scene");
    Tensor clamped = belief;
    apply_observations(clamped, observations, n);
    Tensor out = scene_scores(store, geom_feats, scene, clamped);
    apply_observations(out, observations, n);
    return out;
  }

  static void apply_observations(Tensor& belief, const ObservationSet& observations, std::size_t n) {
    for (const auto& [i, row] : observations) {
      if (i >= n || row.size() != n)
        throw std::invalid_argument("posterior_step: observation for invalid object " +
                                    std::to_string(i));
      for (std::size_t j = 0; j < n; ++j) belief.at(i, j) = static_cast<double>(row[j]);
    }
  }

  json model_card() const {
    json j;
    j["encoder"] = {{"h1", dims.enc_h1}, {"h2", dims.enc_h2}, {"out", dims.enc_out}};
    j["scene_net"] = {{"proj", dims.proj},
                      {"gcn", {dims.gcn1, dims.gcn2, dims.gcn3}},
                      {"pair_hidden", dims.pair_hidden}};
    j["br_pair_hidden"] = dims.br_pair_hidden;
    j["edges"] = {{"radius", edges.radius}, {"weight", edges.weight}};
    return j;
  }
};

}  // namespace ifr
