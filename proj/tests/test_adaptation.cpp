#include <catch_amalgamated.hpp>

#include "ifr/adaptation.hpp"
#include "ifr/generator.hpp"
#include "oracle_helpers.hpp"

using namespace ifr;

TEST_CASE("select_next: analytic cases and brute-force agreement") {
  // object A row max-uncertainty 0.1; object B has an entry 0.5 -> picks B
  {
    Tensor belief({2, 2}, 0.9);
    belief.at(1, 0) = 0.5;
    auto pick = select_next(belief, {});
    REQUIRE(pick.has_value());
    CHECK(*pick == 1);
  }
  // all rows confident except one entry 0.45 on object C -> picks C
  {
    Tensor belief({3, 3}, 0.99);
    belief.at(2, 1) = 0.45;
    auto pick = select_next(belief, {});
    REQUIRE(pick.has_value());
    CHECK(*pick == 2);
  }
  // exhaustion
  {
    Tensor belief({2, 2}, 0.5);
    CHECK_FALSE(select_next(belief, {0, 1}).has_value());
  }
  // random 6-object beliefs match the brute-force oracle
  Rng rng(606);
  for (int trial = 0; trial < 300; ++trial) {
    Tensor belief({6, 6});
    belief.fill_uniform(rng, 0.0, 1.0);
    std::set<std::size_t> interacted;
    const std::size_t k = rng.uniform_index(6);
    while (interacted.size() < k) interacted.insert(rng.uniform_index(6));
    CHECK(select_next(belief, interacted) == oracle::brute_force_select(belief, interacted));
  }
}

TEST_CASE("should_stop boundary behavior is strict at the threshold") {
  Tensor confident({2, 2});
  confident.at(0, 0) = 0.049;
  confident.at(0, 1) = 0.951;
  confident.at(1, 0) = 0.0;
  confident.at(1, 1) = 1.0;
  CHECK(should_stop(confident, 0.05));

  Tensor boundary = confident;
  boundary.at(0, 0) = 0.05;  // exactly at the threshold: strict '<' says keep going
  CHECK_FALSE(should_stop(boundary, 0.05));

  Tensor uniform({3, 3}, 0.5);
  CHECK_FALSE(should_stop(uniform, 0.05));
}

namespace {
struct Setup {
  Catalog cat = desk_catalog();
  Scene scene;
  ParamStore store;
  RelationNets nets;
  Tensor geom, br, prior;
  Setup(std::uint64_t scene_seed, std::uint64_t net_seed = 5) {
    auto fams = default_families(cat);
    fams[0].points_per_object = 24;
    scene = generate_scene(cat, fams[0], scene_seed);
    Rng rng(net_seed);
    nets.init(store, rng);
    geom = nets.encode_scene(store, scene);
    br = nets.br_prior(store, scene);
    prior = nets.sr_prior(store, geom, scene, br);
  }
};
}  // namespace

TEST_CASE("run_adaptation budget modes and final-graph contract") {
  Setup su(321);
  const std::size_t n = su.scene.size();

  SECTION("fraction 1.0 recovers the ground truth exactly") {
    AdaptationConfig cfg;
    cfg.budget_fraction = 1.0;
    auto res = run_adaptation(su.scene, su.nets, su.store, su.prior, cfg, nullptr, &su.geom);
    CHECK(res.interactions == n);
    CHECK(res.prediction.adj == su.scene.ground_truth.adj);
  }

  SECTION("fraction 0.0 equals the prior thresholded at tau") {
    AdaptationConfig cfg;
    cfg.budget_fraction = 0.0;
    auto res = run_adaptation(su.scene, su.nets, su.store, su.prior, cfg, nullptr, &su.geom);
    CHECK(res.interactions == 0);
    CHECK(res.prediction.adj == threshold_graph(su.prior, cfg.decision_threshold).adj);
  }

  SECTION("fraction mode performs exactly ceil(fraction*n) interactions") {
    for (double frac : {0.10, 0.20, 0.5}) {
      AdaptationConfig cfg;
      cfg.budget_fraction = frac;
      auto res = run_adaptation(su.scene, su.nets, su.store, su.prior, cfg, nullptr, &su.geom);
      CHECK(res.interactions ==
            std::min<std::size_t>(static_cast<std::size_t>(std::ceil(frac * double(n))), n));
    }
  }

  SECTION("certainty mode with an already-confident prior performs zero interactions") {
    Tensor confident({n, n}, 0.001);
    AdaptationConfig cfg;
    cfg.mode = AdaptationConfig::Mode::certainty;
    auto res = run_adaptation(su.scene, su.nets, su.store, confident, cfg, nullptr, &su.geom);
    CHECK(res.interactions == 0);
  }

  SECTION("certainty mode interacts at most n times") {
    AdaptationConfig cfg;
    cfg.mode = AdaptationConfig::Mode::certainty;
    auto res = run_adaptation(su.scene, su.nets, su.store, su.prior, cfg, nullptr, &su.geom);
    CHECK(res.interactions <= n);
  }
}

TEST_CASE("monotone observation property and no repeated selections") {
  Setup su(654);
  const std::size_t n = su.scene.size();
  AdaptationConfig cfg;
  cfg.budget_fraction = 0.6;
  auto res = run_adaptation(su.scene, su.nets, su.store, su.prior, cfg, nullptr, &su.geom);

  std::set<std::size_t> seen;
  for (const auto& rec : res.log) {
    CHECK(seen.insert(rec.trigger).second);  // never repeats
  }
  // once observed, every later belief keeps the observed row verbatim
  for (std::size_t step = 0; step < res.log.size(); ++step) {
    const std::size_t trig = res.log[step].trigger;
    for (std::size_t later = step + 1; later < res.belief_history.size(); ++later)
      for (std::size_t j = 0; j < n; ++j)
        CHECK(res.belief_history[later].at(trig, j) ==
              (su.scene.ground_truth.edge(trig, j) ? 1.0 : 0.0));
  }
  // and the final prediction row equals the observation exactly
  for (const auto& rec : res.log)
    for (std::size_t j = 0; j < n; ++j)
      CHECK(res.prediction.edge(rec.trigger, j) == su.scene.ground_truth.edge(rec.trigger, j));
}

TEST_CASE("identical (scene, checkpoint, config) gives identical runs") {
  Setup a(987), b(987);
  AdaptationConfig cfg;
  cfg.budget_fraction = 0.4;
  auto ra = run_adaptation(a.scene, a.nets, a.store, a.prior, cfg, nullptr, &a.geom);
  auto rb = run_adaptation(b.scene, b.nets, b.store, b.prior, cfg, nullptr, &b.geom);
  REQUIRE(ra.log.size() == rb.log.size());
  for (std::size_t k = 0; k < ra.log.size(); ++k) {
    CHECK(ra.log[k].trigger == rb.log[k].trigger);
    CHECK(ra.log[k].reward == rb.log[k].reward);
  }
  CHECK(ra.prediction.adj == rb.prediction.adj);
  CHECK(ra.final_belief.data == rb.final_belief.data);
}

TEST_CASE("adaptation config validation") {
  AdaptationConfig cfg;
  cfg.stop_threshold = 0.7;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.decision_threshold = 0.4;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.budget_fraction = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
