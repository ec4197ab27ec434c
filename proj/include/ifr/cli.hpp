// Command-line front end: gen / train / adapt / eval / transfer /
// ablate-edges / curve. Kept in a header so the acceptance suite can drive
// the exact same entry point the binary uses.

#pragma once

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "ifr/experiments.hpp"
#include "ifr/generator.hpp"
#include "ifr/trainer.hpp"

namespace ifr {

inline int run_cli(std::vector<std::string> args) {
  CLI::App app{"inter-object functional relationship learner"};
  app.require_subcommand(1);

  // --- gen ---
  auto* gen = app.add_subcommand("gen", "generate a synthetic scene dataset");
  std::string gen_config, gen_out = "dataset";
  std::uint64_t gen_seed = 1;
  std::size_t gen_train = 16, gen_test = 4;
  gen->add_option("--config", gen_config, "family config file (JSON); built-in defaults if omitted");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--train", gen_train, "number of training scenes");
  gen->add_option("--test", gen_test, "number of test scenes");

  // --- train ---
  auto* train = app.add_subcommand("train", "alternating exploration/supervision training");
  std::string train_manifest, train_out = "run";
  TrainConfig tcfg;
  bool random_explore = false;
  train->add_option("--manifest", train_manifest, "dataset manifest")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--budget", tcfg.budget, "global interactions per loop");
  train->add_option("--loops", tcfg.loops, "alternation loops");
  train->add_option("--seed", tcfg.seed, "training seed");
  train->add_option("--epochs", tcfg.supervised_epochs, "supervised epochs per loop");
  train->add_option("--val-fraction", tcfg.val_fraction, "train slice held out for validation");
  train->add_flag("--random-explore", random_explore, "ablation: random collection policy");

  // --- adapt ---
  auto* adapt = app.add_subcommand("adapt", "fast-interactive-adaptation on one scene");
  std::string adapt_scene, adapt_ckpt, adapt_mode = "frac10", adapt_out;
  adapt->add_option("--scene", adapt_scene, "scene file")->required();
  adapt->add_option("--ckpt", adapt_ckpt, "relation checkpoint")->required();
  adapt->add_option("--mode", adapt_mode, "frac10|frac20|certainty");
  adapt->add_option("--out", adapt_out, "output directory for log + graph dump");

  // --- eval ---
  auto* eval = app.add_subcommand("eval", "evaluate a method on the test split");
  std::string eval_manifest, eval_ckpt, eval_method = "ours_final", eval_budget = "frac10", eval_out;
  std::uint64_t eval_seed = 0;
  bool eval_dumps = false;
  eval->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  eval->add_option("--ckpt", eval_ckpt, "relation checkpoint (unused by 'random')");
  eval->add_option("--method", eval_method, "method id");
  eval->add_option("--budget", eval_budget, "frac10|frac20|certainty");
  eval->add_option("--seed", eval_seed, "seed for stochastic methods");
  eval->add_option("--out", eval_out, "output directory");
  eval->add_flag("--dumps", eval_dumps, "write per-scene graph dumps");

  // --- transfer ---
  auto* transfer = app.add_subcommand("transfer", "cross-family evaluation");
  std::string tr_manifest, tr_ckpt, tr_train_family, tr_test_family, tr_budget = "frac10", tr_out;
  transfer->add_option("--manifest", tr_manifest, "dataset manifest")->required();
  transfer->add_option("--ckpt", tr_ckpt, "relation checkpoint")->required();
  transfer->add_option("--train-family", tr_train_family, "family the checkpoint was trained on")
      ->required();
  transfer->add_option("--test-family", tr_test_family, "family to evaluate on")->required();
  transfer->add_option("--budget", tr_budget, "frac10|frac20|certainty");
  transfer->add_option("--out", tr_out, "output directory");

  // --- ablate-edges ---
  auto* ablate = app.add_subcommand("ablate-edges", "edge-initialization ablation table");
  std::string ab_manifest, ab_ckpt, ab_budget = "frac20", ab_out;
  ablate->add_option("--manifest", ab_manifest, "dataset manifest")->required();
  ablate->add_option("--ckpt", ab_ckpt, "relation checkpoint")->required();
  ablate->add_option("--budget", ab_budget, "frac10|frac20|certainty");
  ablate->add_option("--out", ab_out, "output directory");

  // --- curve ---
  auto* curve = app.add_subcommand("curve", "mean F1 vs number of interactions");
  std::string cv_manifest, cv_ckpt, cv_out = "curve.csv";
  curve->add_option("--manifest", cv_manifest, "dataset manifest")->required();
  curve->add_option("--ckpt", cv_ckpt, "relation checkpoint")->required();
  curve->add_option("--out", cv_out, "output CSV file");

  std::vector<const char*> argv;
  std::string prog = "ifr";
  argv.push_back(prog.c_str());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const Catalog catalog = desk_catalog();

    if (gen->parsed()) {
      std::vector<RoomFamilyConfig> families =
          gen_config.empty() ? default_families(catalog)
                             : families_from_config_file(gen_config, catalog);
      Manifest m = generate_dataset(catalog, families, gen_train, gen_test, gen_seed, gen_out);
      write_config_file(std::filesystem::path(gen_out) / "config.json", families, catalog);
      std::ofstream stats(std::filesystem::path(gen_out) / "stats.json");
      stats << m.stats.dump(1) << '\n';
      std::cout << "generated " << m.entries.size() << " scenes under " << gen_out << '\n'
                << m.stats.dump(1) << '\n';
      return 0;
    }

    if (train->parsed()) {
      tcfg.random_explore = random_explore;
      Manifest m = load_manifest(train_manifest);
      std::vector<Scene> scenes = load_scenes(m, "train");
      TrainOutputs out = alternate_train(scenes, tcfg, train_out);
      for (const auto& lm : out.history)
        std::cout << "loop " << lm.loop << ": steps=" << lm.steps << " mean_reward=" << lm.mean_reward
                  << " val_f1_10=" << lm.val_f1_10 << " val_f1_20=" << lm.val_f1_20 << '\n';
      std::cout << "best loop " << out.best_loop << "; checkpoints at "
                << out.relation_checkpoint.string() << '\n';
      return 0;
    }

    if (adapt->parsed()) {
      Scene scene = load_scene(adapt_scene);
      LoadedModel model = load_relation_model(adapt_ckpt);
      AdaptationConfig cfg = budget_from_string(adapt_mode);
      Tensor geom = model.nets.encode_scene(model.store, scene);
      Tensor br = model.nets.br_prior(model.store, scene);
      Tensor prior = model.nets.sr_prior(model.store, geom, scene, br);
      auto res = run_adaptation(scene, model.nets, model.store, prior, cfg, nullptr, &geom);
      MetricValues v = compute_metrics(res.prediction, scene.ground_truth);
      std::cout << "scene " << scene.scene_id << ": interactions=" << res.interactions
                << " P=" << v.precision << " R=" << v.recall << " F1=" << v.f1 << " MCC=" << v.mcc
                << '\n';
      if (!adapt_out.empty()) {
        std::filesystem::create_directories(adapt_out);
        std::ofstream logf(std::filesystem::path(adapt_out) / (scene.scene_id + ".log.jsonl"));
        for (const auto& rec : res.log) append_interaction_log(logf, rec);
        std::ofstream dumpf(std::filesystem::path(adapt_out) / (scene.scene_id + ".graph.json"));
        dumpf << scene_dump(scene, res.final_belief, res.prediction, res.log).dump(1) << '\n';
      }
      return 0;
    }

    if (eval->parsed()) {
      Manifest m = load_manifest(eval_manifest);
      std::vector<Scene> scenes = load_scenes(m, "test");
      MethodId method = method_from_string(eval_method);
      AdaptationConfig budget = budget_from_string(eval_budget);
      LoadedModel model;
      LoadedModel* model_ptr = nullptr;
      if (method != MethodId::random) {
        if (eval_ckpt.empty()) throw std::runtime_error("eval: --ckpt required for learned methods");
        model = load_relation_model(eval_ckpt);
        model_ptr = &model;
      }
      MethodRun run = run_method(scenes, method, budget, model_ptr, eval_seed, eval_dumps);
      std::vector<ResultRow> rows{ResultRow{to_string(method), eval_budget, run.report.aggregate,
                                            run.report.mean_interactions}};
      std::cout << render_table(rows);
      if (!eval_out.empty()) write_results(eval_out, rows, eval_dumps ? &run.dumps : nullptr);
      return 0;
    }

    if (transfer->parsed()) {
      Manifest m = load_manifest(tr_manifest);
      std::vector<Scene> train_scenes, test_scenes;
      for (const auto& e : m.entries) {
        if (e.family == tr_train_family) train_scenes.push_back(load_scene(m.dir / e.file));
        if (e.family == tr_test_family && e.split == "test")
          test_scenes.push_back(load_scene(m.dir / e.file));
      }
      if (test_scenes.empty()) throw std::runtime_error("transfer: no test scenes for family");
      LoadedModel model = load_relation_model(tr_ckpt);
      TransferReport tr = run_transfer(train_scenes, test_scenes, tr_train_family, tr_test_family,
                                       model, budget_from_string(tr_budget));
      std::vector<ResultRow> rows{ResultRow{"transfer_" + tr_train_family + "_to_" + tr_test_family,
                                            tr_budget, tr.report.aggregate,
                                            tr.report.mean_interactions}};
      std::cout << render_table(rows);
      std::cout << "unseen-pair recall: " << tr.unseen_pair_recall << " over " << tr.unseen_pairs
                << " pairs\n";
      if (!tr_out.empty()) write_results(tr_out, rows);
      return 0;
    }

    if (ablate->parsed()) {
      Manifest m = load_manifest(ab_manifest);
      std::vector<Scene> scenes = load_scenes(m, "test");
      LoadedModel model = load_relation_model(ab_ckpt);
      auto rows = ablate_edges(scenes, model, budget_from_string(ab_budget), ab_budget);
      std::cout << render_table(rows);
      if (!ab_out.empty()) write_results(ab_out, rows);
      return 0;
    }

    if (curve->parsed()) {
      Manifest m = load_manifest(cv_manifest);
      std::vector<Scene> scenes = load_scenes(m, "test");
      LoadedModel model = load_relation_model(cv_ckpt);
      auto c = f1_curve(scenes, model);
      write_curve(cv_out, c);
      std::cout << "wrote " << c.size() << " curve rows to " << cv_out << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace ifr
