// Procedural synthetic benchmark: parametric category shapes, room-family
// layouts and grammar-driven ground-truth relation graphs, including the
// ambiguity clusters (K interchangeable triggers vs K responders) that make
// interaction necessary.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ifr/rng.hpp"
#include "ifr/scene.hpp"

namespace ifr {

// ---------------------------------------------------------------------------
// Shape recipes
// ---------------------------------------------------------------------------

enum class PrimitiveKind { box, cylinder_z, cylinder_x, sphere };

struct ShapePart {
  PrimitiveKind kind;
  std::array<double, 3> size;    // box: half extents; cylinder: {r, r, h/2}; sphere: {r,r,r}
  std::array<double, 3> offset;  // meters, relative to recipe origin
  double weight;                 // sampling weight (roughly surface area)
};

struct CategoryTemplate {
  int id = -1;
  std::string name;
  bool trigger = false;
  bool responder = false;
  std::vector<ShapePart> parts;
  double noise_sigma = 0.004;    // per-point gaussian jitter, meters
  double stretch_jitter = 0.10;  // per-instance anisotropic stretch, +-fraction
  std::array<double, 2> z_range{0.2, 1.2};  // world placement height
};

struct Catalog {
  std::vector<CategoryTemplate> categories;
  std::vector<RelationType> types;

  const CategoryTemplate& by_id(int id) const {
    for (const auto& c : categories)
      if (c.id == id) return c;
    throw std::invalid_argument("catalog: unknown category id " + std::to_string(id));
  }
  const CategoryTemplate& by_name(const std::string& name) const {
    for (const auto& c : categories)
      if (c.name == name) return c;
    throw std::invalid_argument("catalog: unknown category '" + name + "'");
  }
};

namespace detail {

inline std::array<double, 3> sample_primitive(PrimitiveKind kind, const std::array<double, 3>& s,
                                              Rng& rng) {
  switch (kind) {
    case PrimitiveKind::box: {
      // Area-weighted face choice, then uniform on the face.
      const double ax = s[1] * s[2], ay = s[0] * s[2], az = s[0] * s[1];
      double u = rng.next_double() * (ax + ay + az);
      const double sx = rng.uniform(-s[0], s[0]);
      const double sy = rng.uniform(-s[1], s[1]);
      const double sz = rng.uniform(-s[2], s[2]);
      const double sign = rng.next_double() < 0.5 ? -1.0 : 1.0;
      if (u < ax) return {sign * s[0], sy, sz};
      if (u < ax + ay) return {sx, sign * s[1], sz};
      return {sx, sy, sign * s[2]};
    }
    case PrimitiveKind::cylinder_z:
    case PrimitiveKind::cylinder_x: {
      const double r = s[0], hh = s[2];
      const double side = 2.0 * r * (2.0 * hh);
      const double caps = r * r;  // relative weights only; constants cancel
      std::array<double, 3> p{};
      if (rng.next_double() * (side + 2.0 * caps) < side) {
        const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
        p = {r * std::cos(a), r * std::sin(a), rng.uniform(-hh, hh)};
      } else {
        const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double rr = r * std::sqrt(rng.next_double());
        p = {rr * std::cos(a), rr * std::sin(a), rng.next_double() < 0.5 ? -hh : hh};
      }
      if (kind == PrimitiveKind::cylinder_x) return {p[2], p[1], p[0]};
      return p;
    }
    case PrimitiveKind::sphere: {
      double x = rng.normal(), y = rng.normal(), z = rng.normal();
      double n = std::sqrt(x * x + y * y + z * z);
      if (n < 1e-12) n = 1.0;
      return {s[0] * x / n, s[1] * y / n, s[2] * z / n};
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace detail

// Raw surface sample of a category recipe in meters (before normalization).
inline std::vector<double> sample_category_cloud(const CategoryTemplate& tmpl, std::size_t p,
                                                 Rng& rng) {
  double total_w = 0.0;
  for (const auto& part : tmpl.parts) total_w += part.weight;
  std::array<double, 3> stretch;
  for (int d = 0; d < 3; ++d) stretch[d] = 1.0 + rng.uniform(-tmpl.stretch_jitter, tmpl.stretch_jitter);
  std::vector<double> out(p * 3);
  for (std::size_t i = 0; i < p; ++i) {
    double u = rng.next_double() * total_w;
    const ShapePart* chosen = &tmpl.parts.back();
    for (const auto& part : tmpl.parts) {
      if (u < part.weight) {
        chosen = &part;
        break;
      }
      u -= part.weight;
    }
    auto pt = detail::sample_primitive(chosen->kind, chosen->size, rng);
    for (int d = 0; d < 3; ++d)
      out[i * 3 + d] = (pt[d] + chosen->offset[d]) * stretch[d] + rng.normal(0.0, tmpl.noise_sigma);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Desk catalog: ~18 categories, 10 relation types
// (3 one-to-one across objects, 5 many-to-many, 2 self).
// ---------------------------------------------------------------------------

namespace category {
inline constexpr int kSwitch = 0;
inline constexpr int kCeilingLamp = 1;
inline constexpr int kDeskLamp = 2;
inline constexpr int kKnob = 3;
inline constexpr int kBurner = 4;
inline constexpr int kRemote = 5;
inline constexpr int kTv = 6;
inline constexpr int kKnife = 7;
inline constexpr int kFruit = 8;
inline constexpr int kHolder = 9;
inline constexpr int kTowel = 10;
inline constexpr int kButton = 11;
inline constexpr int kFan = 12;
inline constexpr int kMicrowave = 13;
inline constexpr int kKettle = 14;
inline constexpr int kBook = 15;
inline constexpr int kPlant = 16;
inline constexpr int kBox = 17;
}  // namespace category

inline Catalog desk_catalog() {
  using PK = PrimitiveKind;
  Catalog cat;
  auto add = [&](int id, const std::string& name, bool trig, bool resp,
                 std::vector<ShapePart> parts, std::array<double, 2> z) {
    CategoryTemplate t;
    t.id = id;
    t.name = name;
    t.trigger = trig;
    t.responder = resp;
    t.parts = std::move(parts);
    t.z_range = z;
    cat.categories.push_back(std::move(t));
  };

  add(category::kSwitch, "switch", true, false,
      {{PK::box, {0.04, 0.015, 0.06}, {0, 0, 0}, 1.0},
       {PK::box, {0.008, 0.02, 0.015}, {0, 0.02, 0}, 0.25}},
      {1.0, 1.4});
  add(category::kCeilingLamp, "ceiling_lamp", false, true,
      {{PK::sphere, {0.15, 0.15, 0.09}, {0, 0, 0}, 1.0},
       {PK::cylinder_z, {0.015, 0.015, 0.10}, {0, 0, 0.17}, 0.3}},
      {2.2, 2.4});
  add(category::kDeskLamp, "desk_lamp", false, true,
      {{PK::cylinder_z, {0.08, 0.08, 0.012}, {0, 0, -0.15}, 0.5},
       {PK::cylinder_z, {0.012, 0.012, 0.14}, {0, 0, 0}, 0.4},
       {PK::sphere, {0.07, 0.07, 0.055}, {0, 0.02, 0.17}, 0.8}},
      {0.7, 0.9});
  add(category::kKnob, "knob", true, false,
      {{PK::cylinder_z, {0.022, 0.022, 0.016}, {0, 0, 0}, 1.0},
       {PK::box, {0.004, 0.018, 0.02}, {0, 0, 0.02}, 0.3}},
      {0.85, 0.90});
  add(category::kBurner, "burner", false, true,
      {{PK::cylinder_z, {0.11, 0.11, 0.009}, {0, 0, 0}, 1.0},
       {PK::cylinder_z, {0.035, 0.035, 0.012}, {0, 0, 0.012}, 0.25}},
      {0.92, 0.96});
  add(category::kRemote, "remote", true, false,
      {{PK::box, {0.024, 0.085, 0.009}, {0, 0, 0}, 1.0},
       {PK::box, {0.016, 0.03, 0.01}, {0, 0.04, 0.01}, 0.2}},
      {0.4, 0.8});
  add(category::kTv, "tv", false, true,
      {{PK::box, {0.32, 0.02, 0.19}, {0, 0, 0.06}, 1.0},
       {PK::box, {0.10, 0.05, 0.012}, {0, 0, -0.16}, 0.2}},
      {1.0, 1.5});
  add(category::kKnife, "knife", true, false,
      {{PK::box, {0.012, 0.11, 0.002}, {0, -0.03, 0}, 1.0},
       {PK::box, {0.011, 0.045, 0.011}, {0, 0.12, 0}, 0.45}},
      {0.75, 0.95});
  add(category::kFruit, "fruit", false, true,
      {{PK::sphere, {0.05, 0.05, 0.045}, {0, 0, 0}, 1.0},
       {PK::cylinder_z, {0.004, 0.004, 0.012}, {0, 0, 0.05}, 0.08}},
      {0.75, 0.95});
  add(category::kHolder, "holder", true, false,
      {{PK::cylinder_x, {0.012, 0.012, 0.13}, {0, 0, 0}, 1.0},
       {PK::box, {0.02, 0.025, 0.02}, {-0.13, 0.02, 0}, 0.3},
       {PK::box, {0.02, 0.025, 0.02}, {0.13, 0.02, 0}, 0.3}},
      {1.15, 1.35});
  add(category::kTowel, "towel", false, true,
      {{PK::box, {0.13, 0.012, 0.18}, {0, 0, 0}, 1.0}},
      {0.9, 1.1});
  add(category::kButton, "button", true, false,
      {{PK::box, {0.018, 0.018, 0.006}, {0, 0, 0}, 1.0},
       {PK::cylinder_z, {0.009, 0.009, 0.007}, {0, 0, 0.01}, 0.4}},
      {0.9, 1.3});
  add(category::kFan, "fan", false, true,
      {{PK::cylinder_x, {0.15, 0.15, 0.025}, {0, 0, 0.05}, 1.0},
       {PK::box, {0.05, 0.05, 0.01}, {0, 0, -0.16}, 0.25},
       {PK::cylinder_z, {0.012, 0.012, 0.08}, {0, 0, -0.06}, 0.2}},
      {0.9, 1.6});
  add(category::kMicrowave, "microwave", true, true,
      {{PK::box, {0.22, 0.15, 0.14}, {0, 0, 0}, 1.0},
       {PK::box, {0.012, 0.02, 0.10}, {0.19, -0.16, 0}, 0.2}},
      {0.9, 1.1});
  add(category::kKettle, "kettle", true, true,
      {{PK::sphere, {0.10, 0.10, 0.115}, {0, 0, 0}, 1.0},
       {PK::cylinder_x, {0.014, 0.014, 0.05}, {0.12, 0, 0.05}, 0.25},
       {PK::box, {0.01, 0.04, 0.05}, {-0.12, 0, 0.04}, 0.25}},
      {0.75, 0.95});
  add(category::kBook, "book", false, false,
      {{PK::box, {0.075, 0.105, 0.012}, {0, 0, 0}, 1.0},
       {PK::box, {0.075, 0.105, 0.002}, {0.02, 0, 0.025}, 0.5}},
      {0.4, 1.0});
  add(category::kPlant, "plant", false, false,
      {{PK::sphere, {0.11, 0.11, 0.13}, {0, 0, 0.14}, 1.0},
       {PK::cylinder_z, {0.015, 0.015, 0.07}, {0, 0, -0.03}, 0.2},
       {PK::cylinder_z, {0.055, 0.055, 0.045}, {0, 0, -0.13}, 0.5}},
      {0.4, 1.0});
  add(category::kBox, "box", false, false,
      {{PK::box, {0.1, 0.09, 0.095}, {0, 0, 0}, 1.0}},
      {0.1, 0.9});

  int tid = 0;
  auto rel = [&](int trig, int resp, Arity a) {
    cat.types.push_back(RelationType{tid++, trig, resp, a});
  };
  rel(category::kKnob, category::kBurner, Arity::one_to_one);
  rel(category::kSwitch, category::kCeilingLamp, Arity::one_to_one);
  rel(category::kHolder, category::kTowel, Arity::one_to_one);
  rel(category::kRemote, category::kTv, Arity::many_to_many);
  rel(category::kKnife, category::kFruit, Arity::many_to_many);
  rel(category::kSwitch, category::kDeskLamp, Arity::many_to_many);
  rel(category::kButton, category::kFan, Arity::many_to_many);
  rel(category::kButton, category::kDeskLamp, Arity::many_to_many);
  rel(category::kMicrowave, category::kMicrowave, Arity::one_to_one);  // self
  rel(category::kKettle, category::kKettle, Arity::one_to_one);       // self
  return cat;
}

// ---------------------------------------------------------------------------
// Room-family configuration
// ---------------------------------------------------------------------------

struct InventoryItem {
  int category_id = -1;
  int min_count = 0;
  int max_count = 0;
};

struct AmbiguitySpec {
  int trigger_category = -1;
  int responder_category = -1;
  std::vector<int> k_choices;       // group sizes to draw from
  std::string layout = "cluster";   // "cluster" (tight rows) or "spread"
};

struct RoomFamilyConfig {
  std::string name;
  std::array<double, 3> extent{4.0, 4.0, 2.5};
  std::size_t points_per_object = 128;
  double min_center_distance = 0.07;
  double placement_margin = 0.30;   // separation outside ambiguity clusters
  std::optional<AmbiguitySpec> ambiguity;
  std::vector<InventoryItem> inventory;
  std::vector<RelationType> grammar;  // derived from catalog at load time

  bool has_category(int id) const {
    for (const auto& item : inventory)
      if (item.category_id == id) return true;
    if (ambiguity && (ambiguity->trigger_category == id || ambiguity->responder_category == id))
      return true;
    return false;
  }
};

// The grammar subset is every catalog type whose categories both appear in
// the family inventory; this keeps the config invariant true by construction.
inline void derive_grammar(RoomFamilyConfig& cfg, const Catalog& cat) {
  cfg.grammar.clear();
  for (const auto& t : cat.types)
    if (cfg.has_category(t.trigger_category) && cfg.has_category(t.responder_category))
      cfg.grammar.push_back(t);
}

inline json family_to_json(const RoomFamilyConfig& cfg, const Catalog& cat) {
  json j;
  j["name"] = cfg.name;
  j["extent"] = {cfg.extent[0], cfg.extent[1], cfg.extent[2]};
  j["points_per_object"] = cfg.points_per_object;
  j["min_center_distance"] = cfg.min_center_distance;
  j["placement_margin"] = cfg.placement_margin;
  if (cfg.ambiguity) {
    j["ambiguity"] = {{"trigger", cat.by_id(cfg.ambiguity->trigger_category).name},
                      {"responder", cat.by_id(cfg.ambiguity->responder_category).name},
                      {"k_choices", cfg.ambiguity->k_choices},
                      {"layout", cfg.ambiguity->layout}};
  }
  json inv = json::array();
  for (const auto& item : cfg.inventory)
    inv.push_back({{"category", cat.by_id(item.category_id).name},
                   {"min", item.min_count},
                   {"max", item.max_count}});
  j["inventory"] = inv;
  return j;
}

inline RoomFamilyConfig family_from_json(const json& j, const Catalog& cat) {
  RoomFamilyConfig cfg;
  cfg.name = j.at("name").get<std::string>();
  if (j.contains("extent")) {
    const auto& e = j.at("extent");
    cfg.extent = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()};
  }
  cfg.points_per_object = j.value("points_per_object", cfg.points_per_object);
  cfg.min_center_distance = j.value("min_center_distance", cfg.min_center_distance);
  cfg.placement_margin = j.value("placement_margin", cfg.placement_margin);
  if (j.contains("ambiguity")) {
    AmbiguitySpec a;
    a.trigger_category = cat.by_name(j.at("ambiguity").at("trigger").get<std::string>()).id;
    a.responder_category = cat.by_name(j.at("ambiguity").at("responder").get<std::string>()).id;
    a.k_choices = j.at("ambiguity").at("k_choices").get<std::vector<int>>();
    a.layout = j.at("ambiguity").value("layout", "cluster");
    if (a.k_choices.empty()) throw std::invalid_argument("family config: empty k_choices");
    cfg.ambiguity = a;
  }
  for (const auto& ji : j.at("inventory")) {
    InventoryItem item;
    item.category_id = cat.by_name(ji.at("category").get<std::string>()).id;
    item.min_count = ji.at("min").get<int>();
    item.max_count = ji.at("max").get<int>();
    if (item.min_count < 0 || item.max_count < item.min_count)
      throw std::invalid_argument("family config: bad count range");
    cfg.inventory.push_back(item);
  }
  derive_grammar(cfg, cat);
  return cfg;
}

// Shipped defaults: four room families sharing some categories and holding
// out others so cross-family transfer has genuinely unseen categories.
inline std::vector<RoomFamilyConfig> default_families(const Catalog& cat) {
  auto make = [&](const std::string& name, std::optional<AmbiguitySpec> amb,
                  std::vector<InventoryItem> inv) {
    RoomFamilyConfig cfg;
    cfg.name = name;
    cfg.ambiguity = std::move(amb);
    cfg.inventory = std::move(inv);
    derive_grammar(cfg, cat);
    return cfg;
  };
  using namespace category;
  std::vector<RoomFamilyConfig> out;
  out.push_back(make("kitchen",
                     AmbiguitySpec{kKnob, kBurner, {2, 3, 4}, "cluster"},
                     {{kMicrowave, 0, 1}, {kKettle, 0, 1}, {kKnife, 1, 2}, {kFruit, 1, 3},
                      {kBox, 1, 2}, {kBook, 0, 1}}));
  out.push_back(make("office",
                     AmbiguitySpec{kSwitch, kCeilingLamp, {1, 2}, "spread"},
                     {{kDeskLamp, 1, 2}, {kRemote, 0, 1}, {kTv, 0, 1}, {kButton, 1, 2},
                      {kFan, 0, 1}, {kBook, 1, 2}, {kPlant, 0, 1}}));
  out.push_back(make("bedroom",
                     AmbiguitySpec{kSwitch, kCeilingLamp, {2, 3}, "spread"},
                     {{kDeskLamp, 0, 1}, {kRemote, 1, 1}, {kTv, 1, 1}, {kKettle, 0, 1},
                      {kBook, 0, 2}, {kPlant, 0, 1}, {kBox, 0, 1}}));
  out.push_back(make("bathroom",
                     AmbiguitySpec{kHolder, kTowel, {2, 3}, "cluster"},
                     {{kSwitch, 1, 1}, {kCeilingLamp, 1, 1}, {kKettle, 0, 1}, {kBox, 1, 2},
                      {kPlant, 0, 1}}));
  return out;
}

inline std::vector<RoomFamilyConfig> families_from_config_file(const std::filesystem::path& path,
                                                               const Catalog& cat) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open '" + path.string() + "'");
  json j;
  is >> j;
  std::vector<RoomFamilyConfig> out;
  for (const auto& jf : j.at("families")) out.push_back(family_from_json(jf, cat));
  if (out.empty()) throw std::runtime_error("config: no families in '" + path.string() + "'");
  return out;
}

inline void write_config_file(const std::filesystem::path& path,
                              const std::vector<RoomFamilyConfig>& families, const Catalog& cat) {
  json j;
  json fams = json::array();
  for (const auto& f : families) fams.push_back(family_to_json(f, cat));
  j["families"] = fams;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("config: cannot write '" + path.string() + "'");
  os << j.dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Scene generation
// ---------------------------------------------------------------------------

namespace detail {

struct PlannedObject {
  int category_id;
  int group_rank = -1;  // index within the ambiguity group, -1 otherwise
};

// Greedy nearest binding: pairs sorted by ascending distance, residual ties
// by lower responder then trigger index; both endpoints bound at most once.
inline std::vector<std::pair<std::size_t, std::size_t>> greedy_binding(
    const std::vector<std::size_t>& triggers, const std::vector<std::size_t>& responders,
    const std::vector<ObjectInstance>& objects) {
  struct Pair {
    double dist;
    std::size_t t, r;
  };
  std::vector<Pair> pairs;
  for (std::size_t t : triggers)
    for (std::size_t r : responders) pairs.push_back({center_distance(objects[t], objects[r]), t, r});
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.r != b.r) return a.r < b.r;
    return a.t < b.t;
  });
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::vector<std::size_t> bound_t, bound_r;
  for (const auto& p : pairs) {
    if (std::find(bound_t.begin(), bound_t.end(), p.t) != bound_t.end()) continue;
    if (std::find(bound_r.begin(), bound_r.end(), p.r) != bound_r.end()) continue;
    out.push_back({p.t, p.r});
    bound_t.push_back(p.t);
    bound_r.push_back(p.r);
  }
  return out;
}

// Exhaustive minimal-total-distance assignment for small equal-size groups.
inline std::vector<std::pair<std::size_t, std::size_t>> brute_force_assignment(
    const std::vector<std::size_t>& triggers, const std::vector<std::size_t>& responders,
    const std::vector<ObjectInstance>& objects) {
  std::vector<std::size_t> perm(responders.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t k = 0; k < triggers.size(); ++k)
      cost += center_distance(objects[triggers[k]], objects[responders[perm[k]]]);
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 0; k < triggers.size(); ++k) out.push_back({triggers[k], responders[best[k]]});
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Deterministic in (config, seed). Many-to-many types connect all matching
// pairs; one-to-one types bind greedily by nearest center distance; the
// ambiguity-group binding is re-laid-out until greedy agrees with the
// brute-force minimal-sum assignment.
inline Scene generate_scene(const Catalog& cat, const RoomFamilyConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  Scene scene;
  scene.family = cfg.name;
  {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(seed));
    scene.scene_id = cfg.name + "-" + buf;
  }
  scene.relation_types = cfg.grammar;

  // Decide instance counts. One-to-one (non-self) types get matched counts
  // so every trigger can bind.
  std::map<int, int> counts;
  int group_k = 0;
  if (cfg.ambiguity) {
    group_k = cfg.ambiguity->k_choices[rng.uniform_index(cfg.ambiguity->k_choices.size())];
    counts[cfg.ambiguity->trigger_category] = group_k;
    counts[cfg.ambiguity->responder_category] = group_k;
    scene.ambiguity_group_sizes.push_back(group_k);
  }
  for (const auto& item : cfg.inventory)
    counts[item.category_id] = rng.uniform_int(item.min_count, item.max_count);
  for (const auto& t : cfg.grammar) {
    if (t.arity != Arity::one_to_one || t.is_self()) continue;
    if (cfg.ambiguity && t.trigger_category == cfg.ambiguity->trigger_category) continue;
    counts[t.responder_category] = counts[t.trigger_category];
  }

  std::vector<detail::PlannedObject> plan;
  if (cfg.ambiguity) {
    for (int k = 0; k < group_k; ++k) plan.push_back({cfg.ambiguity->trigger_category, k});
    for (int k = 0; k < group_k; ++k) plan.push_back({cfg.ambiguity->responder_category, k});
  }
  for (const auto& [cid, c] : counts) {
    if (cfg.ambiguity &&
        (cid == cfg.ambiguity->trigger_category || cid == cfg.ambiguity->responder_category))
      continue;
    for (int k = 0; k < c; ++k) plan.push_back({cid, -1});
  }
  if (plan.empty()) throw std::runtime_error("generate_scene: empty inventory for '" + cfg.name + "'");

  // Shapes are sampled once; placement retries only re-draw positions.
  std::vector<ObjectInstance> objects;
  for (const auto& po : plan) {
    const auto& tmpl = cat.by_id(po.category_id);
    auto cloud = normalize_pointcloud(sample_category_cloud(tmpl, cfg.points_per_object, rng));
    ObjectInstance o;
    o.points = std::move(cloud.points);
    o.point_count = cfg.points_per_object;
    o.scale = cloud.scale;
    o.category_id = po.category_id;
    o.trigger = tmpl.trigger;
    o.responder = tmpl.responder;
    objects.push_back(std::move(o));
  }

  const double margin = cfg.placement_margin;
  for (int attempt = 0; attempt < 50; ++attempt) {
    bool placed_ok = true;
    std::vector<bool> in_cluster(plan.size(), false);

    if (cfg.ambiguity && cfg.ambiguity->layout == "cluster") {
      // Tight rows: triggers in one row, responders in a parallel row with a
      // jittered lateral offset. All pairwise distances stay comparable, so
      // the pairing is geometrically subtle.
      const double span = 0.13 * group_k;
      const double ax = rng.uniform(margin + span, cfg.extent[0] - margin - span);
      const double ay = rng.uniform(margin + 0.3, cfg.extent[1] - margin - 0.3);
      const double row_dx = rng.uniform(-0.06, 0.06);
      for (int k = 0; k < group_k; ++k) {
        auto& trig = objects[static_cast<std::size_t>(k)];
        const auto& ttmpl = cat.by_id(cfg.ambiguity->trigger_category);
        trig.center = {ax + 0.10 * k + rng.uniform(-0.02, 0.02),
                       ay - 0.10 + rng.uniform(-0.015, 0.015),
                       rng.uniform(ttmpl.z_range[0], ttmpl.z_range[1])};
        in_cluster[static_cast<std::size_t>(k)] = true;
        auto& resp = objects[static_cast<std::size_t>(group_k + k)];
        const auto& rtmpl = cat.by_id(cfg.ambiguity->responder_category);
        resp.center = {ax + row_dx + 0.13 * k + rng.uniform(-0.02, 0.02),
                       ay + 0.10 + rng.uniform(-0.015, 0.015),
                       rng.uniform(rtmpl.z_range[0], rtmpl.z_range[1])};
        in_cluster[static_cast<std::size_t>(group_k + k)] = true;
      }
    } else if (cfg.ambiguity) {
      // Spread layout: triggers in a wall row, responders scattered.
      const double ty = margin;
      const double x0 = rng.uniform(margin, std::max(margin + 0.1, cfg.extent[0] - margin - 0.35 * group_k));
      for (int k = 0; k < group_k; ++k) {
        auto& trig = objects[static_cast<std::size_t>(k)];
        const auto& ttmpl = cat.by_id(cfg.ambiguity->trigger_category);
        trig.center = {x0 + 0.35 * k + rng.uniform(-0.05, 0.05), ty + rng.uniform(0.0, 0.1),
                       rng.uniform(ttmpl.z_range[0], ttmpl.z_range[1])};
        in_cluster[static_cast<std::size_t>(k)] = true;
      }
      for (int k = 0; k < group_k; ++k) {
        auto& resp = objects[static_cast<std::size_t>(group_k + k)];
        const auto& rtmpl = cat.by_id(cfg.ambiguity->responder_category);
        bool ok = false;
        for (int tries = 0; tries < 100 && !ok; ++tries) {
          resp.center = {rng.uniform(margin, cfg.extent[0] - margin),
                         rng.uniform(margin + 0.6, cfg.extent[1] - margin),
                         rng.uniform(rtmpl.z_range[0], rtmpl.z_range[1])};
          ok = true;
          for (int k2 = 0; k2 < k; ++k2)
            if (center_distance(resp, objects[static_cast<std::size_t>(group_k + k2)]) < 0.8) ok = false;
        }
        if (!ok) placed_ok = false;
        in_cluster[static_cast<std::size_t>(group_k + k)] = true;
      }
    }

    for (std::size_t idx = 0; idx < plan.size() && placed_ok; ++idx) {
      if (in_cluster[idx]) continue;
      const auto& tmpl = cat.by_id(plan[idx].category_id);

      // Functional partners co-locate: objects of many-to-many types are
      // sometimes dropped near an already-placed counterpart.
      std::vector<std::size_t> anchors;
      for (const auto& t : cfg.grammar) {
        if (t.arity != Arity::many_to_many) continue;
        int partner = -1;
        if (t.responder_category == plan[idx].category_id) partner = t.trigger_category;
        if (t.trigger_category == plan[idx].category_id) partner = t.responder_category;
        if (partner < 0) continue;
        for (std::size_t j = 0; j < plan.size(); ++j) {
          const bool placed = j < idx || in_cluster[j];
          if (placed && j != idx && plan[j].category_id == partner) anchors.push_back(j);
        }
      }
      const bool near_anchor = !anchors.empty() && rng.next_double() < 0.7;
      const std::size_t anchor = anchors.empty() ? 0 : anchors[rng.uniform_index(anchors.size())];

      bool ok = false;
      for (int tries = 0; tries < 200 && !ok; ++tries) {
        if (near_anchor && tries < 100) {
          const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
          const double rad = rng.uniform(0.16, 0.38);
          objects[idx].center = {objects[anchor].center[0] + rad * std::cos(ang),
                                 objects[anchor].center[1] + rad * std::sin(ang),
                                 std::clamp(objects[anchor].center[2] + rng.uniform(-0.12, 0.12),
                                            tmpl.z_range[0], tmpl.z_range[1])};
          if (objects[idx].center[0] < margin || objects[idx].center[0] > cfg.extent[0] - margin ||
              objects[idx].center[1] < margin || objects[idx].center[1] > cfg.extent[1] - margin)
            continue;
        } else {
          objects[idx].center = {rng.uniform(margin, cfg.extent[0] - margin),
                                 rng.uniform(margin, cfg.extent[1] - margin),
                                 rng.uniform(tmpl.z_range[0], tmpl.z_range[1])};
        }
        ok = true;
        for (std::size_t j = 0; j < plan.size(); ++j) {
          if (j == idx || (j > idx && !in_cluster[j])) continue;
          const double need = in_cluster[j] ? margin : std::max(cfg.min_center_distance, 0.15);
          if (center_distance(objects[idx], objects[j]) < need) {
            ok = false;
            break;
          }
        }
      }
      if (!ok) placed_ok = false;
    }
    if (!placed_ok) continue;

    // Global collision invariant.
    bool collide = false;
    for (std::size_t i = 0; i < objects.size() && !collide; ++i)
      for (std::size_t j = i + 1; j < objects.size(); ++j)
        if (center_distance(objects[i], objects[j]) < cfg.min_center_distance) {
          collide = true;
          break;
        }
    if (collide) continue;

    // Ground-truth edges from the grammar.
    RelationGraph gt(objects.size());
    bool binding_ok = true;
    for (const auto& t : cfg.grammar) {
      std::vector<std::size_t> trig, resp;
      for (std::size_t i = 0; i < objects.size(); ++i) {
        if (objects[i].category_id == t.trigger_category) trig.push_back(i);
        if (objects[i].category_id == t.responder_category) resp.push_back(i);
      }
      if (t.is_self()) {
        for (std::size_t i : trig) gt.set_edge(i, i, static_cast<std::int16_t>(t.type_id));
        continue;
      }
      if (t.arity == Arity::many_to_many) {
        for (std::size_t i : trig)
          for (std::size_t j : resp) gt.set_edge(i, j, static_cast<std::int16_t>(t.type_id));
        continue;
      }
      auto bound = detail::greedy_binding(trig, resp, objects);
      if (bound.size() != trig.size()) {
        binding_ok = false;
        break;
      }
      if (trig.size() >= 2 && trig.size() <= 4 && trig.size() == resp.size()) {
        auto greedy_sorted = bound;
        std::sort(greedy_sorted.begin(), greedy_sorted.end());
        if (greedy_sorted != detail::brute_force_assignment(trig, resp, objects)) {
          binding_ok = false;
          break;
        }
      }
      for (const auto& [i, j] : bound) gt.set_edge(i, j, static_cast<std::int16_t>(t.type_id));
    }
    if (!binding_ok) continue;

    scene.objects = objects;
    scene.ground_truth = std::move(gt);
    validate_scene(scene);
    return scene;
  }
  throw std::runtime_error("generate_scene: inventory unsatisfiable in room extent for family '" +
                           cfg.name + "' (50 layout attempts failed)");
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

struct DatasetStats {
  double objects_per_scene = 0.0;
  double edges_per_scene = 0.0;
  double trigger_fraction = 0.0;
  double ifr_within_half_meter = 0.0;
  std::map<std::string, int> per_category_counts;

  json to_json() const {
    json j;
    j["objects_per_scene"] = objects_per_scene;
    j["edges_per_scene"] = edges_per_scene;
    j["trigger_fraction"] = trigger_fraction;
    j["ifr_within_half_meter"] = ifr_within_half_meter;
    j["per_category_counts"] = per_category_counts;
    return j;
  }
};

inline DatasetStats dataset_stats(const Catalog& cat, const std::vector<Scene>& scenes) {
  DatasetStats st;
  std::size_t objects = 0, edges = 0, triggers = 0, near = 0;
  for (const auto& s : scenes) {
    objects += s.size();
    for (const auto& o : s.objects) {
      if (o.trigger) ++triggers;
      ++st.per_category_counts[cat.by_id(o.category_id).name];
    }
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j)
        if (s.ground_truth.edge(i, j)) {
          ++edges;
          if (center_distance(s.objects[i], s.objects[j]) < 0.5) ++near;
        }
  }
  const double ns = static_cast<double>(scenes.size());
  st.objects_per_scene = static_cast<double>(objects) / ns;
  st.edges_per_scene = static_cast<double>(edges) / ns;
  st.trigger_fraction = static_cast<double>(triggers) / static_cast<double>(objects);
  st.ifr_within_half_meter = edges ? static_cast<double>(near) / static_cast<double>(edges) : 0.0;
  return st;
}

// Writes scene files + manifest + stats under out_dir. Scene seeds are
// drawn sequentially from the master seed, so every scene is independently
// reproducible from the manifest.
inline Manifest generate_dataset(const Catalog& cat, const std::vector<RoomFamilyConfig>& families,
                                 std::size_t train_count, std::size_t test_count, std::uint64_t seed,
                                 const std::filesystem::path& out_dir) {
  if (families.empty()) throw std::invalid_argument("generate_dataset: no families");
  std::filesystem::create_directories(out_dir);
  Rng master(seed);
  Manifest manifest;
  std::vector<Scene> all;
  std::vector<std::string> seen_ids;

  auto emit = [&](const std::string& split, std::size_t total) {
    for (std::size_t k = 0; k < total; ++k) {
      const auto& fam = families[k % families.size()];
      const std::uint64_t scene_seed = master.next_u64();
      Scene s = generate_scene(cat, fam, scene_seed);
      if (std::find(seen_ids.begin(), seen_ids.end(), s.scene_id) != seen_ids.end())
        throw std::runtime_error("generate_dataset: duplicate scene id '" + s.scene_id + "'");
      seen_ids.push_back(s.scene_id);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s_%05zu.json", split.c_str(), k);
      save_scene(out_dir / buf, s);
      manifest.entries.push_back(ManifestEntry{buf, s.scene_id, s.family, split});
      all.push_back(std::move(s));
    }
  };
  emit("train", train_count);
  emit("test", test_count);

  manifest.stats = dataset_stats(cat, all).to_json();
  manifest.dir = out_dir;
  save_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

// ---------------------------------------------------------------------------
// Shape descriptor + separability check
//
// Fixed descriptor over a normalized cloud: covariance spectrum, radial
// statistics and sorted bounding-box extents. Used only to verify that the
// catalog's categories are geometrically distinguishable at all.
// ---------------------------------------------------------------------------

inline std::vector<double> shape_descriptor(const std::vector<double>& pts) {
  const std::size_t p = pts.size() / 3;
  std::array<std::array<double, 3>, 3> cov{};
  std::array<double, 3> lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
  double mean_norm = 0.0, sq_norm = 0.0, outer = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    double nsq = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double va = pts[i * 3 + a];
      lo[a] = std::min(lo[a], va);
      hi[a] = std::max(hi[a], va);
      nsq += va * va;
      for (int b = 0; b < 3; ++b) cov[a][b] += va * pts[i * 3 + b];
    }
    const double nrm = std::sqrt(nsq);
    mean_norm += nrm;
    sq_norm += nsq;
    if (nrm > 0.8) outer += 1.0;
  }
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) cov[a][b] /= static_cast<double>(p);
  mean_norm /= static_cast<double>(p);
  sq_norm /= static_cast<double>(p);
  outer /= static_cast<double>(p);

  // Eigenvalues of the symmetric 3x3 covariance via Jacobi sweeps.
  auto a = cov;
  for (int sweep = 0; sweep < 16; ++sweep) {
    for (int pi = 0; pi < 2; ++pi)
      for (int qi = pi + 1; qi < 3; ++qi) {
        if (std::abs(a[pi][qi]) < 1e-15) continue;
        const double theta = 0.5 * std::atan2(2.0 * a[pi][qi], a[qi][qi] - a[pi][pi]);
        const double c = std::cos(theta), s = std::sin(theta);
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][pi], akq = a[k][qi];
          a[k][pi] = c * akp - s * akq;
          a[k][qi] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[pi][k], aqk = a[qi][k];
          a[pi][k] = c * apk - s * aqk;
          a[qi][k] = s * apk + c * aqk;
        }
      }
  }
  std::array<double, 3> eig{a[0][0], a[1][1], a[2][2]};
  std::sort(eig.begin(), eig.end(), std::greater<>());
  const double tr = std::max(eig[0] + eig[1] + eig[2], 1e-12);
  std::array<double, 3> ext{hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
  std::sort(ext.begin(), ext.end(), std::greater<>());
  const double emax = std::max(ext[0], 1e-12);

  return {eig[0] / tr, eig[1] / tr, eig[2] / tr,
          mean_norm,   std::sqrt(std::max(sq_norm - mean_norm * mean_norm, 0.0)),
          outer,       ext[1] / emax,
          ext[2] / emax};
}

inline double descriptor_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sq);
}

// Probability that a same-category pair is closer than a cross-category
// pair under the fixed descriptor, estimated over random draws.
inline double category_separability(const Catalog& cat, Rng& rng, int samples_per_category = 12,
                                    std::size_t points = 128) {
  std::vector<std::vector<std::vector<double>>> desc(cat.categories.size());
  for (std::size_t c = 0; c < cat.categories.size(); ++c)
    for (int s = 0; s < samples_per_category; ++s) {
      auto cloud = normalize_pointcloud(sample_category_cloud(cat.categories[c], points, rng));
      desc[c].push_back(shape_descriptor(cloud.points));
    }
  std::size_t wins = 0, trials = 0;
  const std::size_t nc = cat.categories.size();
  for (int t = 0; t < 4000; ++t) {
    const std::size_t c1 = rng.uniform_index(nc);
    std::size_t c2 = rng.uniform_index(nc - 1);
    if (c2 >= c1) ++c2;
    const auto& a = desc[c1][rng.uniform_index(desc[c1].size())];
    const auto& b = desc[c1][rng.uniform_index(desc[c1].size())];
    const auto& x = desc[c2][rng.uniform_index(desc[c2].size())];
    const double same = descriptor_distance(a, b);
    const double cross = descriptor_distance(a, x);
    if (same < cross) ++wins;
    ++trials;
  }
  return static_cast<double>(wins) / static_cast<double>(trials);
}

}  // namespace ifr
