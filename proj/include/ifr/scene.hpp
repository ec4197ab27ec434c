// Scene data model: objects with normalized point clouds, directed
// functional-relation graphs with typed edges, and file serialization
// (JSON container + binary point sidecar).

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifr/tensor.hpp"

namespace ifr {

using json = nlohmann::json;

enum class Arity { one_to_one, many_to_many };

inline std::string to_string(Arity a) {
  return a == Arity::one_to_one ? "one_to_one" : "many_to_many";
}
inline Arity arity_from_string(const std::string& s) {
  if (s == "one_to_one") return Arity::one_to_one;
  if (s == "many_to_many") return Arity::many_to_many;
  throw std::invalid_argument("unknown arity '" + s + "'");
}

struct RelationType {
  int type_id = -1;
  int trigger_category = -1;
  int responder_category = -1;
  Arity arity = Arity::many_to_many;

  // Self relations are one-to-one types whose trigger and responder
  // category coincide; greedy nearest binding then pairs each instance
  // with itself (distance zero).
  bool is_self() const { return trigger_category == responder_category; }
};

struct ObjectInstance {
  // Normalized frame: centroid at origin, max point norm 1.
  std::vector<double> points;  // flattened P x 3, row-major
  std::size_t point_count = 0;
  std::array<double, 3> center{0.0, 0.0, 0.0};
  double scale = 1.0;
  int category_id = -1;  // present in files, never exposed to learners
  bool trigger = false;
  bool responder = false;

  bool background() const { return !trigger && !responder; }
};

struct RelationGraph {
  std::size_t n = 0;
  std::vector<std::uint8_t> adj;     // n*n, row i = effects of trigger i
  std::vector<std::int16_t> types;   // n*n, -1 where no edge

  RelationGraph() = default;
  explicit RelationGraph(std::size_t n_) : n(n_), adj(n_ * n_, 0), types(n_ * n_, -1) {}

  bool edge(std::size_t i, std::size_t j) const { return adj[i * n + j] != 0; }
  std::int16_t type_of(std::size_t i, std::size_t j) const { return types[i * n + j]; }
  void set_edge(std::size_t i, std::size_t j, std::int16_t type_id) {
    adj[i * n + j] = 1;
    types[i * n + j] = type_id;
  }
  std::size_t edge_count() const {
    std::size_t c = 0;
    for (auto v : adj) c += v;
    return c;
  }
  bool operator==(const RelationGraph& o) const { return n == o.n && adj == o.adj && types == o.types; }
};

struct Scene {
  std::string scene_id;
  std::string family;
  std::vector<ObjectInstance> objects;
  RelationGraph ground_truth;
  std::vector<RelationType> relation_types;  // catalog subset used by this scene
  std::vector<int> ambiguity_group_sizes;    // K per trigger/responder cluster

  std::size_t size() const { return objects.size(); }

  const RelationType* find_type(int type_id) const {
    for (const auto& t : relation_types)
      if (t.type_id == type_id) return &t;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Point-cloud normalization
// ---------------------------------------------------------------------------

struct NormalizedCloud {
  std::vector<double> points;
  std::array<double, 3> center;
  double scale;
};

// Zero-center and scale to unit max norm. raw = points*scale + center.
inline NormalizedCloud normalize_pointcloud(const std::vector<double>& raw) {
  if (raw.size() % 3 != 0) throw std::invalid_argument("normalize_pointcloud: size not divisible by 3");
  const std::size_t p = raw.size() / 3;
  if (p < 4) throw std::invalid_argument("normalize_pointcloud: need at least 4 points");
  std::array<double, 3> c{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < p; ++i)
    for (int d = 0; d < 3; ++d) c[d] += raw[i * 3 + d];
  for (int d = 0; d < 3; ++d) c[d] /= static_cast<double>(p);
  double max_norm = 0.0;
  std::vector<double> pts(raw.size());
  for (std::size_t i = 0; i < p; ++i) {
    double sq = 0.0;
    for (int d = 0; d < 3; ++d) {
      pts[i * 3 + d] = raw[i * 3 + d] - c[d];
      sq += pts[i * 3 + d] * pts[i * 3 + d];
    }
    max_norm = std::max(max_norm, std::sqrt(sq));
  }
  if (max_norm < 1e-12) throw std::invalid_argument("normalize_pointcloud: degenerate cloud");
  for (double& v : pts) v /= max_norm;
  return NormalizedCloud{std::move(pts), c, max_norm};
}

inline std::vector<double> world_points(const ObjectInstance& obj) {
  std::vector<double> out(obj.points.size());
  for (std::size_t i = 0; i < obj.point_count; ++i)
    for (int d = 0; d < 3; ++d) out[i * 3 + d] = obj.points[i * 3 + d] * obj.scale + obj.center[d];
  return out;
}

inline double center_distance(const ObjectInstance& a, const ObjectInstance& b) {
  double sq = 0.0;
  for (int d = 0; d < 3; ++d) {
    const double diff = a.center[d] - b.center[d];
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------
// Invariant validation
// ---------------------------------------------------------------------------

inline void validate_scene(const Scene& s) {
  if (s.objects.empty()) throw std::runtime_error("scene '" + s.scene_id + "': no objects");
  const std::size_t n = s.objects.size();
  if (s.ground_truth.n != n) throw std::runtime_error("scene '" + s.scene_id + "': graph size mismatch");
  for (std::size_t k = 0; k < n; ++k) {
    const auto& o = s.objects[k];
    if (o.scale <= 0.0) throw std::runtime_error("scene '" + s.scene_id + "': non-positive scale");
    if (o.point_count < 4) throw std::runtime_error("scene '" + s.scene_id + "': too few points");
    std::array<double, 3> c{0.0, 0.0, 0.0};
    double max_norm = 0.0;
    for (std::size_t i = 0; i < o.point_count; ++i) {
      double sq = 0.0;
      for (int d = 0; d < 3; ++d) {
        c[d] += o.points[i * 3 + d];
        sq += o.points[i * 3 + d] * o.points[i * 3 + d];
      }
      max_norm = std::max(max_norm, std::sqrt(sq));
    }
    for (int d = 0; d < 3; ++d)
      if (std::abs(c[d] / static_cast<double>(o.point_count)) > 1e-6)
        throw std::runtime_error("scene '" + s.scene_id + "': object cloud not zero-centered");
    if (std::abs(max_norm - 1.0) > 1e-6)
      throw std::runtime_error("scene '" + s.scene_id + "': object cloud not unit-sized");
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!s.ground_truth.edge(i, j)) continue;
      if (!s.objects[i].trigger || !s.objects[j].responder)
        throw std::runtime_error("scene '" + s.scene_id + "': edge (" + std::to_string(i) + "," +
                                 std::to_string(j) + ") violates role flags");
      const RelationType* rt = s.find_type(s.ground_truth.type_of(i, j));
      if (rt == nullptr)
        throw std::runtime_error("scene '" + s.scene_id + "': edge type " +
                                 std::to_string(s.ground_truth.type_of(i, j)) + " not in catalog");
      if (rt->trigger_category != s.objects[i].category_id ||
          rt->responder_category != s.objects[j].category_id)
        throw std::runtime_error("scene '" + s.scene_id + "': edge categories do not match its type");
    }
}

// ---------------------------------------------------------------------------
// Serialization
//
// <name>.json holds metadata, per-object fields and edges; <name>.pts is a
// binary sidecar of all point arrays (little-endian float32, row-major
// P x 3 per object, objects concatenated in index order).
// ---------------------------------------------------------------------------

namespace scene_io {

inline constexpr std::uint32_t kSceneVersion = 1;
inline constexpr char kPointsMagic[8] = {'I', 'F', 'R', 'P', 'T', 'S', '1', '\0'};

inline void write_points_sidecar(const std::filesystem::path& path, const Scene& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("scene: cannot write '" + path.string() + "'");
  os.write(kPointsMagic, 8);
  const std::uint32_t n = static_cast<std::uint32_t>(s.objects.size());
  const std::uint32_t p = static_cast<std::uint32_t>(s.objects.empty() ? 0 : s.objects[0].point_count);
  os.write(reinterpret_cast<const char*>(&n), 4);
  os.write(reinterpret_cast<const char*>(&p), 4);
  for (const auto& obj : s.objects) {
    if (obj.point_count != p) throw std::runtime_error("scene: ragged point counts not supported");
    std::vector<float> buf(obj.points.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(obj.points[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("scene: write failed for '" + path.string() + "'");
}

inline std::vector<std::vector<double>> read_points_sidecar(const std::filesystem::path& path,
                                                            std::size_t expect_objects) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("scene: missing point sidecar '" + path.string() + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kPointsMagic, 8) != 0)
    throw std::runtime_error("scene: bad point sidecar magic in '" + path.string() + "'");
  std::uint32_t n = 0, p = 0;
  if (!is.read(reinterpret_cast<char*>(&n), 4) || !is.read(reinterpret_cast<char*>(&p), 4))
    throw std::runtime_error("scene: truncated point sidecar '" + path.string() + "'");
  if (n != expect_objects)
    throw std::runtime_error("scene: point sidecar object count mismatch in '" + path.string() + "'");
  std::vector<std::vector<double>> out(n);
  std::vector<float> buf(static_cast<std::size_t>(p) * 3);
  for (std::uint32_t k = 0; k < n; ++k) {
    if (!is.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float))))
      throw std::runtime_error("scene: truncated point sidecar '" + path.string() + "'");
    out[k].assign(buf.begin(), buf.end());
  }
  return out;
}

}  // namespace scene_io

inline void save_scene(const std::filesystem::path& path, const Scene& s) {
  validate_scene(s);
  json j;
  j["format"] = "ifr-scene";
  j["version"] = scene_io::kSceneVersion;
  j["scene_id"] = s.scene_id;
  j["family"] = s.family;
  j["ambiguity_groups"] = s.ambiguity_group_sizes;
  j["points_per_object"] = s.objects.empty() ? 0 : s.objects[0].point_count;
  json objs = json::array();
  for (const auto& o : s.objects) {
    json jo;
    jo["category"] = o.category_id;
    jo["trigger"] = o.trigger;
    jo["responder"] = o.responder;
    jo["center"] = {o.center[0], o.center[1], o.center[2]};
    jo["scale"] = o.scale;
    objs.push_back(jo);
  }
  j["objects"] = objs;
  json types = json::array();
  for (const auto& t : s.relation_types)
    types.push_back({{"id", t.type_id},
                     {"trigger", t.trigger_category},
                     {"responder", t.responder_category},
                     {"arity", to_string(t.arity)}});
  j["relation_types"] = types;
  json edges = json::array();
  for (std::size_t i = 0; i < s.ground_truth.n; ++i)
    for (std::size_t k = 0; k < s.ground_truth.n; ++k)
      if (s.ground_truth.edge(i, k))
        edges.push_back({i, k, s.ground_truth.type_of(i, k)});
  j["edges"] = edges;

  std::ofstream os(path);
  if (!os) throw std::runtime_error("scene: cannot write '" + path.string() + "'");
  os << j.dump(1) << '\n';
  scene_io::write_points_sidecar(std::filesystem::path(path).replace_extension(".pts"), s);
}

inline Scene load_scene(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("scene: cannot open '" + path.string() + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("scene: truncated or malformed file '" + path.string() + "': " + e.what());
  }
  if (j.value("format", "") != "ifr-scene")
    throw std::runtime_error("scene: '" + path.string() + "' is not a scene file");
  if (j.value("version", 0u) != scene_io::kSceneVersion)
    throw std::runtime_error("scene: unsupported version " + std::to_string(j.value("version", 0u)) +
                             " in '" + path.string() + "'");
  Scene s;
  s.scene_id = j.at("scene_id").get<std::string>();
  s.family = j.at("family").get<std::string>();
  s.ambiguity_group_sizes = j.value("ambiguity_groups", std::vector<int>{});
  for (const auto& jt : j.at("relation_types")) {
    RelationType t;
    t.type_id = jt.at("id").get<int>();
    t.trigger_category = jt.at("trigger").get<int>();
    t.responder_category = jt.at("responder").get<int>();
    t.arity = arity_from_string(jt.at("arity").get<std::string>());
    s.relation_types.push_back(t);
  }
  const auto& jobjs = j.at("objects");
  auto clouds = scene_io::read_points_sidecar(std::filesystem::path(path).replace_extension(".pts"),
                                              jobjs.size());
  std::size_t k = 0;
  for (const auto& jo : jobjs) {
    ObjectInstance o;
    o.category_id = jo.at("category").get<int>();
    o.trigger = jo.at("trigger").get<bool>();
    o.responder = jo.at("responder").get<bool>();
    const auto& c = jo.at("center");
    o.center = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
    o.scale = jo.at("scale").get<double>();
    o.points = std::move(clouds[k++]);
    o.point_count = o.points.size() / 3;
    s.objects.push_back(std::move(o));
  }
  s.ground_truth = RelationGraph(s.objects.size());
  for (const auto& je : j.at("edges")) {
    const auto i = je.at(0).get<std::size_t>();
    const auto jj = je.at(1).get<std::size_t>();
    if (i >= s.size() || jj >= s.size())
      throw std::runtime_error("scene: edge index out of range in '" + path.string() + "'");
    s.ground_truth.set_edge(i, jj, je.at(2).get<std::int16_t>());
  }
  validate_scene(s);
  return s;
}

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string file;  // relative to the manifest directory
  std::string scene_id;
  std::string family;
  std::string split;  // "train" | "test"
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  json stats;
  std::filesystem::path dir;  // set on load

  std::vector<ManifestEntry> split(const std::string& tag) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.split == tag) out.push_back(e);
    return out;
  }
};

inline void save_manifest(const std::filesystem::path& path, const Manifest& m) {
  json j;
  j["format"] = "ifr-manifest";
  j["version"] = 1;
  json scenes = json::array();
  for (const auto& e : m.entries)
    scenes.push_back(
        {{"file", e.file}, {"scene_id", e.scene_id}, {"family", e.family}, {"split", e.split}});
  j["scenes"] = scenes;
  j["stats"] = m.stats;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("manifest: cannot write '" + path.string() + "'");
  os << j.dump(1) << '\n';
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("manifest: cannot open '" + path.string() + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest: malformed file '" + path.string() + "': " + e.what());
  }
  if (j.value("format", "") != "ifr-manifest")
    throw std::runtime_error("manifest: '" + path.string() + "' is not a manifest");
  Manifest m;
  m.dir = std::filesystem::path(path).parent_path();
  for (const auto& je : j.at("scenes")) {
    ManifestEntry e;
    e.file = je.at("file").get<std::string>();
    e.scene_id = je.at("scene_id").get<std::string>();
    e.family = je.at("family").get<std::string>();
    e.split = je.at("split").get<std::string>();
    m.entries.push_back(std::move(e));
  }
  m.stats = j.value("stats", json::object());
  return m;
}

inline std::vector<Scene> load_scenes(const Manifest& m, const std::string& split_tag) {
  std::vector<Scene> out;
  std::vector<std::string> seen;
  for (const auto& e : m.entries) {
    if (e.split != split_tag) continue;
    out.push_back(load_scene(m.dir / e.file));
  }
  return out;
}

}  // namespace ifr
