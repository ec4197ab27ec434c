#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ifr/generator.hpp"
#include "ifr/scene.hpp"

using namespace ifr;

namespace {
std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}
}  // namespace

TEST_CASE("normalize_pointcloud: translation removal and round trip") {
  // unit cube corners centered at (5,0,0)
  std::vector<double> raw;
  for (int x : {-1, 1})
    for (int y : {-1, 1})
      for (int z : {-1, 1}) {
        raw.push_back(5.0 + 0.5 * x);
        raw.push_back(0.5 * y);
        raw.push_back(0.5 * z);
      }
  auto nc = normalize_pointcloud(raw);
  CHECK(nc.center[0] == Catch::Approx(5.0).margin(1e-12));
  CHECK(nc.center[1] == Catch::Approx(0.0).margin(1e-12));
  CHECK(nc.center[2] == Catch::Approx(0.0).margin(1e-12));
  double cx = 0.0;
  for (std::size_t i = 0; i < 8; ++i) cx += nc.points[i * 3];
  CHECK(std::abs(cx / 8.0) < 1e-12);

  // already-normalized cloud -> identity
  auto again = normalize_pointcloud(nc.points);
  CHECK(again.scale == Catch::Approx(1.0).margin(1e-12));
  CHECK(std::abs(again.center[0]) < 1e-12);

  // random cloud reconstructs within 1e-9
  Rng rng(9);
  std::vector<double> cloud(3 * 50);
  for (auto& v : cloud) v = rng.uniform(-2.0, 3.0);
  auto n2 = normalize_pointcloud(cloud);
  for (std::size_t i = 0; i < 50; ++i)
    for (int d = 0; d < 3; ++d) {
      const double rec = n2.points[i * 3 + d] * n2.scale + n2.center[d];
      CHECK(std::abs(rec - cloud[i * 3 + d]) < 1e-9);
    }

  CHECK_THROWS_AS(normalize_pointcloud(std::vector<double>(9, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(normalize_pointcloud(std::vector<double>(30, 1.25)), std::invalid_argument);
}

TEST_CASE("world_points applies scale then center") {
  ObjectInstance obj;
  obj.points = {0.5, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, -0.5, 0.0};
  obj.point_count = 4;
  obj.scale = 2.0;
  obj.center = {1.0, 1.0, 1.0};
  auto w = world_points(obj);
  CHECK(w[0] == 2.0);
  CHECK(w[1] == 1.0);
  CHECK(w[2] == 1.0);

  obj.scale = 1.0;
  obj.center = {0.0, 0.0, 0.0};
  CHECK(world_points(obj) == obj.points);

  // inverse of normalize on a generated object
  Rng rng(12);
  Catalog cat = desk_catalog();
  auto raw = sample_category_cloud(cat.by_name("kettle"), 64, rng);
  auto nc = normalize_pointcloud(raw);
  ObjectInstance gen;
  gen.points = nc.points;
  gen.point_count = 64;
  gen.scale = nc.scale;
  gen.center = nc.center;
  auto rec = world_points(gen);
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK(std::abs(rec[i] - raw[i]) < 1e-9);
}

TEST_CASE("scene save/load round trip and distinct load errors") {
  Catalog cat = desk_catalog();
  auto fams = default_families(cat);
  for (auto& f : fams) f.points_per_object = 32;
  Scene s = generate_scene(cat, fams[0], 4242);

  auto dir = std::filesystem::temp_directory_path() / "ifr_scene_test";
  std::filesystem::create_directories(dir);
  save_scene(dir / "a.json", s);
  Scene loaded = load_scene(dir / "a.json");
  save_scene(dir / "b.json", loaded);

  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  CHECK(slurp(dir / "a.pts") == slurp(dir / "b.pts"));
  CHECK(loaded.ground_truth == s.ground_truth);
  CHECK(loaded.scene_id == s.scene_id);
  CHECK(loaded.objects.size() == s.objects.size());
  for (std::size_t k = 0; k < s.size(); ++k)
    CHECK(loaded.objects[k].category_id == s.objects[k].category_id);

  SECTION("edge from a background object is rejected on load") {
    json j;
    {
      std::ifstream is(dir / "a.json");
      is >> j;
    }
    std::size_t background = 0;
    for (std::size_t k = 0; k < s.size(); ++k)
      if (s.objects[k].background()) background = k;
    j["edges"].push_back({background, 0, s.relation_types[0].type_id});
    {
      std::ofstream os(dir / "c.json");
      os << j.dump(1) << '\n';
    }
    std::filesystem::copy_file(dir / "a.pts", dir / "c.pts",
                               std::filesystem::copy_options::overwrite_existing);
    CHECK_THROWS_WITH(load_scene(dir / "c.json"),
                      Catch::Matchers::ContainsSubstring("role"));
  }

  SECTION("version mismatch is reported distinctly") {
    json j;
    {
      std::ifstream is(dir / "a.json");
      is >> j;
    }
    j["version"] = 999;
    {
      std::ofstream os(dir / "v.json");
      os << j.dump(1) << '\n';
    }
    std::filesystem::copy_file(dir / "a.pts", dir / "v.pts",
                               std::filesystem::copy_options::overwrite_existing);
    CHECK_THROWS_WITH(load_scene(dir / "v.json"),
                      Catch::Matchers::ContainsSubstring("version"));
  }

  SECTION("truncated sidecar is reported distinctly") {
    std::filesystem::copy_file(dir / "a.json", dir / "t.json",
                               std::filesystem::copy_options::overwrite_existing);
    std::string bytes = slurp(dir / "a.pts");
    std::ofstream os(dir / "t.pts", std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    os.close();
    CHECK_THROWS_WITH(load_scene(dir / "t.json"),
                      Catch::Matchers::ContainsSubstring("truncated"));
  }

  SECTION("truncated json is reported distinctly") {
    std::string bytes = slurp(dir / "a.json");
    std::ofstream os(dir / "u.json");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 3));
    os.close();
    std::filesystem::copy_file(dir / "a.pts", dir / "u.pts",
                               std::filesystem::copy_options::overwrite_existing);
    CHECK_THROWS_WITH(load_scene(dir / "u.json"),
                      Catch::Matchers::ContainsSubstring("truncated or malformed"));
  }
}

TEST_CASE("dataset round trip preserves adjacency matrices") {
  Catalog cat = desk_catalog();
  auto fams = default_families(cat);
  for (auto& f : fams) f.points_per_object = 24;
  auto dir = std::filesystem::temp_directory_path() / "ifr_dataset_roundtrip";
  std::filesystem::remove_all(dir);
  Manifest m = generate_dataset(cat, fams, 16, 4, 777, dir);
  CHECK(m.entries.size() == 20);

  Manifest loaded = load_manifest(dir / "manifest.json");
  CHECK(loaded.entries.size() == 20);
  CHECK(loaded.split("train").size() == 16);
  CHECK(loaded.split("test").size() == 4);

  Rng master(777);
  for (const auto& e : loaded.entries) {
    Scene disk = load_scene(dir / e.file);
    Scene regen = generate_scene(
        cat, *std::find_if(fams.begin(), fams.end(),
                           [&](const auto& f) { return f.name == e.family; }),
        master.next_u64());
    CHECK(disk.ground_truth == regen.ground_truth);
    CHECK(disk.scene_id == regen.scene_id);
  }
}
