#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "edtn/errors.hpp"
#include "edtn/mesh.hpp"

using namespace edtn;
using namespace edtn::mesh;

namespace {

BlockMeshSpec two_block_z(int n) {
  BlockMeshSpec s;
  s.nx = s.ny = s.nz = n;
  s.blocks.push_back({{0, 0, 0}, {1, 1, 0.5}});
  s.blocks.push_back({{0, 0, 0.5}, {1, 1, 1}});
  s.sigma_face = "z-";
  return s;
}

}  // namespace

TEST_CASE("structured cube counts: vertices, tets, boundary faces, patch faces") {
  for (int n : {1, 2, 4}) {
    BlockMeshSpec s;
    s.nx = s.ny = s.nz = n;
    s.blocks.push_back({{0, 0, 0}, {1, 1, 1}});
    s.sigma_face = "z+";
    const PartitionedMesh m = build_block_mesh(s);
    CHECK(m.vertices.size() == std::size_t((n + 1) * (n + 1) * (n + 1)));
    CHECK(m.tets.size() == std::size_t(6 * n * n * n));
    CHECK(m.faces.size() == std::size_t(12 * n * n));
    CHECK(m.num_regions == 1);
    int sigma = 0;
    for (const auto& f : m.faces)
      if (f.marker == marker_sigma) {
        ++sigma;
        for (auto v : f.v) CHECK(m.vertices[v][2] == doctest::Approx(1.0));
      }
    CHECK(sigma == 2 * n * n);
  }
}

TEST_CASE("volumes: every tet positive, total volume one, regions match blocks") {
  const PartitionedMesh m = build_block_mesh(two_block_z(4));
  double total = 0.0;
  for (const auto& t : m.tets) {
    const double v = tet_volume(m, t);
    CHECK(v > 0.0);
    total += v;
    // region assignment by tet centroid z-coordinate
    double cz = 0.0;
    for (auto vi : t.v) cz += 0.25 * m.vertices[vi][2];
    CHECK(t.region == (cz < 0.5 ? 1 : 2));
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  const MeshQuality q = mesh_quality(m);
  CHECK(q.total_volume == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(q.region_volume.size() == 2);
  CHECK(q.region_volume[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(q.region_volume[1] == doctest::Approx(0.5).epsilon(1e-12));
  // longest edge of the Kuhn split is the cell diagonal
  CHECK(q.h_max == doctest::Approx(std::sqrt(3.0) / 4.0).epsilon(1e-12));
  CHECK(q.shape_min > 0.0);
  CHECK(q.shape_min <= 1.0);
}

TEST_CASE("partition validation accepts built meshes and reports chain depth") {
  const PartitionReport rep = validate_partition(build_block_mesh(two_block_z(2)));
  CHECK(rep.valid);
  CHECK(rep.violations.empty());
  CHECK(rep.chain_depth == 1);  // patch z-, far block one interface away

  BlockMeshSpec sx = two_block_z(2);
  sx.blocks[0] = {{0, 0, 0}, {0.5, 1, 1}};
  sx.blocks[1] = {{0.5, 0, 0}, {1, 1, 1}};
  const PartitionReport rx = validate_partition(build_block_mesh(sx));
  CHECK(rx.valid);
  CHECK(rx.chain_depth == 0);  // both blocks touch the patch
}

TEST_CASE("partition validation flags broken meshes") {
  PartitionedMesh m = build_block_mesh(two_block_z(2));

  SUBCASE("region id out of range") {
    m.tets[0].region = 7;
    const PartitionReport rep = validate_partition(m);
    CHECK_FALSE(rep.valid);
    bool found = false;
    for (const auto& v : rep.violations)
      if (v.find("region id") != std::string::npos) found = true;
    CHECK(found);
  }
  SUBCASE("inverted tet") {
    std::swap(m.tets[0].v[0], m.tets[0].v[1]);
    const PartitionReport rep = validate_partition(m);
    CHECK_FALSE(rep.valid);
  }
  SUBCASE("missing boundary face") {
    m.faces.pop_back();
    const PartitionReport rep = validate_partition(m);
    CHECK_FALSE(rep.valid);
  }
  SUBCASE("vertex index out of range") {
    m.tets[0].v[0] = 100000;
    const PartitionReport rep = validate_partition(m);
    CHECK_FALSE(rep.valid);
  }
  SUBCASE("no patch marker") {
    for (auto& f : m.faces) f.marker = marker_other;
    const PartitionReport rep = validate_partition(m);
    CHECK_FALSE(rep.valid);
  }
}

TEST_CASE("malformed block specs are rejected with geometry errors") {
  BlockMeshSpec s = two_block_z(4);
  SUBCASE("misaligned interface") {
    s.blocks[0].hi[2] = 0.4;  // not a multiple of 1/4
    s.blocks[1].lo[2] = 0.4;
    CHECK_THROWS_AS(build_block_mesh(s), GeometryError);
  }
  SUBCASE("overlap") {
    s.blocks[1].lo[2] = 0.25;
    CHECK_THROWS_AS(build_block_mesh(s), GeometryError);
  }
  SUBCASE("uncovered cells") {
    s.blocks[1].lo[2] = 0.75;
    CHECK_THROWS_AS(build_block_mesh(s), GeometryError);
  }
  SUBCASE("empty block") {
    s.blocks[0].hi[0] = 0.0;
    CHECK_THROWS_AS(build_block_mesh(s), GeometryError);
  }
  SUBCASE("bad sigma face") {
    s.sigma_face = "w+";
    CHECK_THROWS_AS(build_block_mesh(s), GeometryError);
  }
  SUBCASE("no blocks") {
    s.blocks.clear();
    CHECK_THROWS_AS(build_block_mesh(s), GeometryError);
  }
  SUBCASE("zero resolution") {
    s.nx = 0;
    CHECK_THROWS_AS(build_block_mesh(s), GeometryError);
  }
}

TEST_CASE("save/load round trip preserves the content hash") {
  const PartitionedMesh m = build_block_mesh(two_block_z(2));
  const auto path =
      (std::filesystem::temp_directory_path() / "edtn_mesh_roundtrip.txt").string();
  save_mesh(m, path);
  const PartitionedMesh r = load_mesh(path);
  CHECK(r.vertices.size() == m.vertices.size());
  CHECK(r.tets.size() == m.tets.size());
  CHECK(r.faces.size() == m.faces.size());
  CHECK(r.num_regions == m.num_regions);
  CHECK(r.content_hash() == m.content_hash());
  CHECK(r.id() == m.id());
  std::remove(path.c_str());
}

TEST_CASE("load_mesh rejects malformed files with the line number") {
  const auto path =
      (std::filesystem::temp_directory_path() / "edtn_mesh_bad.txt").string();
  {
    FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("not a mesh header\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_mesh(path), ConfigError);
  std::remove(path.c_str());
}

TEST_CASE("mesh ids are deterministic and distinguish meshes") {
  const PartitionedMesh a = build_block_mesh(two_block_z(2));
  const PartitionedMesh b = build_block_mesh(two_block_z(2));
  CHECK(a.id() == b.id());
  CHECK(a.id().size() == 16);  // hex digest
  const PartitionedMesh c = build_block_mesh(two_block_z(4));
  CHECK(a.id() != c.id());
  BlockMeshSpec s = two_block_z(2);
  s.sigma_face = "z+";
  const PartitionedMesh d = build_block_mesh(s);
  CHECK(a.id() != d.id());
}
