#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace edtn::mesh {

// Axis-aligned box [lo, hi] inside the unit cube; one subdomain of the partition.
struct BlockSpec {
  std::array<double, 3> lo{0.0, 0.0, 0.0};
  std::array<double, 3> hi{1.0, 1.0, 1.0};
};

// Structured tetrahedral mesh request: nx*ny*nz cells on the unit cube, each cell
// split into 6 tetrahedra, subdomain = containing block (block k has region id k+1).
// sigma_face selects the face of the cube carrying the measurement patch:
// one of "x-", "x+", "y-", "y+", "z-", "z+".
struct BlockMeshSpec {
  int nx = 1, ny = 1, nz = 1;
  std::vector<BlockSpec> blocks;
  std::string sigma_face = "z+";
};

inline constexpr std::int32_t marker_other = 0;
inline constexpr std::int32_t marker_sigma = 1;

struct PartitionedMesh {
  std::vector<std::array<double, 3>> vertices;

  struct Tet {
    std::array<std::int32_t, 4> v;
    std::int32_t region;  // 1-based subdomain id
  };
  std::vector<Tet> tets;

  struct BoundaryFace {
    std::array<std::int32_t, 3> v;
    std::int32_t marker;  // marker_sigma on the measurement patch, else marker_other
  };
  std::vector<BoundaryFace> faces;

  int num_regions = 0;

  std::uint64_t content_hash() const;
  std::string id() const;  // hex content hash, embedded in output files
};

struct MeshQuality {
  double h_max = 0.0;      // longest edge
  double shape_min = 1.0;  // min over tets of 3*inradius/circumradius (regular = 1)
  double total_volume = 0.0;
  std::vector<double> region_volume;  // indexed by region id - 1
};

struct PartitionReport {
  bool valid = false;
  MeshQuality quality;
  std::vector<std::string> violations;  // empty iff valid
  int chain_depth = 0;  // max graph distance from the patch-touching subdomains
};

// Throws edtn::GeometryError when the request itself is malformed (misaligned block
// faces, overlapping blocks, uncovered cells).
PartitionedMesh build_block_mesh(const BlockMeshSpec& spec);

// Structural checks on an arbitrary mesh; violations are reported, not thrown.
PartitionReport validate_partition(const PartitionedMesh& m);

MeshQuality mesh_quality(const PartitionedMesh& m);

double tet_volume(const PartitionedMesh& m, const PartitionedMesh::Tet& t);

// Plain ASCII container. Line 1: "emesh 1". Line 2: vertex/tet/face counts.
// Then vertex coordinate lines, tet lines with region id, boundary-face lines with
// marker. All indices 0-based. Round-trips coordinates exactly.
void save_mesh(const PartitionedMesh& m, const std::string& path);
// Throws edtn::ConfigError naming the offending line on malformed input.
PartitionedMesh load_mesh(const std::string& path);

}  // namespace edtn::mesh
