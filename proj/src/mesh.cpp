#include "edtn/mesh.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "edtn/errors.hpp"
#include "edtn/hash.hpp"
#include "edtn/io.hpp"

namespace edtn::mesh {

namespace {

using V3 = Eigen::Vector3d;

V3 vertex(const PartitionedMesh& m, std::int32_t i) {
  return V3(m.vertices[i][0], m.vertices[i][1], m.vertices[i][2]);
}

double signed_volume(const V3& a, const V3& b, const V3& c, const V3& d) {
  return (b - a).cross(c - a).dot(d - a) / 6.0;
}

// Union-find over tets for connectivity checks.
struct DisjointSet {
  std::vector<std::int32_t> parent;
  explicit DisjointSet(std::size_t n) : parent(n) {
    for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<std::int32_t>(i);
  }
  std::int32_t find(std::int32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::int32_t a, std::int32_t b) { parent[find(a)] = find(b); }
};

std::array<std::int32_t, 3> sorted_face(std::int32_t a, std::int32_t b, std::int32_t c) {
  std::array<std::int32_t, 3> f{a, b, c};
  std::sort(f.begin(), f.end());
  return f;
}

// The four faces of a tet, each opposite one vertex.
std::array<std::array<std::int32_t, 3>, 4> tet_faces(const PartitionedMesh::Tet& t) {
  return {sorted_face(t.v[1], t.v[2], t.v[3]), sorted_face(t.v[0], t.v[2], t.v[3]),
          sorted_face(t.v[0], t.v[1], t.v[3]), sorted_face(t.v[0], t.v[1], t.v[2])};
}

int sigma_axis(const std::string& face) {
  if (face.size() != 2 || (face[1] != '-' && face[1] != '+') ||
      (face[0] != 'x' && face[0] != 'y' && face[0] != 'z'))
    throw GeometryError("sigma_face must be one of x-,x+,y-,y+,z-,z+; got '" + face +
                        "'");
  return face[0] - 'x';
}

double sigma_plane(const std::string& face) { return face[1] == '+' ? 1.0 : 0.0; }

}  // namespace

std::uint64_t PartitionedMesh::content_hash() const {
  Fnv1a h;
  h.add(static_cast<std::int64_t>(vertices.size()));
  for (const auto& v : vertices) {
    h.add(v[0]);
    h.add(v[1]);
    h.add(v[2]);
  }
  h.add(static_cast<std::int64_t>(tets.size()));
  for (const auto& t : tets) {
    for (auto i : t.v) h.add(i);
    h.add(t.region);
  }
  h.add(static_cast<std::int64_t>(faces.size()));
  for (const auto& f : faces) {
    for (auto i : f.v) h.add(i);
    h.add(f.marker);
  }
  h.add(num_regions);
  return h.value();
}

std::string PartitionedMesh::id() const { return hash_hex(content_hash()); }

double tet_volume(const PartitionedMesh& m, const PartitionedMesh::Tet& t) {
  return signed_volume(vertex(m, t.v[0]), vertex(m, t.v[1]), vertex(m, t.v[2]),
                       vertex(m, t.v[3]));
}

PartitionedMesh build_block_mesh(const BlockMeshSpec& spec) {
  if (spec.nx < 1 || spec.ny < 1 || spec.nz < 1)
    throw GeometryError("grid resolution must be >= 1 in each direction");
  if (spec.blocks.empty()) throw GeometryError("at least one block is required");
  const int n[3] = {spec.nx, spec.ny, spec.nz};
  const int axis = sigma_axis(spec.sigma_face);
  const double plane = sigma_plane(spec.sigma_face);

  // Every block face must lie on a grid plane, so cells never straddle blocks.
  constexpr double align_tol = 1e-9;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& blk = spec.blocks[b];
    for (int a = 0; a < 3; ++a) {
      if (!(blk.lo[a] < blk.hi[a]))
        throw GeometryError("block " + std::to_string(b + 1) + " is empty on axis " +
                            std::to_string(a));
      if (blk.lo[a] < -align_tol || blk.hi[a] > 1.0 + align_tol)
        throw GeometryError("block " + std::to_string(b + 1) +
                            " exceeds the unit cube");
      for (double c : {blk.lo[a], blk.hi[a]}) {
        const double scaled = c * n[a];
        if (std::abs(scaled - std::round(scaled)) > align_tol * n[a] + align_tol)
          throw GeometryError("block " + std::to_string(b + 1) +
                              " face not aligned with the grid on axis " +
                              std::to_string(a));
      }
    }
  }

  PartitionedMesh m;
  m.num_regions = static_cast<int>(spec.blocks.size());
  const int vx = spec.nx + 1, vy = spec.ny + 1, vz = spec.nz + 1;
  m.vertices.reserve(static_cast<std::size_t>(vx) * vy * vz);
  for (int k = 0; k < vz; ++k)
    for (int j = 0; j < vy; ++j)
      for (int i = 0; i < vx; ++i)
        m.vertices.push_back({static_cast<double>(i) / spec.nx,
                              static_cast<double>(j) / spec.ny,
                              static_cast<double>(k) / spec.nz});
  auto vid = [&](int i, int j, int k) {
    return static_cast<std::int32_t>((static_cast<std::int64_t>(k) * vy + j) * vx + i);
  };

  auto cell_region = [&](int i, int j, int k) -> std::int32_t {
    const double c[3] = {(i + 0.5) / spec.nx, (j + 0.5) / spec.ny, (k + 0.5) / spec.nz};
    std::int32_t hit = 0;
    for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
      const auto& blk = spec.blocks[b];
      if (c[0] > blk.lo[0] && c[0] < blk.hi[0] && c[1] > blk.lo[1] &&
          c[1] < blk.hi[1] && c[2] > blk.lo[2] && c[2] < blk.hi[2]) {
        if (hit != 0)
          throw GeometryError("blocks overlap at cell (" + std::to_string(i) + "," +
                              std::to_string(j) + "," + std::to_string(k) + ")");
        hit = static_cast<std::int32_t>(b + 1);
      }
    }
    if (hit == 0)
      throw GeometryError("cell (" + std::to_string(i) + "," + std::to_string(j) + "," +
                          std::to_string(k) + ") is not covered by any block");
    return hit;
  };

  // Kuhn split: six tets per cell, one per permutation of the axes; each tet walks
  // from the low corner to the high corner. Shared cell faces match across cells.
  static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                  {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  std::vector<bool> region_used(spec.blocks.size(), false);
  for (int k = 0; k < spec.nz; ++k)
    for (int j = 0; j < spec.ny; ++j)
      for (int i = 0; i < spec.nx; ++i) {
        const std::int32_t region = cell_region(i, j, k);
        region_used[region - 1] = true;
        for (const auto& p : perms) {
          int off[3] = {0, 0, 0};
          std::array<std::int32_t, 4> tv;
          tv[0] = vid(i, j, k);
          for (int s = 0; s < 3; ++s) {
            off[p[s]] = 1;
            tv[s + 1] = vid(i + off[0], j + off[1], k + off[2]);
          }
          PartitionedMesh::Tet t{tv, region};
          if (tet_volume(m, t) < 0.0) std::swap(t.v[2], t.v[3]);
          m.tets.push_back(t);
        }
      }
  for (std::size_t b = 0; b < region_used.size(); ++b)
    if (!region_used[b])
      throw GeometryError("block " + std::to_string(b + 1) + " contains no cells");

  // Boundary faces: tet faces seen exactly once.
  std::map<std::array<std::int32_t, 3>, int> count;
  for (const auto& t : m.tets)
    for (const auto& f : tet_faces(t)) ++count[f];
  const double tol = 1e-12;
  for (const auto& [f, c] : count) {
    if (c == 1) {
      bool on_sigma = true;
      for (auto v : f)
        if (std::abs(m.vertices[v][axis] - plane) > tol) on_sigma = false;
      m.faces.push_back({f, on_sigma ? marker_sigma : marker_other});
    } else if (c != 2) {
      throw GeometryError("internal face shared by " + std::to_string(c) + " tets");
    }
  }
  return m;
}

MeshQuality mesh_quality(const PartitionedMesh& m) {
  MeshQuality q;
  q.region_volume.assign(std::max(m.num_regions, 0), 0.0);
  q.shape_min = 1.0;
  for (const auto& t : m.tets) {
    const V3 x0 = vertex(m, t.v[0]), x1 = vertex(m, t.v[1]), x2 = vertex(m, t.v[2]),
             x3 = vertex(m, t.v[3]);
    const double vol = signed_volume(x0, x1, x2, x3);
    q.total_volume += vol;
    if (t.region >= 1 && t.region <= m.num_regions)
      q.region_volume[t.region - 1] += vol;
    const V3 pts[4] = {x0, x1, x2, x3};
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b)
        q.h_max = std::max(q.h_max, (pts[a] - pts[b]).norm());
    // Inradius from volume over face areas; circumcenter from the linear system
    // |c - xi|^2 = |c - x0|^2.
    double area_sum = 0.0;
    for (int f = 0; f < 4; ++f) {
      const V3 a = pts[(f + 1) % 4], b = pts[(f + 2) % 4], c = pts[(f + 3) % 4];
      area_sum += 0.5 * (b - a).cross(c - a).norm();
    }
    if (vol <= 0.0 || area_sum <= 0.0) {
      q.shape_min = 0.0;
      continue;
    }
    const double r_in = 3.0 * vol / area_sum;
    Eigen::Matrix3d A;
    Eigen::Vector3d rhs;
    for (int r = 0; r < 3; ++r) {
      A.row(r) = 2.0 * (pts[r + 1] - x0).transpose();
      rhs(r) = pts[r + 1].squaredNorm() - x0.squaredNorm();
    }
    const V3 center = A.fullPivLu().solve(rhs);
    const double r_circ = (center - x0).norm();
    if (r_circ > 0.0) q.shape_min = std::min(q.shape_min, 3.0 * r_in / r_circ);
  }
  return q;
}

PartitionReport validate_partition(const PartitionedMesh& m) {
  PartitionReport rep;
  auto flag = [&rep](const std::string& s) { rep.violations.push_back(s); };

  if (m.vertices.empty() || m.tets.empty()) {
    flag("mesh has no cells");
    rep.quality = MeshQuality{};
    return rep;
  }
  const auto nv = static_cast<std::int32_t>(m.vertices.size());
  for (std::size_t i = 0; i < m.tets.size(); ++i)
    for (auto v : m.tets[i].v)
      if (v < 0 || v >= nv) {
        flag("tet " + std::to_string(i) + " references vertex out of range");
        rep.quality = MeshQuality{};
        return rep;
      }
  for (std::size_t i = 0; i < m.faces.size(); ++i)
    for (auto v : m.faces[i].v)
      if (v < 0 || v >= nv) {
        flag("boundary face " + std::to_string(i) + " references vertex out of range");
        rep.quality = MeshQuality{};
        return rep;
      }

  rep.quality = mesh_quality(m);

  int bad_volume = 0;
  for (const auto& t : m.tets)
    if (!(tet_volume(m, t) > 0.0)) ++bad_volume;
  if (bad_volume > 0)
    flag(std::to_string(bad_volume) + " tets with non-positive volume");

  std::vector<int> region_count(std::max(m.num_regions, 0), 0);
  int bad_region = 0;
  for (const auto& t : m.tets) {
    if (t.region < 1 || t.region > m.num_regions)
      ++bad_region;
    else
      ++region_count[t.region - 1];
  }
  if (bad_region > 0)
    flag(std::to_string(bad_region) + " tets with region id outside 1.." +
         std::to_string(m.num_regions));
  for (int r = 0; r < m.num_regions; ++r)
    if (region_count[r] == 0) flag("region " + std::to_string(r + 1) + " is empty");

  // Face incidence: interior faces shared by exactly 2 tets, boundary by 1, and the
  // stored boundary list must match the recomputed one with consistent markers.
  std::map<std::array<std::int32_t, 3>, std::vector<std::int32_t>> by_face;
  for (std::size_t i = 0; i < m.tets.size(); ++i)
    for (const auto& f : tet_faces(m.tets[i]))
      by_face[f].push_back(static_cast<std::int32_t>(i));
  std::set<std::array<std::int32_t, 3>> computed_boundary;
  for (const auto& [f, owners] : by_face) {
    if (owners.size() == 1)
      computed_boundary.insert(f);
    else if (owners.size() != 2)
      flag("face shared by " + std::to_string(owners.size()) + " tets");
  }
  std::set<std::array<std::int32_t, 3>> stored_boundary;
  for (const auto& f : m.faces) {
    if (f.marker != marker_other && f.marker != marker_sigma)
      flag("boundary face marker " + std::to_string(f.marker) + " is not 0 or 1");
    auto key = sorted_face(f.v[0], f.v[1], f.v[2]);
    if (!stored_boundary.insert(key).second) flag("duplicate boundary face");
    if (!computed_boundary.count(key))
      flag("stored boundary face is not on the mesh boundary");
  }
  if (stored_boundary.size() != computed_boundary.size())
    flag("boundary face list incomplete: " + std::to_string(stored_boundary.size()) +
         " stored vs " + std::to_string(computed_boundary.size()) + " computed");

  // Domain and per-region face-connectivity.
  DisjointSet whole(m.tets.size());
  std::map<std::array<std::int32_t, 3>, std::int32_t> first_owner;
  for (std::size_t i = 0; i < m.tets.size(); ++i)
    for (const auto& f : tet_faces(m.tets[i])) {
      auto it = first_owner.find(f);
      if (it == first_owner.end())
        first_owner[f] = static_cast<std::int32_t>(i);
      else
        whole.unite(it->second, static_cast<std::int32_t>(i));
    }
  for (std::size_t i = 1; i < m.tets.size(); ++i)
    if (whole.find(static_cast<std::int32_t>(i)) != whole.find(0)) {
      flag("domain is not face-connected");
      break;
    }
  for (int r = 1; r <= m.num_regions; ++r) {
    DisjointSet ds(m.tets.size());
    std::map<std::array<std::int32_t, 3>, std::int32_t> owner;
    std::int32_t seed = -1;
    for (std::size_t i = 0; i < m.tets.size(); ++i) {
      if (m.tets[i].region != r) continue;
      if (seed < 0) seed = static_cast<std::int32_t>(i);
      for (const auto& f : tet_faces(m.tets[i])) {
        auto it = owner.find(f);
        if (it == owner.end())
          owner[f] = static_cast<std::int32_t>(i);
        else
          ds.unite(it->second, static_cast<std::int32_t>(i));
      }
    }
    if (seed < 0) continue;
    for (std::size_t i = 0; i < m.tets.size(); ++i)
      if (m.tets[i].region == r && ds.find(static_cast<std::int32_t>(i)) != ds.find(seed)) {
        flag("region " + std::to_string(r) + " is not face-connected");
        break;
      }
  }

  // Measurement patch: nonempty and edge-connected.
  std::vector<std::size_t> sigma_faces;
  for (std::size_t i = 0; i < m.faces.size(); ++i)
    if (m.faces[i].marker == marker_sigma) sigma_faces.push_back(i);
  if (sigma_faces.empty()) {
    flag("no boundary faces carry the measurement marker");
  } else {
    DisjointSet ds(sigma_faces.size());
    std::map<std::pair<std::int32_t, std::int32_t>, std::int32_t> edge_owner;
    for (std::size_t s = 0; s < sigma_faces.size(); ++s) {
      const auto& f = m.faces[sigma_faces[s]];
      for (int e = 0; e < 3; ++e) {
        auto key = std::minmax(f.v[e], f.v[(e + 1) % 3]);
        auto it = edge_owner.find(key);
        if (it == edge_owner.end())
          edge_owner[key] = static_cast<std::int32_t>(s);
        else
          ds.unite(it->second, static_cast<std::int32_t>(s));
      }
    }
    for (std::size_t s = 1; s < sigma_faces.size(); ++s)
      if (ds.find(static_cast<std::int32_t>(s)) != ds.find(0)) {
        flag("measurement patch is not edge-connected");
        break;
      }
  }

  // Interface flatness and the adjacency chain from the patch-touching regions.
  // Interface faces keyed by unordered region pair; a pair is chained when it has a
  // connected coplanar patch (grouped by quantized plane).
  std::map<std::pair<int, int>, std::vector<std::array<std::int32_t, 3>>> interfaces;
  for (const auto& [f, owners] : by_face) {
    if (owners.size() != 2) continue;
    int r1 = m.tets[owners[0]].region, r2 = m.tets[owners[1]].region;
    if (r1 == r2) continue;
    interfaces[std::minmax(r1, r2)].push_back(f);
  }
  std::set<std::pair<int, int>> chained;
  for (const auto& [pair, fcs] : interfaces) {
    bool has_flat = false;
    std::map<std::array<std::int64_t, 4>, int> plane_faces;
    for (const auto& f : fcs) {
      const V3 a = vertex(m, f[0]), b = vertex(m, f[1]), c = vertex(m, f[2]);
      V3 nrm = (b - a).cross(c - a).normalized();
      if (nrm[0] < 0 || (nrm[0] == 0 && nrm[1] < 0) ||
          (nrm[0] == 0 && nrm[1] == 0 && nrm[2] < 0))
        nrm = -nrm;
      const double off = nrm.dot(a);
      auto q = [](double x) { return static_cast<std::int64_t>(std::llround(x * 1e9)); };
      ++plane_faces[{q(nrm[0]), q(nrm[1]), q(nrm[2]), q(off)}];
    }
    for (const auto& [plane, cnt] : plane_faces)
      if (cnt >= 1) has_flat = true;
    if (has_flat) chained.insert(pair);
    if (!has_flat)
      flag("interface between regions " + std::to_string(pair.first) + " and " +
           std::to_string(pair.second) + " has no flat patch");
  }

  std::set<int> touching;  // regions owning a tet with a face on the patch
  for (const auto& bf : m.faces) {
    if (bf.marker != marker_sigma) continue;
    auto it = by_face.find(sorted_face(bf.v[0], bf.v[1], bf.v[2]));
    if (it != by_face.end() && it->second.size() == 1)
      touching.insert(m.tets[it->second[0]].region);
  }
  if (!touching.empty() && m.num_regions > 0) {
    std::vector<int> depth(m.num_regions + 1, -1);
    std::vector<int> queue;
    for (int r : touching)
      if (r >= 1 && r <= m.num_regions) {
        depth[r] = 0;
        queue.push_back(r);
      }
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      const int r = queue[qi];
      for (const auto& pair : chained) {
        int other = -1;
        if (pair.first == r) other = pair.second;
        if (pair.second == r) other = pair.first;
        if (other > 0 && depth[other] < 0) {
          depth[other] = depth[r] + 1;
          queue.push_back(other);
        }
      }
    }
    for (int r = 1; r <= m.num_regions; ++r) {
      if (depth[r] < 0)
        flag("region " + std::to_string(r) +
             " is not reachable from the measurement patch through flat interfaces");
      rep.chain_depth = std::max(rep.chain_depth, depth[r]);
    }
  }

  rep.valid = rep.violations.empty();
  return rep;
}

void save_mesh(const PartitionedMesh& m, const std::string& path) {
  std::ostringstream out;
  out << "emesh 1\n";
  out << m.vertices.size() << ' ' << m.tets.size() << ' ' << m.faces.size() << '\n';
  for (const auto& v : m.vertices)
    out << format_double(v[0]) << ' ' << format_double(v[1]) << ' '
        << format_double(v[2]) << '\n';
  for (const auto& t : m.tets)
    out << t.v[0] << ' ' << t.v[1] << ' ' << t.v[2] << ' ' << t.v[3] << ' ' << t.region
        << '\n';
  for (const auto& f : m.faces)
    out << f.v[0] << ' ' << f.v[1] << ' ' << f.v[2] << ' ' << f.marker << '\n';
  atomic_write(path, out.str());
}

PartitionedMesh load_mesh(const std::string& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> std::string {
    if (!std::getline(in, line))
      throw ConfigError(path + ": unexpected end of file after line " +
                        std::to_string(lineno));
    ++lineno;
    return line;
  };
  auto parse_fail = [&](const std::string& what) {
    throw ConfigError(path + ":" + std::to_string(lineno) + ": " + what);
  };

  if (next_line() != "emesh 1") parse_fail("expected header 'emesh 1'");
  std::size_t nv = 0, nt = 0, nf = 0;
  {
    std::istringstream hs(next_line());
    if (!(hs >> nv >> nt >> nf)) parse_fail("expected three counts");
    std::string extra;
    if (hs >> extra) parse_fail("trailing tokens after counts");
  }
  if (nv == 0 || nt == 0) parse_fail("mesh must have vertices and tets");

  PartitionedMesh m;
  m.vertices.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    std::istringstream vs(next_line());
    double x, y, z;
    if (!(vs >> x >> y >> z)) parse_fail("expected three coordinates");
    std::string extra;
    if (vs >> extra) parse_fail("trailing tokens after coordinates");
    m.vertices.push_back({x, y, z});
  }
  const auto vmax = static_cast<std::int64_t>(nv);
  m.tets.reserve(nt);
  for (std::size_t i = 0; i < nt; ++i) {
    std::istringstream ts(next_line());
    std::int64_t a, b, c, d, region;
    if (!(ts >> a >> b >> c >> d >> region))
      parse_fail("expected four vertex indices and a region id");
    std::string extra;
    if (ts >> extra) parse_fail("trailing tokens after tet");
    for (std::int64_t v : {a, b, c, d})
      if (v < 0 || v >= vmax) parse_fail("vertex index out of range");
    if (region < 1) parse_fail("region id must be >= 1");
    m.tets.push_back({{static_cast<std::int32_t>(a), static_cast<std::int32_t>(b),
                       static_cast<std::int32_t>(c), static_cast<std::int32_t>(d)},
                      static_cast<std::int32_t>(region)});
    m.num_regions = std::max(m.num_regions, static_cast<int>(region));
  }
  m.faces.reserve(nf);
  for (std::size_t i = 0; i < nf; ++i) {
    std::istringstream fs(next_line());
    std::int64_t a, b, c, marker;
    if (!(fs >> a >> b >> c >> marker))
      parse_fail("expected three vertex indices and a marker");
    std::string extra;
    if (fs >> extra) parse_fail("trailing tokens after face");
    for (std::int64_t v : {a, b, c})
      if (v < 0 || v >= vmax) parse_fail("vertex index out of range");
    if (marker != marker_other && marker != marker_sigma)
      parse_fail("marker must be 0 or 1");
    m.faces.push_back({{static_cast<std::int32_t>(a), static_cast<std::int32_t>(b),
                        static_cast<std::int32_t>(c)},
                       static_cast<std::int32_t>(marker)});
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos)
      parse_fail("trailing content after mesh data");
  }
  return m;
}

}  // namespace edtn::mesh
