#include "edtn/fem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "edtn/errors.hpp"
#include "edtn/kernels.hpp"
#include "edtn/rng.hpp"

namespace edtn::fem {

DofMap DofMap::build(const mesh::PartitionedMesh& m) {
  DofMap d;
  d.num_vertices = static_cast<std::int32_t>(m.vertices.size());
  std::vector<char> on_boundary(m.vertices.size(), 0);
  std::vector<char> on_nonsigma(m.vertices.size(), 0);
  for (const auto& f : m.faces)
    for (auto v : f.v) {
      on_boundary[v] = 1;
      if (f.marker != mesh::marker_sigma) on_nonsigma[v] = 1;
    }
  d.full_to_interior.assign(3 * m.vertices.size(), -1);
  d.full_to_trace.assign(3 * m.vertices.size(), -1);
  for (std::int32_t v = 0; v < d.num_vertices; ++v) {
    if (on_boundary[v]) {
      d.boundary_vertices.push_back(v);
      for (int c = 0; c < 3; ++c) d.boundary_dofs.push_back(3 * v + c);
      if (!on_nonsigma[v]) {
        d.sigma_vertices.push_back(v);
        for (int c = 0; c < 3; ++c) {
          d.full_to_trace[3 * v + c] =
              static_cast<std::int32_t>(d.sigma_dofs.size());
          d.sigma_dofs.push_back(3 * v + c);
        }
      }
    } else {
      d.interior_vertices.push_back(v);
      for (int c = 0; c < 3; ++c) {
        d.full_to_interior[3 * v + c] =
            static_cast<std::int32_t>(d.interior_dofs.size());
        d.interior_dofs.push_back(3 * v + c);
      }
    }
  }
  return d;
}

ElementGeometry element_geometry(const mesh::PartitionedMesh& m,
                                 const mesh::PartitionedMesh::Tet& t) {
  ElementGeometry g;
  Eigen::Vector3d x0(m.vertices[t.v[0]].data());
  Eigen::Matrix3d J;
  for (int a = 0; a < 3; ++a)
    J.col(a) = Eigen::Vector3d(m.vertices[t.v[a + 1]].data()) - x0;
  const double det = J.determinant();
  g.volume = det / 6.0;
  const Eigen::Matrix3d Jinv_t = J.inverse().transpose();
  for (int a = 0; a < 3; ++a) g.grad.col(a + 1) = Jinv_t.col(a);
  g.grad.col(0) = -(g.grad.col(1) + g.grad.col(2) + g.grad.col(3));
  return g;
}

Eigen::Matrix3d element_gradient(const ElementGeometry& g,
                                 const Eigen::Matrix<double, 3, 4>& u4) {
  return u4 * g.grad.transpose();
}

std::shared_ptr<const MeshOperators> MeshOperators::build(
    const mesh::PartitionedMesh& m) {
  auto out = std::make_shared<MeshOperators>();
  out->mesh_ = m;
  out->dofs_ = DofMap::build(m);
  const auto nv = static_cast<std::int32_t>(m.vertices.size());
  const int nr = m.num_regions;
  if (nr < 1) throw GeometryError("mesh has no regions");

  // Vertex adjacency (with self), then the 3x3-block pattern. All three dof rows of a
  // vertex share one column list, so block positions follow from the vertex-pair
  // position plus a fixed offset.
  std::vector<std::vector<std::int32_t>> adj(nv);
  for (const auto& t : m.tets)
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) adj[t.v[a]].push_back(t.v[b]);
  for (auto& row : adj) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }

  SparsityPattern& p = out->pattern_;
  p.rows = p.cols = 3 * nv;
  p.row_ptr.assign(3 * nv + 1, 0);
  for (std::int32_t v = 0; v < nv; ++v) {
    const auto deg = static_cast<std::int32_t>(adj[v].size());
    for (int c = 0; c < 3; ++c) p.row_ptr[3 * v + c + 1] = 3 * deg;
  }
  for (std::size_t r = 1; r < p.row_ptr.size(); ++r) p.row_ptr[r] += p.row_ptr[r - 1];
  p.col_idx.resize(p.row_ptr.back());
  for (std::int32_t v = 0; v < nv; ++v)
    for (int c = 0; c < 3; ++c) {
      std::int32_t pos = p.row_ptr[3 * v + c];
      for (auto w : adj[v])
        for (int d = 0; d < 3; ++d) p.col_idx[pos++] = 3 * w + d;
    }

  const std::size_t nnz = p.nnz();
  out->k_lam_.assign(nr, std::vector<double>(nnz, 0.0));
  out->k_mu_.assign(nr, std::vector<double>(nnz, 0.0));
  out->m_rho_.assign(nr, std::vector<double>(nnz, 0.0));
  out->k_lap_.assign(nnz, 0.0);

  for (const auto& t : m.tets) {
    if (t.region < 1 || t.region > nr)
      throw GeometryError("tet region id out of range during assembly");
    const ElementGeometry g = element_geometry(m, t);
    if (!(g.volume > 0.0)) throw GeometryError("non-positive tet volume in assembly");
    const int j = t.region - 1;
    auto& klam = out->k_lam_[j];
    auto& kmu = out->k_mu_[j];
    auto& mrho = out->m_rho_[j];
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        const std::int64_t base = p.find(3 * t.v[a], 3 * t.v[b]);
        const std::int64_t in_row = base - p.row_ptr[3 * t.v[a]];
        const Eigen::Vector3d ga = g.grad.col(a), gb = g.grad.col(b);
        const double gg = ga.dot(gb) * g.volume;
        const double mass = g.volume / 20.0 * (a == b ? 2.0 : 1.0);
        for (int i = 0; i < 3; ++i) {
          const std::int64_t row0 = p.row_ptr[3 * t.v[a] + i] + in_row;
          for (int jj = 0; jj < 3; ++jj) {
            const std::int64_t idx = row0 + jj;
            klam[idx] += g.volume * ga[i] * gb[jj];
            kmu[idx] += g.volume * ga[jj] * gb[i];
            if (i == jj) {
              kmu[idx] += gg;
              out->k_lap_[idx] += gg;
              mrho[idx] += mass;
            }
          }
        }
      }
  }
  out->m_unit_.assign(nnz, 0.0);
  for (int j = 0; j < nr; ++j)
    for (std::size_t i = 0; i < nnz; ++i) out->m_unit_[i] += out->m_rho_[j][i];

  // Interior restriction: pattern plus gather map into the full value arrays.
  const auto& dofs = out->dofs_;
  SparsityPattern& ip = out->interior_pattern_;
  ip.rows = ip.cols = dofs.n_interior();
  ip.row_ptr.assign(ip.rows + 1, 0);
  std::size_t count = 0;
  for (std::int32_t r = 0; r < ip.rows; ++r) {
    const std::int32_t fr = dofs.interior_dofs[r];
    for (std::int32_t k = p.row_ptr[fr]; k < p.row_ptr[fr + 1]; ++k)
      if (dofs.full_to_interior[p.col_idx[k]] >= 0) ++count;
    ip.row_ptr[r + 1] = static_cast<std::int32_t>(count);
  }
  ip.col_idx.resize(count);
  out->interior_gather_.resize(count);
  std::size_t pos = 0;
  for (std::int32_t r = 0; r < ip.rows; ++r) {
    const std::int32_t fr = dofs.interior_dofs[r];
    for (std::int32_t k = p.row_ptr[fr]; k < p.row_ptr[fr + 1]; ++k) {
      const std::int32_t rc = dofs.full_to_interior[p.col_idx[k]];
      if (rc >= 0) {
        ip.col_idx[pos] = rc;
        out->interior_gather_[pos] = k;
        ++pos;
      }
    }
  }
  return out;
}

std::vector<double> MeshOperators::restrict_interior(
    std::span<const double> full_vals) const {
  if (full_vals.size() != pattern_.nnz())
    throw DimensionError("restrict_interior: value array size != nnz");
  std::vector<double> out(interior_gather_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = full_vals[interior_gather_[i]];
  return out;
}

double MeshOperators::h1_seminorm(std::span<const double> u) const {
  if (static_cast<std::int32_t>(u.size()) != 3 * dofs_.num_vertices)
    throw DimensionError("h1_seminorm: wrong vector size");
  std::vector<double> t(u.size());
  pattern_.multiply(k_lap_, u, t);
  const double s = kernels::dot(u, t);
  return s > 0.0 ? std::sqrt(s) : 0.0;
}

double MeshOperators::l2_norm(std::span<const double> u) const {
  if (static_cast<std::int32_t>(u.size()) != 3 * dofs_.num_vertices)
    throw DimensionError("l2_norm: wrong vector size");
  std::vector<double> t(u.size());
  pattern_.multiply(m_unit_, u, t);
  const double s = kernels::dot(u, t);
  return s > 0.0 ? std::sqrt(s) : 0.0;
}

double MeshOperators::h1_norm(std::span<const double> u) const {
  const double a = h1_seminorm(u), b = l2_norm(u);
  return std::sqrt(a * a + b * b);
}

void DiscreteOperator::stiffness_multiply(std::span<const double> u,
                                          std::span<double> out) const {
  ops->pattern().multiply(stiff_vals, u, out);
}

void DiscreteOperator::mass_multiply(std::span<const double> u,
                                     std::span<double> out) const {
  ops->pattern().multiply(mass_vals, u, out);
}

std::vector<double> DiscreteOperator::system_vals(double omega) const {
  std::vector<double> out(stiff_vals.size());
  const double coeff[2] = {1.0, -omega * omega};
  const double* terms[2] = {stiff_vals.data(), mass_vals.data()};
  kernels::combine(out.size(), 2, terms, coeff, out.data());
  return out;
}

DiscreteOperator assemble(std::shared_ptr<const MeshOperators> ops,
                          const material::ParamVector& l) {
  if (!ops) throw DimensionError("assemble: null mesh operators");
  if (l.regions() != ops->regions())
    throw DimensionError("assemble: parameter regions != mesh regions");
  for (double v : l.data())
    if (!std::isfinite(v)) throw NumericError("assemble: non-finite parameter");
  DiscreteOperator op;
  op.ops = std::move(ops);
  op.params = l;
  const std::size_t nnz = op.ops->pattern().nnz();
  const int nr = l.regions();
  std::vector<const double*> terms;
  std::vector<double> coeff;
  terms.reserve(2 * nr);
  for (int j = 0; j < nr; ++j) {
    terms.push_back(op.ops->stiff_lambda(j).data());
    coeff.push_back(l.lambda(j));
    terms.push_back(op.ops->stiff_mu(j).data());
    coeff.push_back(l.mu(j));
  }
  op.stiff_vals.resize(nnz);
  kernels::combine(nnz, terms.size(), terms.data(), coeff.data(), op.stiff_vals.data());
  terms.clear();
  coeff.clear();
  for (int j = 0; j < nr; ++j) {
    terms.push_back(op.ops->mass(j).data());
    coeff.push_back(l.rho(j));
  }
  op.mass_vals.resize(nnz);
  kernels::combine(nnz, terms.size(), terms.data(), coeff.data(), op.mass_vals.data());
  return op;
}

double apply_bilinear(const DiscreteOperator& op, double omega,
                      std::span<const double> u, std::span<const double> v) {
  const auto n = static_cast<std::size_t>(op.ops->pattern().rows);
  if (u.size() != n || v.size() != n)
    throw DimensionError("apply_bilinear: vector size != dof count");
  std::vector<double> t(n);
  op.stiffness_multiply(v, t);
  double s = kernels::dot(u, t);
  op.mass_multiply(v, t);
  return s - omega * omega * kernels::dot(u, t);
}

CoercivityReport coercivity_check(const DiscreteOperator& op, double omega,
                                  const material::PriorData& prior, double lambda1_0,
                                  int samples, std::uint64_t seed,
                                  bool allow_out_of_regime) {
  prior.validate();
  if (samples < 1) throw ConfigError("coercivity_check: samples must be >= 1");
  if (!(lambda1_0 > 0.0)) throw NumericError("coercivity_check: lambda1_0 must be > 0");
  CoercivityReport rep;
  rep.in_regime = omega * omega <= prior.gamma0 * lambda1_0 / 2.0 * (1.0 + 1e-12);
  if (!rep.in_regime && !allow_out_of_regime)
    throw FrequencyError("coercivity_check: omega^2 exceeds gamma0*lambda1_0/2");
  const auto& dofs = op.ops->dofs();
  const auto n = static_cast<std::size_t>(dofs.n_full());
  Rng rng(seed);
  rep.min_ratio = std::numeric_limits<double>::infinity();
  rep.max_ratio = -std::numeric_limits<double>::infinity();
  std::vector<double> u(n);
  for (int s = 0; s < samples; ++s) {
    std::fill(u.begin(), u.end(), 0.0);
    for (auto d : dofs.interior_dofs) u[d] = rng.gaussian();
    const double h1 = op.ops->h1_norm(u);
    if (!(h1 > 0.0)) continue;
    const double ratio = apply_bilinear(op, omega, u, u) / (h1 * h1);
    rep.min_ratio = std::min(rep.min_ratio, ratio);
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    ++rep.samples;
  }
  if (rep.samples == 0) throw NumericError("coercivity_check: no usable samples");
  return rep;
}

}  // namespace edtn::fem
