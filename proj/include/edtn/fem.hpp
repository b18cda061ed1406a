#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "edtn/material.hpp"
#include "edtn/mesh.hpp"
#include "edtn/sparse.hpp"

namespace edtn::fem {

// Vertex-major degrees of freedom: dof = 3*vertex + component. The trace space on the
// measurement patch uses only patch-interior vertices (every incident boundary face
// carries the patch marker), which realizes zero extension off the patch.
struct DofMap {
  std::int32_t num_vertices = 0;
  std::vector<std::int32_t> interior_vertices;
  std::vector<std::int32_t> boundary_vertices;
  std::vector<std::int32_t> sigma_vertices;
  std::vector<std::int32_t> interior_dofs;
  std::vector<std::int32_t> boundary_dofs;
  std::vector<std::int32_t> sigma_dofs;
  std::vector<std::int32_t> full_to_interior;  // -1 on Dirichlet dofs
  std::vector<std::int32_t> full_to_trace;     // -1 off the trace space

  std::int32_t n_full() const { return 3 * num_vertices; }
  std::int32_t n_interior() const { return static_cast<std::int32_t>(interior_dofs.size()); }
  std::int32_t n_trace() const { return static_cast<std::int32_t>(sigma_dofs.size()); }

  static DofMap build(const mesh::PartitionedMesh& m);
};

// Constant P1 basis gradients and volume of one tet.
struct ElementGeometry {
  Eigen::Matrix<double, 3, 4> grad;  // column a: gradient of barycentric basis a
  double volume = 0.0;
};

ElementGeometry element_geometry(const mesh::PartitionedMesh& m,
                                 const mesh::PartitionedMesh::Tet& t);

// Gradient of the P1 interpolant on one element; u4 holds the four vertex vectors
// column-wise (3x4). Returns the 3x3 matrix with entries du_i/dx_j.
Eigen::Matrix3d element_gradient(const ElementGeometry& g,
                                 const Eigen::Matrix<double, 3, 4>& u4);

// Per-mesh assembly: one shared sparsity pattern (3V x 3V) and per-subdomain value
// arrays, so that for any parameter vector stiffness and mass are value-array linear
// combinations (no re-assembly). Quadrature is exact for piecewise-constant
// coefficients on P1 elements.
class MeshOperators {
 public:
  static std::shared_ptr<const MeshOperators> build(const mesh::PartitionedMesh& m);

  const mesh::PartitionedMesh& mesh() const { return mesh_; }
  const DofMap& dofs() const { return dofs_; }
  const SparsityPattern& pattern() const { return pattern_; }
  int regions() const { return mesh_.num_regions; }

  // Unit-coefficient pieces: stiffness(l) = sum_j l.lambda(j)*stiff_lambda(j)
  // + l.mu(j)*stiff_mu(j); mass(l) = sum_j l.rho(j)*mass(j).
  std::span<const double> stiff_lambda(int j) const { return k_lam_[j]; }
  std::span<const double> stiff_mu(int j) const { return k_mu_[j]; }
  std::span<const double> mass(int j) const { return m_rho_[j]; }
  std::span<const double> laplace() const { return k_lap_; }    // vector Laplacian
  std::span<const double> mass_unit() const { return m_unit_; }  // rho == 1

  // Reduced (interior x interior) pattern with a gather map into the full pattern.
  const SparsityPattern& interior_pattern() const { return interior_pattern_; }
  std::span<const std::int32_t> interior_gather() const { return interior_gather_; }
  std::vector<double> restrict_interior(std::span<const double> full_vals) const;

  // Discrete norms used by every estimate: ||u||_H1^2 = u'(K_lap + M_unit)u.
  double h1_norm(std::span<const double> u_full) const;
  double l2_norm(std::span<const double> u_full) const;
  double h1_seminorm(std::span<const double> u_full) const;

 private:
  mesh::PartitionedMesh mesh_;
  DofMap dofs_;
  SparsityPattern pattern_;
  std::vector<std::vector<double>> k_lam_, k_mu_, m_rho_;
  std::vector<double> k_lap_, m_unit_;
  SparsityPattern interior_pattern_;
  std::vector<std::int32_t> interior_gather_;
};

// Stiffness and mass value arrays for one parameter vector, on the shared pattern.
struct DiscreteOperator {
  std::shared_ptr<const MeshOperators> ops;
  material::ParamVector params;
  std::vector<double> stiff_vals;
  std::vector<double> mass_vals;

  void stiffness_multiply(std::span<const double> u, std::span<double> out) const;
  void mass_multiply(std::span<const double> u, std::span<double> out) const;
  // Values of K - omega^2 M on the shared pattern.
  std::vector<double> system_vals(double omega) const;
};

DiscreteOperator assemble(std::shared_ptr<const MeshOperators> ops,
                          const material::ParamVector& l);

// u'(K - omega^2 M)v over full dof vectors.
double apply_bilinear(const DiscreteOperator& op, double omega,
                      std::span<const double> u, std::span<const double> v);

struct CoercivityReport {
  double min_ratio = 0.0;  // min over samples of a(u,u)/||u||_H1^2
  double max_ratio = 0.0;
  int samples = 0;
  bool in_regime = false;  // omega^2 <= gamma0*lambda1_0/2
};

// Rayleigh-quotient sampling over random interior fields. Throws FrequencyError when
// omega is outside the admissible range unless allow_out_of_regime is set.
CoercivityReport coercivity_check(const DiscreteOperator& op, double omega,
                                  const material::PriorData& prior, double lambda1_0,
                                  int samples, std::uint64_t seed,
                                  bool allow_out_of_regime = false);

}  // namespace edtn::fem
