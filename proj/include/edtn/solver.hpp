#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "edtn/fem.hpp"

namespace edtn::solver {

struct SolveReport {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

// Reduced positive-definite system (K - omega^2 M) on interior dofs, with a 3x3
// per-vertex block-Jacobi preconditioner. Dirichlet conditions are eliminated, not
// penalized. Also exposes the full-pattern matrix action (boundary rows included),
// which the trace-operator assembly pairs against boundary data.
class System {
 public:
  System(const fem::DiscreteOperator& op, double omega);

  // Solves for u (full dof vector): interior dofs from PCG, boundary dofs copied from
  // g. g and f are full-size; f may be empty (zero load). warm optionally seeds the
  // interior iterate from a previous solution. Throws edtn::SolverError when PCG
  // breaks down or exceeds max_iter. history, when given, receives the preconditioned
  // residual norm sqrt(r' M^-1 r) at every iteration including the initial one.
  SolveReport solve(std::span<const double> g, std::span<const double> f, double tol,
                    std::span<double> u, std::span<const double> warm = {},
                    std::vector<double>* history = nullptr) const;

  // y = (K - omega^2 M) x over full dof vectors.
  void full_multiply(std::span<const double> x, std::span<double> y) const;

  double omega() const { return omega_; }
  const fem::MeshOperators& ops() const { return *ops_; }
  int max_iterations = 50000;

 private:
  std::shared_ptr<const fem::MeshOperators> ops_;
  double omega_;
  std::vector<double> full_vals_;
  std::vector<double> reduced_vals_;
  std::vector<double> precond_;  // row-major 3x3 inverse diagonal blocks
};

// Convenience wrapper: assemble-free one-shot solve on an existing operator.
SolveReport solve_dirichlet(const fem::DiscreteOperator& op, double omega,
                            std::span<const double> g, std::span<const double> f,
                            double tol, std::span<double> u);

struct EigReport {
  double value = 0.0;
  int iterations = 0;
  double residual = 0.0;  // ||K x - value M x|| / ||K x||
  bool converged = false;
};

// Smallest eigenvalue of K(c0) u = lambda M(rho=1) u on interior dofs, by inverse
// power iteration with PCG inner solves. Deterministic seeded start vector.
EigReport smallest_dirichlet_eigenvalue(std::shared_ptr<const fem::MeshOperators> ops,
                                        const material::IsotropicTensor& c0, double tol);

// Largest admissible frequency: omega_max = sqrt(gamma0 * lambda1_0 / 2).
double admissible_frequency_bound(const material::PriorData& prior, double lambda1_0);

}  // namespace edtn::solver
