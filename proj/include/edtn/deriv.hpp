#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "edtn/dtn.hpp"
#include "edtn/fem.hpp"
#include "edtn/material.hpp"

namespace edtn::deriv {

// Directional derivative of the parameter-to-DtN map as a trace operator:
// psi' (DF(l)[h]) phi = integral(C_h grad^u_psi : grad^u_phi - h_rho omega^2
// u_psi . u_phi) over the solution family at l. Computed by element-level quadrature
// on the cached solution family; independent of the assembled-block path below.
Eigen::MatrixXd df_apply(std::shared_ptr<const fem::MeshOperators> ops,
                         const material::ParamVector& l, const material::ParamVector& h,
                         double omega, double tol);

// All 3N partial derivative blocks d(Lambda)/d(l_k) via triple products
// U' (dA/dl_k) U over the per-subdomain matrix pieces. Block order matches the
// parameter layout (lambda_1..lambda_N, mu_1..mu_N, rho_1..rho_N).
struct DfJacobian {
  std::vector<Eigen::MatrixXd> blocks;
  material::ParamVector base;
  double omega = 0.0;

  Eigen::MatrixXd contract(const material::ParamVector& h) const;
};

DfJacobian df_jacobian(std::shared_ptr<const fem::MeshOperators> ops,
                       const material::ParamVector& l, double omega, double tol);

// Same blocks from an already-computed solution family (avoids re-solving when the
// caller keeps the family for warm starts).
DfJacobian df_jacobian_from_family(const fem::MeshOperators& ops,
                                   const Eigen::MatrixXd& family_u,
                                   const material::ParamVector& base, double omega);

struct TaylorReport {
  std::vector<double> t;
  std::vector<double> remainder;  // ||F(l + t h) - F(l) - t DF[h]||_star
  std::vector<bool> usable;       // above the solver-noise floor
  double slope = 0.0;             // log-log fit over usable points
  double noise_floor = 0.0;
};

// Quadratic-remainder check of the derivative at l in direction h.
TaylorReport taylor_order(std::shared_ptr<const fem::MeshOperators> ops,
                          const dtn::BoundaryMetric& metric,
                          const material::ParamVector& l, const material::ParamVector& h,
                          double omega, const std::vector<double>& t_list, double tol);

struct DerivLipschitzReport {
  struct Row {
    double param_distance;
    double df_distance;  // sup over unit-inf-norm directions of the star-norm gap
    double ratio;
  };
  std::vector<Row> rows;
  double constant = 0.0;  // max ratio
};

// Empirical Lipschitz constant of l -> DF(l) over sampled pairs in the compact set.
DerivLipschitzReport df_lipschitz_probe(std::shared_ptr<const fem::MeshOperators> ops,
                                        const dtn::BoundaryMetric& metric,
                                        const material::ConstraintSet& set, double omega,
                                        int pairs, std::uint64_t seed, double tol);

// Misfit gradient helper shared with the inversion: for residual weight
// S = W^2 (Lambda - D) W^2, grad_k = <S, dLambda/dl_k>_F for every k, computed without
// forming the blocks (pattern-restricted outer product of the solution family).
material::ParamVector misfit_gradient(const fem::MeshOperators& ops,
                                      const Eigen::MatrixXd& family_u,
                                      const Eigen::MatrixXd& s, double omega);

}  // namespace edtn::deriv
