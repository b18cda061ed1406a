#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "edtn/dtn.hpp"
#include "edtn/fem.hpp"
#include "edtn/material.hpp"
#include "edtn/rng.hpp"

namespace edtn::probes {

// Structured result of one empirical probe: scalar summary values plus the raw
// per-sample table the CSV export writes.
struct ProbeReport {
  std::string probe;
  std::string mesh_id;
  double omega = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> columns;                      // raw table header
  std::vector<std::vector<double>> rows;                 // one row per sample
  std::vector<std::pair<std::string, double>> summary;   // ordered scalar results
  std::vector<std::string> notes;                        // skips and warnings

  double value(const std::string& key) const;  // summary lookup, throws if absent
  void set(const std::string& key, double v);
};

// Empirical stability constant: max over sampled parameter pairs of
// ||l1 - l2||_inf / ||F(l1) - F(l2)||_star. Pairs whose data gap falls below
// 10 * tol * ||F(l1)||_star are skipped and logged, never divided.
ProbeReport lipschitz_probe(std::shared_ptr<const fem::MeshOperators> ops,
                            const dtn::BoundaryMetric& metric,
                            const material::PriorData& prior, double omega, int samples,
                            std::uint64_t seed, double tol);

// Minimum of ||sum_k h_k B_k||_star over the unit infinity-sphere for whitened
// derivative blocks B_k with the listed active coordinates (inactive entries of h are
// held at zero). Candidates: sign patterns (enumerated when there are <= 12 active
// coordinates), axis midpoints, random directions, and a per-facet projected
// subgradient polish. Exposed so restricted parametrizations can reuse it.
double min_directional_norm(const std::vector<Eigen::MatrixXd>& whitened_blocks,
                            const std::vector<int>& active, int h_samples, Rng& rng);

// Empirical injectivity margin of the derivative: min over sampled l in the compact
// set and unit-infinity-norm h of ||DF(l)[h]||_star, with a rank-based lower-bound
// surrogate from the stacked whitened Jacobian. At omega = 0 the density blocks
// vanish and the probe reports (and flags) q0 ~ 0.
ProbeReport q0_probe(std::shared_ptr<const fem::MeshOperators> ops,
                     const dtn::BoundaryMetric& metric, const material::PriorData& prior,
                     double omega, int l_samples, int h_samples, std::uint64_t seed,
                     double tol);

// Near-singular solution scaling: regularized unit point loads at y (hat weights of
// radius eps_r = max(r/4, h_max), lumped to vertices, three Cartesian directions),
// exterior H1 norm outside B_r(y) per radius, log-log slope fit (expected ~ -1/2),
// and the full-domain L2 drift across the load family. Identical regularization radii
// share one solve per direction.
ProbeReport greens_blowup_probe(std::shared_ptr<const fem::MeshOperators> ops,
                                const material::ParamVector& l, double omega,
                                const std::array<double, 3>& y,
                                const std::vector<double>& r_list, double tol);

struct ModulusRow {
  double distance = 0.0;  // ||l1 - l2||_inf
  double gap = 0.0;       // ||F(l1) - F(l2)||_star
  double modulus = 0.0;   // iterated alternating modulus of the gap
  double ratio = 0.0;     // distance / modulus
  bool pass = false;      // distance <= c_star * modulus
};

struct ModulusTable {
  std::vector<ModulusRow> rows;
  double delta = 0.0;
  int depth = 1;               // composition count of the alternating modulus
  double supplied_c_star = 0.0;
  double fitted_c_star = 0.0;  // smallest constant making every row pass
  double linear_constant = 0.0;  // max distance / gap (the plain Lipschitz constant)
};

// Checks the sampled (distance, gap) pairs of a lipschitz_probe report against the
// logarithmic stability shape distance <= C* sigma1^depth(gap).
ModulusTable modulus_comparison(const ProbeReport& lipschitz_report, double delta,
                                double c_star, int depth);

}  // namespace edtn::probes
