#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "edtn/dtn.hpp"
#include "edtn/fem.hpp"
#include "edtn/material.hpp"

namespace edtn::invert {

enum class Mode {
  full,  // all parameters
  s1,    // lambda, mu with rho frozen
  s2     // rho with lambda, mu frozen
};

enum class StepRule { backtracking, fixed };

std::string mode_name(Mode m);
Mode parse_mode(const std::string& s);

struct InversionConfig {
  Mode mode = Mode::full;
  StepRule step_rule = StepRule::backtracking;
  int max_iterations = 500;
  double tol = 1e-10;      // forward-solve tolerance
  double grad_tol = 1e-9;  // stop when the masked gradient sup-norm falls below
  double tau_disc = 1.5;   // discrepancy multiplier
  double noise_level = 0.0;  // relative star-norm noise in the supplied data
  double min_frequency_fraction = 0.5;  // identifiability guard for s2/full
  double fixed_step = 0.0;              // fixed rule; 0 selects 1/||J0||^2
};

struct TraceRow {
  int iter = 0;
  double misfit = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;      // step that produced this iterate (0 for the start)
  bool projected = false; // the constraint projection moved the trial point
  std::vector<double> params;
};

struct InversionResult {
  material::ParamVector params;
  int iterations = 0;
  double misfit = 0.0;
  double grad_norm = 0.0;
  double discrepancy = 0.0;  // star norm of the final data residual
  std::string stop_reason;   // gradient_tolerance | discrepancy | max_iterations | stagnation
  std::vector<TraceRow> trace;
};

// Projected descent over the compact constraint set for the whitened least-squares
// misfit 0.5 ||W (F(l) - data) W||_F^2. Backtracking takes a regularized Gauss-Newton
// direction (Jacobian Gram plus an adaptive diagonal shift) under a monotone Armijo
// test with halving; the fixed rule is the classical 1/||J||^2 gradient iteration.
// Frozen coordinates are copied bit-for-bit from l0.
InversionResult landweber(std::shared_ptr<const fem::MeshOperators> ops,
                          const dtn::BoundaryMetric& metric, const Eigen::MatrixXd& data,
                          double omega, double omega_max,
                          const material::ParamVector& l0,
                          const material::ConstraintSet& set,
                          const InversionConfig& config);

struct SynthesizedData {
  Eigen::MatrixXd lambda;
  double clean_star_norm = 0.0;
  double achieved_noise = 0.0;  // relative star norm of the added perturbation
};

// Forward data plus an exactly-scaled symmetric Gaussian perturbation.
SynthesizedData synthesize_data(std::shared_ptr<const fem::MeshOperators> ops,
                                const dtn::BoundaryMetric& metric,
                                const material::ParamVector& l_true, double omega,
                                double tol, double noise_rel, std::uint64_t seed);

struct StabilityRow {
  double noise = 0.0;
  double error = 0.0;  // sup-norm distance of the reconstruction to the truth
  double discrepancy = 0.0;
  int iterations = 0;
  std::string stop_reason;
};

struct StabilityReport {
  std::vector<StabilityRow> rows;
  double floor_error = 0.0;  // noiseless reconstruction error
  double slope = 0.0;        // log-log error vs noise over the noisy rows
};

// Reconstruction error as a function of data noise; the empirical counterpart of the
// Lipschitz stability bound.
StabilityReport stability_consistency(std::shared_ptr<const fem::MeshOperators> ops,
                                      const dtn::BoundaryMetric& metric,
                                      const material::ParamVector& l_true,
                                      const material::ParamVector& l0, double omega,
                                      double omega_max,
                                      const std::vector<double>& noise_list,
                                      std::uint64_t seed,
                                      const material::ConstraintSet& set,
                                      const InversionConfig& config);

}  // namespace edtn::invert
