#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "edtn/rng.hpp"

namespace edtn::material {

// Isotropic fourth-order elasticity tensor in Lame form. Acting on the symmetrized
// part of a 3x3 matrix: C A = lambda tr(A) I + 2 mu A.
struct IsotropicTensor {
  double lambda = 0.0;
  double mu = 0.0;
};

// C applied to the symmetric part of a.
Eigen::Matrix3d apply_tensor(const IsotropicTensor& c, const Eigen::Matrix3d& a);

// (C a^) : b^ with both arguments symmetrized.
double tensor_contract(const IsotropicTensor& c, const Eigen::Matrix3d& a,
                       const Eigen::Matrix3d& b);

// A-priori bounds defining the admissible parameter boxes.
struct PriorData {
  double alpha0 = 0.5;   // in (0, 1)
  double beta0 = 1.0;    // in (0, 2)
  double gamma0 = 0.5;   // in (0, 1)
  double lipschitz = 2;  // >= 1
  double volume = 1.0;   // > 0
  int regions = 1;       // >= 1

  // Throws edtn::ConfigError naming the offending field.
  void validate() const;
};

// Floor-of-coercivity tensor shared by every admissible material:
// lambda = (beta0 - 3 alpha0)/2, mu = alpha0.
IsotropicTensor reference_tensor(const PriorData& prior);

struct SubdomainMaterial {
  double lambda = 0.0;
  double mu = 0.0;
  double rho = 0.0;
};

// Piecewise-constant coefficients over N subdomains, stored as
// (lambda_1..lambda_N, mu_1..mu_N, rho_1..rho_N). Region indices are 0-based.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(int regions) : n_(regions), v_(3 * regions, 0.0) {}
  ParamVector(int regions, std::vector<double> entries);

  int regions() const { return n_; }
  int size() const { return 3 * n_; }

  double lambda(int j) const { return v_[j]; }
  double mu(int j) const { return v_[n_ + j]; }
  double rho(int j) const { return v_[2 * n_ + j]; }
  double& lambda(int j) { return v_[j]; }
  double& mu(int j) { return v_[n_ + j]; }
  double& rho(int j) { return v_[2 * n_ + j]; }

  double operator[](int k) const { return v_[k]; }
  double& operator[](int k) { return v_[k]; }

  SubdomainMaterial material(int j) const { return {lambda(j), mu(j), rho(j)}; }
  IsotropicTensor tensor(int j) const { return {lambda(j), mu(j)}; }

  std::span<const double> data() const { return v_; }
  std::vector<double>& entries() { return v_; }
  const std::vector<double>& entries() const { return v_; }

  // max over regions of (|lambda_j|, mu_j, |rho_j|); the admissibility convention
  // (mu > 0) makes this the sup of the coefficient functions.
  double sup_norm() const;

  std::uint64_t content_hash() const;

 private:
  int n_ = 0;
  std::vector<double> v_;
};

// Plain infinity norm of the entry-wise difference.
double inf_distance(const ParamVector& a, const ParamVector& b);

ParamVector operator+(const ParamVector& a, const ParamVector& b);
ParamVector operator-(const ParamVector& a, const ParamVector& b);
ParamVector operator*(double s, const ParamVector& a);

enum class SetKind {
  open_widened,  // strict bounds, factor-2 widened box
  compact        // closed tight box; projection target
};

// Per-region admissible boxes. The compact kind is the projection target used by the
// inversion; membership checks are specific to each kind and are not nested at the
// rho lower end (the literal boxes overlap only partially there).
class ConstraintSet {
 public:
  ConstraintSet(const PriorData& prior, SetKind kind);

  bool contains(const ParamVector& l) const;
  // Euclidean projection per region: rho clamped, (lambda, mu) projected onto the
  // four-sided polygon {mu in [alpha0, 1/alpha0], lambda <= 1/alpha0,
  // 3 lambda + 2 mu >= beta0}. Compact kind only.
  ParamVector project(const ParamVector& l) const;
  ParamVector centroid() const;
  // Uniform over the compact box (rejection on the slanted constraint).
  ParamVector sample(Rng& rng) const;

  const PriorData& prior() const { return prior_; }
  SetKind kind() const { return kind_; }

 private:
  PriorData prior_;
  SetKind kind_;
};

// Logarithmic modulus of continuity: |log t|^(-1/(8 delta)) for 0 < t < 1/e,
// t - 1/e + 1 for t >= 1/e, 0 at t = 0. Monotone, continuous, vanishes at 0+.
double continuity_modulus(double t, double delta);

// Fifth root of the continuity modulus; one alternation step of the layer estimate.
double alternating_modulus(double t, double delta);

// alternating_modulus composed n times.
double alternating_modulus_iter(double t, double delta, int n);

}  // namespace edtn::material
