#include "edtn/solver.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "edtn/errors.hpp"
#include "edtn/kernels.hpp"
#include "edtn/rng.hpp"

namespace edtn::solver {

System::System(const fem::DiscreteOperator& op, double omega)
    : ops_(op.ops), omega_(omega) {
  full_vals_ = op.system_vals(omega);
  reduced_vals_ = ops_->restrict_interior(full_vals_);

  // Invert the 3x3 diagonal blocks; interior dofs are vertex-major so each block is
  // three consecutive reduced rows.
  const auto& ip = ops_->interior_pattern();
  const std::int32_t nvi = ip.rows / 3;
  precond_.assign(static_cast<std::size_t>(nvi) * 9, 0.0);
  for (std::int32_t v = 0; v < nvi; ++v) {
    Eigen::Matrix3d b = Eigen::Matrix3d::Zero();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const std::int64_t k = ip.find(3 * v + i, 3 * v + j);
        if (k >= 0) b(i, j) = reduced_vals_[k];
      }
    Eigen::Matrix3d inv;
    bool invertible = false;
    double det = 0.0;
    b.computeInverseAndDetWithCheck(inv, det, invertible);
    if (!invertible) inv = Eigen::Matrix3d::Identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) precond_[9 * v + 3 * i + j] = inv(i, j);
  }
}

void System::full_multiply(std::span<const double> x, std::span<double> y) const {
  ops_->pattern().multiply(full_vals_, x, y);
}

SolveReport System::solve(std::span<const double> g, std::span<const double> f,
                          double tol, std::span<double> u,
                          std::span<const double> warm,
                          std::vector<double>* history) const {
  if (history) history->clear();
  const auto& dofs = ops_->dofs();
  const auto n_full = static_cast<std::size_t>(dofs.n_full());
  const auto n = static_cast<std::size_t>(dofs.n_interior());
  if (g.size() != n_full || u.size() != n_full)
    throw DimensionError("solve: g and u must be full-size dof vectors");
  if (!f.empty() && f.size() != n_full)
    throw DimensionError("solve: f must be empty or full-size");
  if (!warm.empty() && warm.size() != n_full)
    throw DimensionError("solve: warm start must be empty or full-size");
  if (!(tol > 0.0) || tol >= 1.0) throw ConfigError("solve: tol must be in (0, 1)");

  // rhs = f_i - (A g_ext)_i with g extended by zero to the interior.
  std::vector<double> g_ext(n_full, 0.0);
  for (auto d : dofs.boundary_dofs) g_ext[d] = g[d];
  std::vector<double> ag(n_full);
  full_multiply(g_ext, ag);
  std::vector<double> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t fd = dofs.interior_dofs[i];
    b[i] = (f.empty() ? 0.0 : f[fd]) - ag[fd];
  }

  const auto& ip = ops_->interior_pattern();
  std::vector<double> x(n, 0.0);
  if (!warm.empty())
    for (std::size_t i = 0; i < n; ++i) x[i] = warm[dofs.interior_dofs[i]];

  SolveReport rep;
  const double bnorm = kernels::nrm2(b);
  std::vector<double> r(n), z(n), p(n), q(n);
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    rep.converged = true;
  } else {
    ip.multiply(reduced_vals_, x, q);
    kernels::sub(b, q, r);
    kernels::block3_apply(n / 3, precond_.data(), r.data(), z.data());
    p = z;
    double rz = kernels::dot(r, z);
    double rnorm = kernels::nrm2(r);
    int it = 0;
    if (history) history->push_back(std::sqrt(std::max(0.0, rz)));
    while (rnorm > tol * bnorm) {
      if (it >= max_iterations)
        throw SolverError("pcg: max iterations exceeded", it, rnorm / bnorm);
      ip.multiply(reduced_vals_, p, q);
      const double pq = kernels::dot(p, q);
      if (!(pq > 0.0))
        throw SolverError("pcg: operator not positive definite at this frequency", it,
                          rnorm / bnorm);
      const double alpha = rz / pq;
      kernels::axpy(alpha, p, x);
      kernels::axpy(-alpha, q, r);
      kernels::block3_apply(n / 3, precond_.data(), r.data(), z.data());
      const double rz_new = kernels::dot(r, z);
      kernels::axpby(1.0, z, rz_new / rz, p);
      rz = rz_new;
      rnorm = kernels::nrm2(r);
      ++it;
      if (history) history->push_back(std::sqrt(std::max(0.0, rz)));
    }
    rep.iterations = it;
    rep.rel_residual = rnorm / bnorm;
    rep.converged = true;
  }

  std::fill(u.begin(), u.end(), 0.0);
  for (auto d : dofs.boundary_dofs) u[d] = g[d];
  for (std::size_t i = 0; i < n; ++i) u[dofs.interior_dofs[i]] = x[i];
  return rep;
}

SolveReport solve_dirichlet(const fem::DiscreteOperator& op, double omega,
                            std::span<const double> g, std::span<const double> f,
                            double tol, std::span<double> u) {
  return System(op, omega).solve(g, f, tol, u);
}

EigReport smallest_dirichlet_eigenvalue(std::shared_ptr<const fem::MeshOperators> ops,
                                        const material::IsotropicTensor& c0,
                                        double tol) {
  if (!ops) throw DimensionError("smallest_dirichlet_eigenvalue: null operators");
  if (!(c0.mu > 0.0))
    throw ConfigError("smallest_dirichlet_eigenvalue: mu must be positive");
  if (!(tol > 0.0)) throw ConfigError("smallest_dirichlet_eigenvalue: tol must be > 0");
  material::ParamVector l(ops->regions());
  for (int j = 0; j < ops->regions(); ++j) {
    l.lambda(j) = c0.lambda;
    l.mu(j) = c0.mu;
    l.rho(j) = 1.0;
  }
  const fem::DiscreteOperator op = fem::assemble(ops, l);
  const System sys(op, 0.0);
  const auto& dofs = ops->dofs();
  const auto n_full = static_cast<std::size_t>(dofs.n_full());
  if (dofs.n_interior() == 0)
    throw GeometryError("smallest_dirichlet_eigenvalue: no interior dofs");

  // Blocked inverse iteration with Rayleigh-Ritz extraction. The leading Dirichlet
  // eigenvalue of the cube sits in a near-degenerate cluster (x/y/z polarizations),
  // which stalls single-vector iteration at rate lam1/lam2 ~ 1; a small subspace
  // converges at rate lam1/lam_{b+1} instead.
  const auto n_int = static_cast<int>(dofs.n_interior());
  const int nb = std::min(6, n_int);
  const auto nf = static_cast<Eigen::Index>(n_full);
  Rng rng(0x9d2c5680u);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(nf, nb);
  for (int c = 0; c < nb; ++c)
    for (auto d : dofs.interior_dofs) x(d, c) = rng.gaussian();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(nf, nb);
  Eigen::MatrixXd ky(nf, nb), my(nf, nb);
  std::vector<double> g0(n_full, 0.0), rhs(n_full);

  EigReport rep;
  const double inner_tol = std::min(1e-12, tol * 1e-2);
  const int max_outer = 500;
  for (int it = 0; it < max_outer; ++it) {
    for (int c = 0; c < nb; ++c) {
      op.mass_multiply(std::span<const double>(x.col(c).data(), n_full), rhs);
      // Warm-start each column from its previous solve; u may alias the warm start.
      sys.solve(g0, rhs, inner_tol, std::span<double>(y.col(c).data(), n_full),
                std::span<const double>(y.col(c).data(), n_full));
      op.stiffness_multiply(std::span<const double>(y.col(c).data(), n_full),
                            std::span<double>(ky.col(c).data(), n_full));
      op.mass_multiply(std::span<const double>(y.col(c).data(), n_full),
                       std::span<double>(my.col(c).data(), n_full));
    }
    // Ritz problem on the subspace; columns of y vanish on the boundary, so the
    // products only sample the interior (constrained) rows of K and M.
    Eigen::MatrixXd ar = y.transpose() * ky;
    Eigen::MatrixXd br = y.transpose() * my;
    ar = 0.5 * (ar + ar.transpose()).eval();
    br = 0.5 * (br + br.transpose()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ritz(ar, br);
    if (ritz.info() != Eigen::Success)
      throw NumericError("inverse iteration: Ritz subspace became degenerate");
    x = y * ritz.eigenvectors();  // M-orthonormal Ritz vectors, ascending values
    rep.value = ritz.eigenvalues()(0);
    // Residual of the first Ritz pair restricted to interior rows: boundary rows of
    // the full product carry the (eliminated) coupling terms and are not part of the
    // constrained operator.
    const Eigen::VectorXd kx = ky * ritz.eigenvectors().col(0);
    const Eigen::VectorXd mx = my * ritz.eigenvectors().col(0);
    double num = 0.0, den = 0.0;
    for (auto d : dofs.interior_dofs) {
      const double r = kx[d] - rep.value * mx[d];
      num += r * r;
      den += kx[d] * kx[d];
    }
    rep.residual = std::sqrt(num / den);
    rep.iterations = it + 1;
    if (rep.residual <= tol) {
      rep.converged = true;
      return rep;
    }
  }
  throw SolverError("inverse power iteration did not converge", rep.iterations,
                    rep.residual);
}

double admissible_frequency_bound(const material::PriorData& prior, double lambda1_0) {
  prior.validate();
  if (!(lambda1_0 > 0.0))
    throw NumericError("admissible_frequency_bound: lambda1_0 must be > 0");
  return std::sqrt(prior.gamma0 * lambda1_0 / 2.0);
}

}  // namespace edtn::solver
