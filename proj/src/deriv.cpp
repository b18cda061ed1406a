#include "edtn/deriv.hpp"

#include <cmath>

#include "edtn/errors.hpp"
#include "edtn/rng.hpp"

namespace edtn::deriv {

Eigen::MatrixXd df_apply(std::shared_ptr<const fem::MeshOperators> ops,
                         const material::ParamVector& l, const material::ParamVector& h,
                         double omega, double tol) {
  if (h.regions() != ops->regions())
    throw DimensionError("df_apply: direction regions != mesh regions");
  const dtn::SolutionFamily fam = dtn::solution_family(ops, l, omega, tol);
  const auto& m = ops->mesh();
  const int nt = static_cast<int>(fam.u.cols());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(nt, nt);

  // Per element and trace column: trace of the gradient, the six symmetric-gradient
  // entries, the vertex-sum vector and the 12 vertex values; the pairwise quadrature
  // is a weighted dot of these features (exact for P1 and constant coefficients).
  Eigen::MatrixXd feat(22, nt);
  Eigen::Matrix<double, 3, 4> ue;
  for (const auto& t : m.tets) {
    const int j = t.region - 1;
    const double hlam = h.lambda(j), hmu = h.mu(j), hrho = h.rho(j);
    if (hlam == 0.0 && hmu == 0.0 && (hrho == 0.0 || omega == 0.0)) continue;
    const fem::ElementGeometry g = fem::element_geometry(m, t);
    for (int k = 0; k < nt; ++k) {
      for (int a = 0; a < 4; ++a)
        for (int c = 0; c < 3; ++c) ue(c, a) = fam.u(3 * t.v[a] + c, k);
      const Eigen::Matrix3d grad = fem::element_gradient(g, ue);
      const Eigen::Matrix3d e = 0.5 * (grad + grad.transpose());
      feat(0, k) = e.trace();
      feat(1, k) = e(0, 0);
      feat(2, k) = e(1, 1);
      feat(3, k) = e(2, 2);
      feat(4, k) = e(0, 1);
      feat(5, k) = e(0, 2);
      feat(6, k) = e(1, 2);
      const Eigen::Vector3d total = ue.rowwise().sum();
      feat.block<3, 1>(7, k) = total;
      for (int a = 0; a < 4; ++a) feat.block<3, 1>(10 + 3 * a, k) = ue.col(a);
    }
    Eigen::VectorXd w(22);
    const double mw = -omega * omega * hrho * g.volume / 20.0;
    w(0) = hlam * g.volume;
    w(1) = w(2) = w(3) = 2.0 * hmu * g.volume;
    w(4) = w(5) = w(6) = 4.0 * hmu * g.volume;  // off-diagonal pairs count twice
    w(7) = w(8) = w(9) = mw;
    for (int i = 10; i < 22; ++i) w(i) = mw;
    out.noalias() += feat.transpose() * w.asDiagonal() * feat;
  }
  return out;
}

Eigen::MatrixXd DfJacobian::contract(const material::ParamVector& h) const {
  if (static_cast<std::size_t>(h.size()) != blocks.size())
    throw DimensionError("contract: direction size != block count");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(blocks[0].rows(), blocks[0].cols());
  for (std::size_t k = 0; k < blocks.size(); ++k)
    if (h[static_cast<int>(k)] != 0.0) out += h[static_cast<int>(k)] * blocks[k];
  return out;
}

DfJacobian df_jacobian_from_family(const fem::MeshOperators& ops,
                                   const Eigen::MatrixXd& family_u,
                                   const material::ParamVector& base, double omega) {
  const auto& p = ops.pattern();
  const int nt = static_cast<int>(family_u.cols());
  const auto n_full = static_cast<std::size_t>(p.rows);
  if (family_u.rows() != static_cast<Eigen::Index>(n_full))
    throw DimensionError("df_jacobian_from_family: family has wrong row count");
  const int nr = ops.regions();

  DfJacobian jac;
  jac.base = base;
  jac.omega = omega;
  jac.blocks.resize(3 * nr);

  Eigen::MatrixXd v(n_full, nt);
  auto triple = [&](std::span<const double> vals, double scale) {
    for (int k = 0; k < nt; ++k) {
      std::span<const double> uc(family_u.col(k).data(), n_full);
      std::span<double> vc(v.col(k).data(), n_full);
      p.multiply(vals, uc, vc);
    }
    Eigen::MatrixXd b = family_u.transpose() * v;
    if (scale != 1.0) b *= scale;
    return b;
  };
  for (int j = 0; j < nr; ++j) {
    jac.blocks[j] = triple(ops.stiff_lambda(j), 1.0);
    jac.blocks[nr + j] = triple(ops.stiff_mu(j), 1.0);
    jac.blocks[2 * nr + j] = triple(ops.mass(j), -omega * omega);
  }
  return jac;
}

DfJacobian df_jacobian(std::shared_ptr<const fem::MeshOperators> ops,
                       const material::ParamVector& l, double omega, double tol) {
  const dtn::SolutionFamily fam = dtn::solution_family(ops, l, omega, tol);
  return df_jacobian_from_family(*ops, fam.u, l, omega);
}

TaylorReport taylor_order(std::shared_ptr<const fem::MeshOperators> ops,
                          const dtn::BoundaryMetric& metric,
                          const material::ParamVector& l, const material::ParamVector& h,
                          double omega, const std::vector<double>& t_list, double tol) {
  if (t_list.empty()) throw ConfigError("taylor_order: empty step list");
  for (double t : t_list)
    if (!(t > 0.0)) throw ConfigError("taylor_order: steps must be positive");
  const dtn::DtnOperator f0 = dtn::assemble_dtn(ops, l, omega, tol);
  const DfJacobian jac = df_jacobian(ops, l, omega, tol);
  const Eigen::MatrixXd jh = jac.contract(h);

  TaylorReport rep;
  rep.noise_floor = 10.0 * tol * metric.star_norm(f0.lambda);
  for (double t : t_list) {
    const dtn::DtnOperator ft = dtn::assemble_dtn(ops, l + t * h, omega, tol);
    const double r = metric.star_norm(ft.lambda - f0.lambda - t * jh);
    rep.t.push_back(t);
    rep.remainder.push_back(r);
    rep.usable.push_back(r > rep.noise_floor);
  }
  // Log-log least squares over usable points.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < rep.t.size(); ++i) {
    if (!rep.usable[i]) continue;
    const double x = std::log(rep.t[i]), y = std::log(rep.remainder[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n >= 2) rep.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return rep;
}

DerivLipschitzReport df_lipschitz_probe(std::shared_ptr<const fem::MeshOperators> ops,
                                        const dtn::BoundaryMetric& metric,
                                        const material::ConstraintSet& set, double omega,
                                        int pairs, std::uint64_t seed, double tol) {
  if (pairs < 1) throw ConfigError("df_lipschitz_probe: pairs must be >= 1");
  const int dim = 3 * ops->regions();
  if (dim > 16)
    throw ConfigError("df_lipschitz_probe: too many regions for exact vertex search");
  Rng rng(seed);
  DerivLipschitzReport rep;
  for (int p = 0; p < pairs; ++p) {
    const material::ParamVector l1 = set.sample(rng);
    const material::ParamVector l2 = set.sample(rng);
    const double d_param = material::inf_distance(l1, l2);
    if (d_param == 0.0) continue;
    const DfJacobian j1 = df_jacobian(ops, l1, omega, tol);
    const DfJacobian j2 = df_jacobian(ops, l2, omega, tol);
    // The map h -> ||(DF1-DF2)[h]||_star is convex, so its max over the unit inf-ball
    // is attained at a sign pattern; patterns paired by symmetry.
    double best = 0.0;
    material::ParamVector h(ops->regions());
    for (std::uint64_t bits = 0; bits < (1ull << (dim - 1)); ++bits) {
      for (int k = 0; k < dim; ++k)
        h[k] = (k < dim - 1 && (bits >> k) & 1) ? -1.0 : 1.0;
      const double v = metric.star_norm(j1.contract(h) - j2.contract(h));
      best = std::max(best, v);
    }
    rep.rows.push_back({d_param, best, best / d_param});
    rep.constant = std::max(rep.constant, best / d_param);
  }
  if (rep.rows.empty())
    throw NumericError("df_lipschitz_probe: no usable sample pairs");
  return rep;
}

material::ParamVector misfit_gradient(const fem::MeshOperators& ops,
                                      const Eigen::MatrixXd& family_u,
                                      const Eigen::MatrixXd& s, double omega) {
  const auto& p = ops.pattern();
  const int nt = static_cast<int>(family_u.cols());
  const auto n_full = static_cast<std::size_t>(p.rows);
  if (family_u.rows() != static_cast<Eigen::Index>(n_full))
    throw DimensionError("misfit_gradient: family has wrong row count");
  if (s.rows() != nt || s.cols() != nt)
    throw DimensionError("misfit_gradient: weight matrix has wrong shape");

  // G restricted to the pattern: G[r,c] = sum_q (U S)(r,q) U(c,q). Transposed copies
  // make the per-entry dots contiguous.
  Eigen::MatrixXd y = family_u * s;
  Eigen::MatrixXd yt = y.transpose();
  Eigen::MatrixXd ut = family_u.transpose();
  std::vector<double> g(p.nnz());
  for (std::int32_t r = 0; r < p.rows; ++r) {
    const double* yr = yt.col(r).data();
    for (std::int32_t k = p.row_ptr[r]; k < p.row_ptr[r + 1]; ++k) {
      const double* uc = ut.col(p.col_idx[k]).data();
      double acc = 0.0;
      for (int q = 0; q < nt; ++q) acc += yr[q] * uc[q];
      g[k] = acc;
    }
  }
  const int nr = ops.regions();
  material::ParamVector grad(nr);
  auto dot_vals = [&](std::span<const double> vals) {
    double acc = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) acc += vals[i] * g[i];
    return acc;
  };
  for (int j = 0; j < nr; ++j) {
    grad.lambda(j) = dot_vals(ops.stiff_lambda(j));
    grad.mu(j) = dot_vals(ops.stiff_mu(j));
    grad.rho(j) = -omega * omega * dot_vals(ops.mass(j));
  }
  return grad;
}

}  // namespace edtn::deriv
