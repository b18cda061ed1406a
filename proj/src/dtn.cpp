#include "edtn/dtn.hpp"

#include <cmath>

#include "edtn/errors.hpp"
#include "edtn/hash.hpp"
#include "edtn/kernels.hpp"
#include "edtn/parallel.hpp"

namespace edtn::dtn {

namespace {

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& a, bool inverse) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success)
    throw NumericError("boundary metric: eigendecomposition failed");
  Eigen::VectorXd d = es.eigenvalues();
  for (int i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0.0))
      throw NumericError("boundary metric: matrix not positive definite");
    d[i] = inverse ? 1.0 / std::sqrt(d[i]) : std::sqrt(d[i]);
  }
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd kron_i3(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(3 * a.rows(), 3 * a.cols());
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c)
      for (int k = 0; k < 3; ++k) out(3 * r + k, 3 * c + k) = a(r, c);
  return out;
}

}  // namespace

BoundaryMetric BoundaryMetric::build(std::shared_ptr<const fem::MeshOperators> ops) {
  if (!ops) throw DimensionError("boundary_metric: null operators");
  const auto& m = ops->mesh();
  const auto& dofs = ops->dofs();
  const int ns = static_cast<int>(dofs.sigma_vertices.size());
  if (ns == 0)
    throw GeometryError(
        "boundary_metric: measurement patch has no interior vertices");

  std::vector<std::int32_t> scalar_index(m.vertices.size(), -1);
  for (int i = 0; i < ns; ++i) scalar_index[dofs.sigma_vertices[i]] = i;

  BoundaryMetric bm;
  bm.mass_ = Eigen::MatrixXd::Zero(ns, ns);
  bm.stiff_ = Eigen::MatrixXd::Zero(ns, ns);
  for (const auto& f : m.faces) {
    if (f.marker != mesh::marker_sigma) continue;
    Eigen::Vector3d p[3];
    for (int a = 0; a < 3; ++a) p[a] = Eigen::Vector3d(m.vertices[f.v[a]].data());
    const Eigen::Vector3d cr = (p[1] - p[0]).cross(p[2] - p[0]);
    const double area = 0.5 * cr.norm();
    if (!(area > 0.0)) throw GeometryError("boundary_metric: degenerate patch face");
    const Eigen::Vector3d n = cr.normalized();
    // In-plane P1 gradients: rotate the opposite edge into the plane.
    Eigen::Vector3d grad[3];
    for (int a = 0; a < 3; ++a)
      grad[a] = n.cross(p[(a + 2) % 3] - p[(a + 1) % 3]) / (2.0 * area);
    for (int a = 0; a < 3; ++a) {
      const std::int32_t ia = scalar_index[f.v[a]];
      if (ia < 0) continue;  // rim vertex: zero extension
      for (int b = 0; b < 3; ++b) {
        const std::int32_t ib = scalar_index[f.v[b]];
        if (ib < 0) continue;
        bm.mass_(ia, ib) += area / 12.0 * (a == b ? 2.0 : 1.0);
        bm.stiff_(ia, ib) += area * grad[a].dot(grad[b]);
      }
    }
  }

  const Eigen::MatrixXd mh = sym_sqrt(bm.mass_, false);
  const Eigen::MatrixXd mih = sym_sqrt(bm.mass_, true);
  const Eigen::MatrixXd pencil = mih * (bm.mass_ + bm.stiff_) * mih;
  bm.metric_ = mh * sym_sqrt(0.5 * (pencil + pencil.transpose()), false) * mh;
  bm.metric_ = 0.5 * (bm.metric_ + bm.metric_.transpose());
  bm.metric_inv_ = bm.metric_.inverse();
  bm.metric_inv_ = 0.5 * (bm.metric_inv_ + bm.metric_inv_.transpose());
  bm.w3_ = kron_i3(sym_sqrt(bm.metric_, true));
  return bm;
}

double BoundaryMetric::trace_norm(std::span<const double> g) const {
  if (static_cast<int>(g.size()) != dim())
    throw DimensionError("trace_norm: wrong trace vector size");
  const int ns = scalar_dim();
  double s = 0.0;
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd gc(ns);
    for (int i = 0; i < ns; ++i) gc[i] = g[3 * i + c];
    s += gc.dot(metric_ * gc);
  }
  return s > 0.0 ? std::sqrt(s) : 0.0;
}

double BoundaryMetric::dual_norm(std::span<const double> r) const {
  if (static_cast<int>(r.size()) != dim())
    throw DimensionError("dual_norm: wrong trace vector size");
  const int ns = scalar_dim();
  double s = 0.0;
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd rc(ns);
    for (int i = 0; i < ns; ++i) rc[i] = r[3 * i + c];
    s += rc.dot(metric_inv_ * rc);
  }
  return s > 0.0 ? std::sqrt(s) : 0.0;
}

Eigen::MatrixXd BoundaryMetric::whiten(const Eigen::MatrixXd& d) const {
  if (d.rows() != dim() || d.cols() != dim())
    throw DimensionError("whiten: operator size does not match trace space");
  return w3_ * d * w3_;
}

double BoundaryMetric::star_norm(const Eigen::MatrixXd& d) const {
  return whiten(d).bdcSvd().singularValues()[0];
}

double star_norm(const Eigen::MatrixXd& d, const BoundaryMetric& metric) {
  return metric.star_norm(d);
}

std::vector<double> extend_trace(const fem::DofMap& dofs, std::span<const double> g) {
  if (static_cast<std::int32_t>(g.size()) != dofs.n_trace())
    throw DimensionError("extend_trace: wrong trace vector size");
  std::vector<double> full(dofs.n_full(), 0.0);
  for (std::size_t k = 0; k < g.size(); ++k) full[dofs.sigma_dofs[k]] = g[k];
  return full;
}

std::vector<double> restrict_trace(const fem::DofMap& dofs,
                                   std::span<const double> full) {
  if (static_cast<std::int32_t>(full.size()) != dofs.n_full())
    throw DimensionError("restrict_trace: wrong dof vector size");
  std::vector<double> g(dofs.n_trace());
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = full[dofs.sigma_dofs[k]];
  return g;
}

SolutionFamily solution_family(std::shared_ptr<const fem::MeshOperators> ops,
                               const material::ParamVector& l, double omega, double tol,
                               const Eigen::MatrixXd* warm) {
  const fem::DiscreteOperator op = fem::assemble(ops, l);
  const solver::System sys(op, omega);
  const auto& dofs = ops->dofs();
  const int nt = dofs.n_trace();
  const auto n_full = static_cast<std::size_t>(dofs.n_full());
  if (nt == 0) throw GeometryError("solution_family: empty trace space");
  if (warm && (warm->rows() != static_cast<Eigen::Index>(n_full) || warm->cols() != nt))
    throw DimensionError("solution_family: warm start has wrong shape");

  SolutionFamily fam;
  fam.u.resize(n_full, nt);
  std::vector<int> iters(nt, 0);
  parallel_for(0, static_cast<std::size_t>(nt), [&](std::size_t k) {
    std::vector<double> g(n_full, 0.0);
    g[dofs.sigma_dofs[k]] = 1.0;
    std::vector<double> u(n_full);
    std::span<const double> w;
    std::vector<double> wbuf;
    if (warm) {
      wbuf.assign(warm->col(k).data(), warm->col(k).data() + n_full);
      w = wbuf;
    }
    const auto rep = sys.solve(g, {}, tol, u, w);
    iters[k] = rep.iterations;
    for (std::size_t i = 0; i < n_full; ++i) fam.u(i, k) = u[i];
  });
  for (int k = 0; k < nt; ++k) fam.total_pcg_iterations += iters[k];
  return fam;
}

DtnOperator assemble_dtn(std::shared_ptr<const fem::MeshOperators> ops,
                         const material::ParamVector& l, double omega, double tol) {
  const auto& dofs = ops->dofs();
  const int nt = dofs.n_trace();
  const SolutionFamily fam = solution_family(ops, l, omega, tol);

  const fem::DiscreteOperator op = fem::assemble(ops, l);
  const solver::System sys(op, omega);
  DtnOperator d;
  d.lambda.resize(nt, nt);
  d.omega = omega;
  d.params = l;
  d.mesh_id = ops->mesh().id();
  d.total_pcg_iterations = fam.total_pcg_iterations;
  const auto n_full = static_cast<std::size_t>(dofs.n_full());
  parallel_for(0, static_cast<std::size_t>(nt), [&](std::size_t k) {
    std::vector<double> u(n_full), au(n_full);
    for (std::size_t i = 0; i < n_full; ++i) u[i] = fam.u(i, k);
    sys.full_multiply(u, au);
    for (int r = 0; r < nt; ++r) d.lambda(r, k) = au[dofs.sigma_dofs[r]];
  });
  d.asymmetry = (d.lambda - d.lambda.transpose()).cwiseAbs().maxCoeff();
  // The bilinear form is symmetric; the solver-tolerance skew is averaged away so
  // downstream spectral code sees an exactly symmetric operator.
  d.lambda = (0.5 * (d.lambda + d.lambda.transpose())).eval();
  return d;
}

std::shared_ptr<const DtnOperator> ForwardCache::get_or_compute(
    std::shared_ptr<const fem::MeshOperators> ops, const material::ParamVector& l,
    double omega, double tol) {
  Fnv1a h;
  h.add(ops->mesh().content_hash());
  h.add(l.content_hash());
  h.add(omega);
  h.add(tol);
  const std::uint64_t key = h.value();
  {
    std::scoped_lock lock(mutex_);
    auto it = map_.find(key);
    if (it != map_.end()) return it->second;
  }
  auto computed = std::make_shared<const DtnOperator>(assemble_dtn(ops, l, omega, tol));
  std::scoped_lock lock(mutex_);
  auto [it, inserted] = map_.emplace(key, std::move(computed));
  return it->second;
}

void ForwardCache::clear() {
  std::scoped_lock lock(mutex_);
  map_.clear();
}

std::size_t ForwardCache::size() const {
  std::scoped_lock lock(mutex_);
  return map_.size();
}

std::shared_ptr<const DtnOperator> forward_map(
    ForwardCache& cache, std::shared_ptr<const fem::MeshOperators> ops,
    const material::ParamVector& l, double omega, double tol) {
  return cache.get_or_compute(std::move(ops), l, omega, tol);
}

AlessandriniReport alessandrini_gap(std::shared_ptr<const fem::MeshOperators> ops,
                                    const material::ParamVector& l1,
                                    const material::ParamVector& l2, double omega,
                                    std::span<const double> psi,
                                    std::span<const double> phi, double tol) {
  const auto& dofs = ops->dofs();
  const auto n_full = static_cast<std::size_t>(dofs.n_full());
  const std::vector<double> g_psi = extend_trace(dofs, psi);
  const std::vector<double> g_phi = extend_trace(dofs, phi);

  const fem::DiscreteOperator op1 = fem::assemble(ops, l1);
  const fem::DiscreteOperator op2 = fem::assemble(ops, l2);
  const solver::System sys1(op1, omega);
  const solver::System sys2(op2, omega);
  std::vector<double> u1(n_full), u2(n_full), w2(n_full);
  sys1.solve(g_psi, {}, tol, u1);
  sys2.solve(g_phi, {}, tol, u2);
  sys2.solve(g_psi, {}, tol, w2);

  AlessandriniReport rep;
  // Boundary pairing: <L1 psi - L2 psi, phi> via full matrix action on the solves.
  std::vector<double> a1(n_full), a2(n_full);
  sys1.full_multiply(u1, a1);
  sys2.full_multiply(w2, a2);
  rep.rhs = kernels::dot(a1, g_phi) - kernels::dot(a2, g_phi);

  // Volume quadrature: exact per-element contraction of the coefficient differences
  // against the two solution gradients, plus the exact P1 mass pairing.
  const auto& m = ops->mesh();
  double lhs = 0.0;
  Eigen::Matrix<double, 3, 4> u1e, u2e;
  for (const auto& t : m.tets) {
    const int j = t.region - 1;
    const double dlam = l1.lambda(j) - l2.lambda(j);
    const double dmu = l1.mu(j) - l2.mu(j);
    const double drho = l1.rho(j) - l2.rho(j);
    if (dlam == 0.0 && dmu == 0.0 && drho == 0.0) continue;
    const fem::ElementGeometry g = fem::element_geometry(m, t);
    for (int a = 0; a < 4; ++a)
      for (int c = 0; c < 3; ++c) {
        u1e(c, a) = u1[3 * t.v[a] + c];
        u2e(c, a) = u2[3 * t.v[a] + c];
      }
    const Eigen::Matrix3d grad1 = fem::element_gradient(g, u1e);
    const Eigen::Matrix3d grad2 = fem::element_gradient(g, u2e);
    const Eigen::Matrix3d e1 = 0.5 * (grad1 + grad1.transpose());
    const Eigen::Matrix3d e2 = 0.5 * (grad2 + grad2.transpose());
    lhs += g.volume *
           (dlam * e1.trace() * e2.trace() + 2.0 * dmu * e1.cwiseProduct(e2).sum());
    if (drho != 0.0 && omega != 0.0) {
      double pairing = 0.0;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          const double w = (a == b ? 2.0 : 1.0) * g.volume / 20.0;
          pairing += w * u1e.col(a).dot(u2e.col(b));
        }
      lhs -= omega * omega * drho * pairing;
    }
  }
  rep.lhs = lhs;
  rep.gap = std::abs(rep.lhs - rep.rhs);
  return rep;
}

double energy_ratio(const fem::MeshOperators& ops, const BoundaryMetric& metric,
                    std::span<const double> u, std::span<const double> g_trace) {
  const double denom = metric.trace_norm(g_trace);
  if (!(denom > 0.0)) throw NumericError("energy_ratio: zero boundary data");
  return ops.h1_norm(u) / denom;
}

}  // namespace edtn::dtn
