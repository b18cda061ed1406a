#include "edtn/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "edtn/deriv.hpp"
#include "edtn/errors.hpp"
#include "edtn/solver.hpp"

namespace edtn::probes {

double ProbeReport::value(const std::string& key) const {
  for (const auto& [k, v] : summary)
    if (k == key) return v;
  throw ConfigError("probe report has no summary entry '" + key + "'");
}

void ProbeReport::set(const std::string& key, double v) {
  for (auto& [k, existing] : summary)
    if (k == key) {
      existing = v;
      return;
    }
  summary.emplace_back(key, v);
}

ProbeReport lipschitz_probe(std::shared_ptr<const fem::MeshOperators> ops,
                            const dtn::BoundaryMetric& metric,
                            const material::PriorData& prior, double omega, int samples,
                            std::uint64_t seed, double tol) {
  if (samples <= 0) throw ConfigError("lipschitz_probe: samples must be positive");
  const material::ConstraintSet set(prior, material::SetKind::compact);
  Rng rng(seed);
  dtn::ForwardCache cache;

  ProbeReport rep;
  rep.probe = "lipschitz";
  rep.mesh_id = ops->mesh().id();
  rep.omega = omega;
  rep.seed = seed;
  rep.columns = {"sample", "distance", "gap", "ratio", "skipped"};

  double c_emp = 0.0;
  double ratio_min = std::numeric_limits<double>::infinity();
  double ratio_sum = 0.0;
  int used = 0, skipped = 0;
  for (int i = 0; i < samples; ++i) {
    const material::ParamVector l1 = set.sample(rng);
    material::ParamVector l2 = set.sample(rng);
    while (material::inf_distance(l1, l2) == 0.0) l2 = set.sample(rng);
    const double distance = material::inf_distance(l1, l2);
    const auto f1 = dtn::forward_map(cache, ops, l1, omega, tol);
    const auto f2 = dtn::forward_map(cache, ops, l2, omega, tol);
    const double gap = metric.star_norm(f1->lambda - f2->lambda);
    const double floor = 10.0 * tol * metric.star_norm(f1->lambda);
    if (gap < floor) {
      ++skipped;
      rep.rows.push_back({double(i), distance, gap, 0.0, 1.0});
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "sample %d skipped: gap %.3e below solver floor %.3e", i, gap,
                    floor);
      rep.notes.push_back(buf);
      continue;
    }
    const double ratio = distance / gap;
    rep.rows.push_back({double(i), distance, gap, ratio, 0.0});
    c_emp = std::max(c_emp, ratio);
    ratio_min = std::min(ratio_min, ratio);
    ratio_sum += ratio;
    ++used;
  }
  rep.set("samples", samples);
  rep.set("used", used);
  rep.set("skipped", skipped);
  rep.set("c_emp", c_emp);
  rep.set("ratio_min", used ? ratio_min : 0.0);
  rep.set("ratio_mean", used ? ratio_sum / used : 0.0);
  if (used == 0) rep.notes.push_back("all pairs below the solver floor; c_emp unset");
  return rep;
}

namespace {

// Largest-magnitude eigenpair of a symmetric matrix; the star norm of the whitened
// operator and the subgradient direction of h -> ||M(h)||.
struct TopEig {
  double value = 0.0;  // |lambda|
  double sign = 1.0;
  Eigen::VectorXd vec;
};

TopEig top_eig(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const Eigen::Index n = ev.size();
  TopEig t;
  if (-ev(0) > ev(n - 1)) {
    t.value = -ev(0);
    t.sign = -1.0;
    t.vec = es.eigenvectors().col(0);
  } else {
    t.value = ev(n - 1);
    t.sign = 1.0;
    t.vec = es.eigenvectors().col(n - 1);
  }
  return t;
}

struct DirectionalScan {
  double axis_min = std::numeric_limits<double>::infinity();
  double vertex_min = std::numeric_limits<double>::infinity();
  double random_min = std::numeric_limits<double>::infinity();
  double polished_min = std::numeric_limits<double>::infinity();
  double overall = std::numeric_limits<double>::infinity();
};

DirectionalScan scan_sphere(const std::vector<Eigen::MatrixXd>& blocks,
                            const std::vector<int>& active, int h_samples, Rng& rng) {
  const int na = static_cast<int>(active.size());
  if (na == 0) throw ConfigError("directional scan: no active coordinates");
  const Eigen::Index n = blocks[active[0]].rows();

  auto assemble = [&](const Eigen::VectorXd& h) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int a = 0; a < na; ++a) m += h(a) * blocks[active[a]];
    return m;
  };
  auto value = [&](const Eigen::VectorXd& h) { return top_eig(assemble(h)).value; };

  DirectionalScan scan;
  Eigen::VectorXd best = Eigen::VectorXd::Zero(na);

  // Facet midpoints: h = e_a. These catch coordinates whose block vanishes (the
  // density directions at omega = 0), which no sign pattern can expose.
  for (int a = 0; a < na; ++a) {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(na);
    h(a) = 1.0;
    const double v = value(h);
    if (v < scan.axis_min) {
      scan.axis_min = v;
      best = h;
    }
  }
  scan.overall = scan.axis_min;

  // Vertex enumeration up to global sign symmetry; exact at small parameter counts.
  if (na <= 12) {
    const std::uint64_t patterns = std::uint64_t{1} << (na - 1);
    for (std::uint64_t bits = 0; bits < patterns; ++bits) {
      Eigen::VectorXd h(na);
      h(0) = 1.0;
      for (int a = 1; a < na; ++a) h(a) = (bits >> (a - 1)) & 1 ? -1.0 : 1.0;
      const double v = value(h);
      if (v < scan.vertex_min) scan.vertex_min = v;
      if (v < scan.overall) {
        scan.overall = v;
        best = h;
      }
    }
  }

  for (int s = 0; s < h_samples; ++s) {
    Eigen::VectorXd h(na);
    for (int a = 0; a < na; ++a) h(a) = rng.gaussian();
    const double norm = h.lpNorm<Eigen::Infinity>();
    if (norm == 0.0) continue;
    h /= norm;
    const double v = value(h);
    if (v < scan.random_min) scan.random_min = v;
    if (v < scan.overall) {
      scan.overall = v;
      best = h;
    }
  }

  // Projected subgradient descent on each facet {h_a = +1} (global sign symmetry
  // covers h_a = -1). The objective is convex, so facet minima can sit strictly
  // inside a face where enumeration and random probing both miss.
  const int pgd_iters = 80;
  for (int a = 0; a < na; ++a) {
    for (int start = 0; start < 2; ++start) {
      Eigen::VectorXd h;
      if (start == 0) {
        h = Eigen::VectorXd::Zero(na);
      } else {
        h = best;
        if (h(a) < 0) h = -h;
      }
      h(a) = 1.0;
      double local = value(h);
      Eigen::VectorXd h_best = h;
      for (int it = 0; it < pgd_iters; ++it) {
        const TopEig t = top_eig(assemble(h));
        if (t.value < local) {
          local = t.value;
          h_best = h;
        }
        if (t.value == 0.0) break;
        Eigen::VectorXd g(na);
        for (int k = 0; k < na; ++k)
          g(k) = t.sign * t.vec.dot(blocks[active[k]] * t.vec);
        g(a) = 0.0;
        const double gn = g.norm();
        if (gn == 0.0) break;
        h -= (0.8 / (gn * std::sqrt(it + 1.0))) * g;
        for (int k = 0; k < na; ++k) h(k) = std::clamp(h(k), -1.0, 1.0);
        h(a) = 1.0;
      }
      const double final_v = value(h);
      if (final_v < local) local = final_v;
      if (local < scan.polished_min) scan.polished_min = local;
      if (local < scan.overall) scan.overall = local;
    }
  }
  return scan;
}

}  // namespace

double min_directional_norm(const std::vector<Eigen::MatrixXd>& whitened_blocks,
                            const std::vector<int>& active, int h_samples, Rng& rng) {
  return scan_sphere(whitened_blocks, active, h_samples, rng).overall;
}

ProbeReport q0_probe(std::shared_ptr<const fem::MeshOperators> ops,
                     const dtn::BoundaryMetric& metric, const material::PriorData& prior,
                     double omega, int l_samples, int h_samples, std::uint64_t seed,
                     double tol) {
  if (l_samples <= 0) throw ConfigError("q0_probe: l_samples must be positive");
  if (h_samples < 0) throw ConfigError("q0_probe: h_samples must be >= 0");
  const material::ConstraintSet set(prior, material::SetKind::compact);
  Rng rng(seed);
  const int dim = 3 * ops->regions();
  const int nt = ops->dofs().n_trace();
  std::vector<int> active(dim);
  for (int k = 0; k < dim; ++k) active[k] = k;

  ProbeReport rep;
  rep.probe = "q0";
  rep.mesh_id = ops->mesh().id();
  rep.omega = omega;
  rep.seed = seed;
  rep.columns = {"sample",     "q0_sample", "vertex_min",      "axis_min",
                 "random_min", "polished_min", "lower_surrogate"};

  double q0 = std::numeric_limits<double>::infinity();
  double lower = std::numeric_limits<double>::infinity();
  double max_axis = 0.0;
  for (int i = 0; i < l_samples; ++i) {
    const material::ParamVector l = set.sample(rng);
    const dtn::SolutionFamily fam = dtn::solution_family(ops, l, omega, tol);
    const deriv::DfJacobian jac = deriv::df_jacobian_from_family(*ops, fam.u, l, omega);
    std::vector<Eigen::MatrixXd> wb(dim);
    for (int k = 0; k < dim; ++k) {
      wb[k] = metric.whiten(jac.blocks[k]);
      max_axis = std::max(max_axis, top_eig(wb[k]).value);
    }

    const DirectionalScan scan = scan_sphere(wb, active, h_samples, rng);

    // Rank surrogate: sigma_min of the stacked whitened Jacobian bounds
    // ||M(h)||_F >= sigma_min ||h||_2 >= sigma_min, and ||M||_star >= ||M||_F/sqrt(nt).
    Eigen::MatrixXd jtj(dim, dim);
    for (int p = 0; p < dim; ++p)
      for (int q = p; q < dim; ++q) {
        jtj(p, q) = wb[p].cwiseProduct(wb[q]).sum();
        jtj(q, p) = jtj(p, q);
      }
    const double lam_min =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(jtj).eigenvalues().minCoeff();
    const double surrogate = std::sqrt(std::max(lam_min, 0.0) / nt);

    rep.rows.push_back({double(i), scan.overall, scan.vertex_min, scan.axis_min,
                        scan.random_min, scan.polished_min, surrogate});
    q0 = std::min(q0, scan.overall);
    lower = std::min(lower, surrogate);
  }
  const bool degenerate = omega == 0.0 || q0 <= 1e-8 * max_axis;
  rep.set("q0_emp", q0);
  rep.set("lower_bound_surrogate", lower);
  rep.set("max_axis_norm", max_axis);
  rep.set("degenerate", degenerate ? 1.0 : 0.0);
  rep.set("l_samples", l_samples);
  rep.set("h_samples", h_samples);
  if (omega == 0.0)
    rep.notes.push_back(
        "density blocks vanish at omega = 0; the minimum sits on a density axis and "
        "q0 degenerates");
  else if (degenerate)
    rep.notes.push_back("q0 is at the numerical floor; derivative nearly singular");
  return rep;
}

namespace {

double point_segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                              const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double t = std::clamp(ab.dot(p - a) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double point_triangle_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                               const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d n = (b - a).cross(c - a);
  const double nn = n.squaredNorm();
  if (nn > 0.0) {
    // Barycentric test of the in-plane projection.
    const Eigen::Vector3d q = p - n.dot(p - a) / nn * n;
    const double w0 = (b - q).cross(c - q).dot(n);
    const double w1 = (c - q).cross(a - q).dot(n);
    const double w2 = (a - q).cross(b - q).dot(n);
    if (w0 >= 0 && w1 >= 0 && w2 >= 0) return (p - q).norm();
  }
  return std::min({point_segment_distance(p, a, b), point_segment_distance(p, b, c),
                   point_segment_distance(p, c, a)});
}

}  // namespace

ProbeReport greens_blowup_probe(std::shared_ptr<const fem::MeshOperators> ops,
                                const material::ParamVector& l, double omega,
                                const std::array<double, 3>& y,
                                const std::vector<double>& r_list, double tol) {
  if (r_list.empty()) throw ConfigError("greens_blowup_probe: empty radius list");
  for (double r : r_list)
    if (!(r > 0.0)) throw ConfigError("greens_blowup_probe: radii must be positive");
  const mesh::PartitionedMesh& m = ops->mesh();
  const mesh::MeshQuality quality = mesh::mesh_quality(m);
  const double h_max = quality.h_max;
  const Eigen::Vector3d yv(y[0], y[1], y[2]);

  // Element centroids and geometry, shared by every radius and direction.
  const std::size_t num_tets = m.tets.size();
  std::vector<fem::ElementGeometry> geom(num_tets);
  std::vector<double> centroid_dist(num_tets);
  for (std::size_t t = 0; t < num_tets; ++t) {
    geom[t] = fem::element_geometry(m, m.tets[t]);
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (int a = 0; a < 4; ++a) {
      const auto& p = m.vertices[m.tets[t].v[a]];
      c += Eigen::Vector3d(p[0], p[1], p[2]);
    }
    centroid_dist[t] = (c / 4.0 - yv).norm();
  }

  const double r_min = *std::min_element(r_list.begin(), r_list.end());
  if (!std::any_of(centroid_dist.begin(), centroid_dist.end(),
                   [&](double d) { return d <= r_min; })) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "greens_blowup_probe: radius %.3g excludes no element; the mesh "
                  "needs h_max <= %.3g (current h_max %.3g)",
                  r_min, r_min, h_max);
    throw GeometryError(buf);
  }

  double boundary_distance = std::numeric_limits<double>::infinity();
  for (const auto& f : m.faces) {
    const auto& pa = m.vertices[f.v[0]];
    const auto& pb = m.vertices[f.v[1]];
    const auto& pc = m.vertices[f.v[2]];
    boundary_distance = std::min(
        boundary_distance,
        point_triangle_distance(yv, Eigen::Vector3d(pa[0], pa[1], pa[2]),
                                Eigen::Vector3d(pb[0], pb[1], pb[2]),
                                Eigen::Vector3d(pc[0], pc[1], pc[2])));
  }

  ProbeReport rep;
  rep.probe = "greens";
  rep.mesh_id = m.id();
  rep.omega = omega;
  rep.seed = 0;
  rep.columns = {"r",      "eps",    "h1_ext_x", "h1_ext_y", "h1_ext_z",
                 "l2_x",   "l2_y",   "l2_z",     "clamped",  "clips_boundary"};

  // One solve per distinct regularization radius and direction; radii whose hat
  // support would under-resolve the mesh are clamped to h_max and deduplicated.
  std::vector<double> eps_of_r(r_list.size());
  std::vector<double> distinct_eps;
  for (std::size_t i = 0; i < r_list.size(); ++i) {
    eps_of_r[i] = std::max(r_list[i] / 4.0, h_max);
    bool found = false;
    for (double e : distinct_eps)
      if (e == eps_of_r[i]) found = true;
    if (!found) distinct_eps.push_back(eps_of_r[i]);
  }
  std::sort(distinct_eps.begin(), distinct_eps.end());

  const fem::DiscreteOperator op = fem::assemble(ops, l);
  const solver::System sys(op, omega);
  const auto n_full = static_cast<std::size_t>(ops->dofs().n_full());
  const std::vector<double> g(n_full, 0.0);

  // solutions[e][d]: regularized point load of radius distinct_eps[e], direction d.
  std::vector<std::array<std::vector<double>, 3>> solutions(distinct_eps.size());
  int num_solves = 0;
  for (std::size_t e = 0; e < distinct_eps.size(); ++e) {
    const double eps = distinct_eps[e];
    std::vector<double> w(m.vertices.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
      const auto& p = m.vertices[i];
      const double s = (Eigen::Vector3d(p[0], p[1], p[2]) - yv).norm();
      w[i] = std::max(0.0, 1.0 - s / eps);
      total += w[i];
    }
    if (!(total > 0.0))
      throw GeometryError("greens_blowup_probe: no vertex inside the load support");
    for (int d = 0; d < 3; ++d) {
      std::vector<double> f(n_full, 0.0);
      for (std::size_t i = 0; i < m.vertices.size(); ++i)
        f[3 * i + d] = w[i] / total;
      std::vector<double> u(n_full);
      std::span<const double> warm;
      if (e > 0) warm = solutions[e - 1][d];
      sys.solve(g, f, tol, u, warm);
      solutions[e][d] = std::move(u);
      ++num_solves;
    }
  }

  auto exterior_h1 = [&](std::span<const double> u, double r) {
    double acc = 0.0;
    Eigen::Matrix<double, 3, 4> u4;
    for (std::size_t t = 0; t < num_tets; ++t) {
      if (centroid_dist[t] <= r) continue;
      const auto& tet = m.tets[t];
      for (int a = 0; a < 4; ++a)
        for (int c = 0; c < 3; ++c) u4(c, a) = u[3 * tet.v[a] + c];
      const Eigen::Matrix3d grad = fem::element_gradient(geom[t], u4);
      const double vol = geom[t].volume;
      acc += grad.squaredNorm() * vol;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          acc += vol / 20.0 * (a == b ? 2.0 : 1.0) * u4.col(a).dot(u4.col(b));
    }
    return std::sqrt(acc);
  };

  std::array<std::vector<double>, 3> log_h1;
  std::vector<double> log_r;
  std::array<std::vector<double>, 3> l2_by_eps;
  int clamped_count = 0, clipped_count = 0;
  for (std::size_t i = 0; i < r_list.size(); ++i) {
    const double r = r_list[i];
    const double eps = eps_of_r[i];
    const std::size_t e =
        std::find(distinct_eps.begin(), distinct_eps.end(), eps) - distinct_eps.begin();
    const bool clamped = r / 4.0 < h_max;
    const bool clips = r >= boundary_distance;
    clamped_count += clamped;
    clipped_count += clips;
    std::vector<double> row = {r, eps};
    for (int d = 0; d < 3; ++d) row.push_back(exterior_h1(solutions[e][d], r));
    for (int d = 0; d < 3; ++d) {
      const double l2 = ops->l2_norm(solutions[e][d]);
      row.push_back(l2);
      l2_by_eps[d].push_back(l2);
    }
    row.push_back(clamped ? 1.0 : 0.0);
    row.push_back(clips ? 1.0 : 0.0);
    rep.rows.push_back(row);
    log_r.push_back(std::log(r));
    for (int d = 0; d < 3; ++d) log_h1[d].push_back(std::log(row[2 + d]));
    if (clamped) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "r = %.3g: load radius clamped to h_max = %.3g (under-resolved)",
                    r, h_max);
      rep.notes.push_back(buf);
    }
    if (clips) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "r = %.3g: exclusion ball reaches the boundary (distance %.3g)", r,
                    boundary_distance);
      rep.notes.push_back(buf);
    }
  }

  auto fit_slope = [&](const std::vector<double>& ys) {
    const int n = static_cast<int>(ys.size());
    if (n < 2) return 0.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
      sx += log_r[i];
      sy += ys[i];
      sxx += log_r[i] * log_r[i];
      sxy += log_r[i] * ys[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };

  const char* axis[3] = {"slope_x", "slope_y", "slope_z"};
  double slope_sum = 0.0;
  for (int d = 0; d < 3; ++d) {
    const double s = fit_slope(log_h1[d]);
    rep.set(axis[d], s);
    slope_sum += s;
  }
  double drift = 0.0;
  for (int d = 0; d < 3; ++d) {
    const auto [lo, hi] =
        std::minmax_element(l2_by_eps[d].begin(), l2_by_eps[d].end());
    if (*lo > 0.0) drift = std::max(drift, (*hi - *lo) / *lo);
  }
  rep.set("slope_mean", slope_sum / 3.0);
  rep.set("l2_drift", drift);
  rep.set("h_max", h_max);
  rep.set("boundary_distance", boundary_distance);
  rep.set("num_solves", num_solves);
  rep.set("clamped_radii", clamped_count);
  rep.set("boundary_clipped_radii", clipped_count);
  return rep;
}

ModulusTable modulus_comparison(const ProbeReport& lipschitz_report, double delta,
                                double c_star, int depth) {
  if (depth < 1) throw ConfigError("modulus_comparison: depth must be >= 1");
  if (!(delta > 0.0)) throw ConfigError("modulus_comparison: delta must be positive");
  auto col = [&](const char* name) {
    for (std::size_t i = 0; i < lipschitz_report.columns.size(); ++i)
      if (lipschitz_report.columns[i] == name) return i;
    throw ConfigError(std::string("modulus_comparison: report lacks column '") + name +
                      "'");
  };
  const std::size_t ci_dist = col("distance");
  const std::size_t ci_gap = col("gap");
  const std::size_t ci_skip = col("skipped");

  ModulusTable table;
  table.delta = delta;
  table.depth = depth;
  table.supplied_c_star = c_star;
  for (const auto& row : lipschitz_report.rows) {
    if (row[ci_skip] != 0.0) continue;
    ModulusRow r;
    r.distance = row[ci_dist];
    r.gap = row[ci_gap];
    r.modulus = material::alternating_modulus_iter(r.gap, delta, depth);
    if (!(r.modulus > 0.0))
      throw NumericError("modulus_comparison: modulus vanished on a positive gap");
    r.ratio = r.distance / r.modulus;
    r.pass = r.distance <= c_star * r.modulus;
    table.fitted_c_star = std::max(table.fitted_c_star, r.ratio);
    table.linear_constant = std::max(table.linear_constant, r.distance / r.gap);
    table.rows.push_back(r);
  }
  return table;
}

}  // namespace edtn::probes
