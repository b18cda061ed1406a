#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "edtn/deriv.hpp"
#include "edtn/dtn.hpp"
#include "edtn/errors.hpp"
#include "edtn/fem.hpp"
#include "edtn/material.hpp"
#include "edtn/mesh.hpp"
#include "edtn/probes.hpp"
#include "edtn/rng.hpp"
#include "edtn/solver.hpp"

using namespace edtn;

namespace {

std::shared_ptr<const fem::MeshOperators> cube_ops(int n, int blocks = 1) {
  mesh::BlockMeshSpec s;
  s.nx = s.ny = s.nz = n;
  if (blocks == 1) {
    s.blocks.push_back({{0, 0, 0}, {1, 1, 1}});
  } else {
    s.blocks.push_back({{0, 0, 0}, {1, 1, 0.5}});
    s.blocks.push_back({{0, 0, 0.5}, {1, 1, 1}});
  }
  s.sigma_face = "z-";
  return fem::MeshOperators::build(mesh::build_block_mesh(s));
}

material::PriorData make_prior(int regions) {
  material::PriorData prior;
  prior.regions = regions;
  return prior;
}

// Frequency a fixed fraction below the admissibility cap of the given mesh.
double omega_at(std::shared_ptr<const fem::MeshOperators> ops,
                const material::PriorData& prior, double fraction) {
  const auto eig =
      solver::smallest_dirichlet_eigenvalue(ops, material::reference_tensor(prior), 1e-10);
  REQUIRE(eig.converged);
  return fraction * solver::admissible_frequency_bound(prior, eig.value);
}

bool same_report(const probes::ProbeReport& a, const probes::ProbeReport& b) {
  if (a.probe != b.probe || a.mesh_id != b.mesh_id || a.seed != b.seed) return false;
  if (a.omega != b.omega || a.columns != b.columns || a.notes != b.notes) return false;
  if (a.rows.size() != b.rows.size() || a.summary.size() != b.summary.size())
    return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i)
    if (a.rows[i] != b.rows[i]) return false;
  for (std::size_t i = 0; i < a.summary.size(); ++i)
    if (a.summary[i].first != b.summary[i].first ||
        a.summary[i].second != b.summary[i].second)
      return false;
  return true;
}

int column_index(const probes::ProbeReport& rep, const std::string& name) {
  const auto it = std::find(rep.columns.begin(), rep.columns.end(), name);
  REQUIRE(it != rep.columns.end());
  return static_cast<int>(it - rep.columns.begin());
}

}  // namespace

TEST_CASE("stability-constant probe: finite ratios, consistent summary, determinism") {
  const auto ops = cube_ops(4, 2);
  const auto metric = dtn::BoundaryMetric::build(ops);
  const auto prior = make_prior(2);
  const double omega = omega_at(ops, prior, 0.7);
  const int samples = 6;

  const auto rep = probes::lipschitz_probe(ops, metric, prior, omega, samples, 42, 1e-10);
  CHECK(rep.probe == "lipschitz");
  CHECK(rep.mesh_id == ops->mesh().id());
  CHECK(rep.omega == omega);
  CHECK(rep.seed == 42);
  CHECK(rep.columns ==
        std::vector<std::string>{"sample", "distance", "gap", "ratio", "skipped"});
  REQUIRE(rep.rows.size() == static_cast<std::size_t>(samples));

  const int ci_d = column_index(rep, "distance");
  const int ci_g = column_index(rep, "gap");
  const int ci_r = column_index(rep, "ratio");
  const int ci_s = column_index(rep, "skipped");
  double cmax = 0.0, rmin = std::numeric_limits<double>::infinity(), rsum = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& row = rep.rows[i];
    CHECK(row[0] == double(i));
    CHECK(std::isfinite(row[ci_d]));
    CHECK(std::isfinite(row[ci_g]));
    CHECK(std::isfinite(row[ci_r]));
    CHECK(row[ci_d] > 0.0);
    if (row[ci_s] == 0.0) {
      CHECK(row[ci_g] > 0.0);
      CHECK(row[ci_r] == row[ci_d] / row[ci_g]);
      cmax = std::max(cmax, row[ci_r]);
      rmin = std::min(rmin, row[ci_r]);
      rsum += row[ci_r];
      ++used;
    }
  }
  // Random compact-set pairs at a well-resolved tolerance give usable gaps.
  REQUIRE(used == samples);
  CHECK(rep.value("samples") == samples);
  CHECK(rep.value("used") == used);
  CHECK(rep.value("skipped") == 0);
  CHECK(rep.value("c_emp") == cmax);
  CHECK(rep.value("ratio_min") == rmin);
  CHECK(rep.value("ratio_mean") == rsum / used);
  CHECK(cmax > 0.0);
  CHECK(rep.notes.empty());
  CHECK_THROWS_AS(rep.value("no_such_key"), ConfigError);

  const auto rerun =
      probes::lipschitz_probe(ops, metric, prior, omega, samples, 42, 1e-10);
  CHECK(same_report(rep, rerun));
  const auto other =
      probes::lipschitz_probe(ops, metric, prior, omega, samples, 43, 1e-10);
  CHECK_FALSE(same_report(rep, other));
}

TEST_CASE("stability-constant probe: gaps below the solver floor are skipped, not divided") {
  const auto ops = cube_ops(2, 1);
  const auto metric = dtn::BoundaryMetric::build(ops);
  const auto prior = make_prior(1);
  const int samples = 4;

  // A near-unit solver tolerance pushes the floor 10*tol*||F|| far above any data
  // gap, so every pair must be skipped and the constant left unset.
  const auto rep =
      probes::lipschitz_probe(ops, metric, prior, 1.0, samples, 7, 0.9);
  REQUIRE(rep.rows.size() == static_cast<std::size_t>(samples));
  const int ci_r = column_index(rep, "ratio");
  const int ci_s = column_index(rep, "skipped");
  for (const auto& row : rep.rows) {
    CHECK(row[ci_s] == 1.0);
    CHECK(row[ci_r] == 0.0);
  }
  CHECK(rep.value("used") == 0);
  CHECK(rep.value("skipped") == samples);
  CHECK(rep.value("c_emp") == 0.0);
  CHECK(rep.value("ratio_min") == 0.0);
  CHECK(rep.value("ratio_mean") == 0.0);
  REQUIRE(rep.notes.size() == static_cast<std::size_t>(samples) + 1);
  CHECK(rep.notes.back() == "all pairs below the solver floor; c_emp unset");
  for (int i = 0; i < samples; ++i)
    CHECK(rep.notes[i].find("below solver floor") != std::string::npos);
}

TEST_CASE("stability-constant probe rejects a nonpositive sample count") {
  const auto ops = cube_ops(2, 1);
  const auto metric = dtn::BoundaryMetric::build(ops);
  const auto prior = make_prior(1);
  CHECK_THROWS_AS(probes::lipschitz_probe(ops, metric, prior, 1.0, 0, 1, 1e-8),
                  ConfigError);
  CHECK_THROWS_AS(probes::lipschitz_probe(ops, metric, prior, 1.0, -3, 1, 1e-8),
                  ConfigError);
}

TEST_CASE("injectivity-margin probe reports a positive margin inside the regime") {
  const auto ops = cube_ops(4, 1);
  const auto metric = dtn::BoundaryMetric::build(ops);
  const auto prior = make_prior(1);
  const double omega = omega_at(ops, prior, 0.7);
  const double tol = 1e-10;
  const int l_samples = 3, h_samples = 40;

  const auto rep =
      probes::q0_probe(ops, metric, prior, omega, l_samples, h_samples, 11, tol);
  CHECK(rep.probe == "q0");
  CHECK(rep.columns ==
        std::vector<std::string>{"sample", "q0_sample", "vertex_min", "axis_min",
                                 "random_min", "polished_min", "lower_surrogate"});
  REQUIRE(rep.rows.size() == static_cast<std::size_t>(l_samples));

  const int ci_q = column_index(rep, "q0_sample");
  const int ci_v = column_index(rep, "vertex_min");
  const int ci_a = column_index(rep, "axis_min");
  const int ci_rand = column_index(rep, "random_min");
  const int ci_p = column_index(rep, "polished_min");
  const int ci_low = column_index(rep, "lower_surrogate");
  double qmin = std::numeric_limits<double>::infinity();
  double lowmin = std::numeric_limits<double>::infinity();
  for (const auto& row : rep.rows) {
    CHECK(row[ci_q] > 0.0);
    // The per-sample value is the min over every candidate family...
    CHECK(row[ci_q] <= row[ci_v]);
    CHECK(row[ci_q] <= row[ci_a]);
    CHECK(row[ci_q] <= row[ci_rand]);
    CHECK(row[ci_q] <= row[ci_p]);
    // ...and can never undercut the rank-based lower bound.
    CHECK(row[ci_q] >= row[ci_low] * (1.0 - 1e-9));
    qmin = std::min(qmin, row[ci_q]);
    lowmin = std::min(lowmin, row[ci_low]);
  }
  CHECK(rep.value("q0_emp") == qmin);
  CHECK(rep.value("lower_bound_surrogate") == lowmin);
  CHECK(rep.value("max_axis_norm") > 0.0);
  CHECK(rep.value("degenerate") == 0.0);
  CHECK(rep.value("l_samples") == l_samples);
  CHECK(rep.value("h_samples") == h_samples);
  CHECK(rep.notes.empty());

  // Out-of-sample floor: fresh parameter/direction draws never fall below the
  // reported margin by more than scan slack.
  const double q0 = rep.value("q0_emp");
  material::ConstraintSet set(prior, material::SetKind::compact);
  Rng rng(99);
  for (int s = 0; s < 20; ++s) {
    const material::ParamVector l = set.sample(rng);
    const auto fam = dtn::solution_family(ops, l, omega, tol);
    const auto jac = deriv::df_jacobian_from_family(*ops, fam.u, l, omega);
    for (int t = 0; t < 5; ++t) {
      Eigen::Vector3d h;
      for (int k = 0; k < 3; ++k) h(k) = rng.gaussian();
      h /= h.lpNorm<Eigen::Infinity>();
      Eigen::MatrixXd m = h(0) * jac.blocks[0];
      for (int k = 1; k < 3; ++k) m += h(k) * jac.blocks[k];
      CHECK(metric.star_norm(m) >= 0.90 * q0);
    }
  }

  const auto rerun =
      probes::q0_probe(ops, metric, prior, omega, l_samples, h_samples, 11, tol);
  CHECK(same_report(rep, rerun));
}

TEST_CASE("injectivity-margin probe flags the zero-frequency degeneracy") {
  const auto ops = cube_ops(4, 1);
  const auto metric = dtn::BoundaryMetric::build(ops);
  const auto prior = make_prior(1);

  const auto rep = probes::q0_probe(ops, metric, prior, 0.0, 2, 20, 5, 1e-10);
  // The density derivative vanishes at omega = 0, so the minimum over the unit
  // sphere is exactly zero along the density axis.
  CHECK(rep.value("q0_emp") == 0.0);
  CHECK(rep.value("degenerate") == 1.0);
  CHECK(rep.value("max_axis_norm") > 0.0);
  REQUIRE(!rep.notes.empty());
  CHECK(rep.notes.front().find("density blocks vanish at omega = 0") !=
        std::string::npos);
}

TEST_CASE("restricting the direction scan to frozen-density coordinates restores a margin") {
  const auto ops = cube_ops(4, 1);
  const auto metric = dtn::BoundaryMetric::build(ops);
  const auto prior = make_prior(1);
  material::ConstraintSet set(prior, material::SetKind::compact);
  const double tol = 1e-10;

  Rng rng(3);
  const material::ParamVector l = set.sample(rng);

  SUBCASE("at omega = 0 the full margin vanishes but the Lame-only margin does not") {
    const auto fam = dtn::solution_family(ops, l, 0.0, tol);
    const auto jac = deriv::df_jacobian_from_family(*ops, fam.u, l, 0.0);
    std::vector<Eigen::MatrixXd> wb(3);
    double scale = 0.0;
    for (int k = 0; k < 3; ++k) {
      wb[k] = metric.whiten(jac.blocks[k]);
      scale = std::max(scale, wb[k].cwiseAbs().maxCoeff());
    }
    Rng scan_rng(17);
    const double full = probes::min_directional_norm(wb, {0, 1, 2}, 60, scan_rng);
    Rng scan_rng2(17);
    const double lame = probes::min_directional_norm(wb, {0, 1}, 60, scan_rng2);
    CHECK(full == 0.0);
    CHECK(lame > 1e-6 * scale);
  }

  SUBCASE("the restricted margin dominates the full margin at positive frequency") {
    const double omega = omega_at(ops, prior, 0.7);
    const auto fam = dtn::solution_family(ops, l, omega, tol);
    const auto jac = deriv::df_jacobian_from_family(*ops, fam.u, l, omega);
    std::vector<Eigen::MatrixXd> wb(3);
    for (int k = 0; k < 3; ++k) wb[k] = metric.whiten(jac.blocks[k]);
    Rng scan_rng(17);
    const double full = probes::min_directional_norm(wb, {0, 1, 2}, 60, scan_rng);
    Rng scan_rng2(17);
    const double lame = probes::min_directional_norm(wb, {0, 1}, 60, scan_rng2);
    CHECK(full > 0.0);
    // The restricted sphere is a subset of the full one; allow polish slack.
    CHECK(lame >= 0.95 * full);
  }
}

TEST_CASE("injectivity-margin probe rejects bad sample counts") {
  const auto ops = cube_ops(2, 1);
  const auto metric = dtn::BoundaryMetric::build(ops);
  const auto prior = make_prior(1);
  CHECK_THROWS_AS(probes::q0_probe(ops, metric, prior, 1.0, 0, 10, 1, 1e-8),
                  ConfigError);
  CHECK_THROWS_AS(probes::q0_probe(ops, metric, prior, 1.0, 2, -1, 1, 1e-8),
                  ConfigError);
}

TEST_CASE("singular-load probe: exterior energy grows toward the source") {
  const auto ops = cube_ops(12, 1);
  material::ParamVector l(1);
  l.lambda(0) = 0.8;
  l.mu(0) = 1.0;
  l.rho(0) = 1.0;
  const std::array<double, 3> y = {0.5, 0.5, 0.5};
  const std::vector<double> r_list = {0.12, 0.2, 0.33};

  const auto rep = probes::greens_blowup_probe(ops, l, 0.9, y, r_list, 1e-9);
  CHECK(rep.probe == "greens");
  CHECK(rep.columns ==
        std::vector<std::string>{"r", "eps", "h1_ext_x", "h1_ext_y", "h1_ext_z", "l2_x",
                                 "l2_y", "l2_z", "clamped", "clips_boundary"});
  REQUIRE(rep.rows.size() == r_list.size());

  const double h_max = mesh::mesh_quality(ops->mesh()).h_max;
  CHECK(rep.value("h_max") == h_max);
  CHECK(rep.value("boundary_distance") == doctest::Approx(0.5).epsilon(1e-12));
  // All three radii share the clamped regularization width h_max, so one solve
  // per direction serves every row.
  CHECK(rep.value("num_solves") == 3);
  CHECK(rep.value("clamped_radii") == 3);
  CHECK(rep.value("boundary_clipped_radii") == 0);
  CHECK(rep.notes.size() == 3);
  for (const auto& note : rep.notes)
    CHECK(note.find("under-resolved") != std::string::npos);

  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& row = rep.rows[i];
    CHECK(row[0] == r_list[i]);
    CHECK(row[1] == h_max);
    for (int c = 2; c < 8; ++c) {
      CHECK(std::isfinite(row[c]));
      CHECK(row[c] > 0.0);
    }
    CHECK(row[8] == 1.0);
    CHECK(row[9] == 0.0);
  }
  // Exterior H1 norm strictly decreases as the excluded ball grows.
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    for (int d = 0; d < 3; ++d)
      CHECK(rep.rows[i][2 + d] < rep.rows[i - 1][2 + d]);
  CHECK(rep.value("slope_mean") < 0.0);
  // A single load family means the full-domain L2 norm cannot drift at all.
  CHECK(rep.value("l2_drift") == 0.0);

  const auto rerun = probes::greens_blowup_probe(ops, l, 0.9, y, r_list, 1e-9);
  CHECK(same_report(rep, rerun));
}

TEST_CASE("singular-load probe: duplicate radii reuse solves, boundary contact is flagged") {
  const auto ops = cube_ops(4, 1);
  material::ParamVector l(1);
  l.lambda(0) = 0.8;
  l.mu(0) = 1.0;
  l.rho(0) = 1.0;
  const std::array<double, 3> y = {0.5, 0.5, 0.5};

  const auto rep =
      probes::greens_blowup_probe(ops, l, 0.9, y, {0.3, 0.45, 0.6, 0.3}, 1e-9);
  REQUIRE(rep.rows.size() == 4);
  CHECK(rep.value("num_solves") == 3);
  CHECK(rep.value("boundary_clipped_radii") == 1);
  CHECK(rep.rows[2][9] == 1.0);  // r = 0.6 reaches past the boundary at 0.5
  CHECK(rep.rows[0] == rep.rows[3]);
  bool clipped_note = false;
  for (const auto& note : rep.notes)
    clipped_note |= note.find("reaches the boundary") != std::string::npos;
  CHECK(clipped_note);
}

TEST_CASE("singular-load probe rejects degenerate geometry and radii") {
  const auto ops = cube_ops(4, 1);
  material::ParamVector l(1);
  l.lambda(0) = 0.8;
  l.mu(0) = 1.0;
  l.rho(0) = 1.0;
  const std::array<double, 3> y = {0.5, 0.5, 0.5};

  CHECK_THROWS_AS(probes::greens_blowup_probe(ops, l, 0.9, y, {}, 1e-9), ConfigError);
  CHECK_THROWS_AS(probes::greens_blowup_probe(ops, l, 0.9, y, {0.2, -0.1}, 1e-9),
                  ConfigError);
  CHECK_THROWS_AS(probes::greens_blowup_probe(ops, l, 0.9, y, {0.0}, 1e-9), ConfigError);
  // A radius below the element scale excludes nothing, so the fit is meaningless.
  CHECK_THROWS_AS(probes::greens_blowup_probe(ops, l, 0.9, y, {1e-4}, 1e-9),
                  GeometryError);
  // A source far outside the mesh has no vertex inside the load support.
  CHECK_THROWS_AS(
      probes::greens_blowup_probe(ops, l, 0.9, {5.0, 5.0, 5.0}, {10.0}, 1e-9),
      GeometryError);
}

TEST_CASE("modulus comparison reproduces the iterated modulus row by row") {
  const auto ops = cube_ops(4, 2);
  const auto metric = dtn::BoundaryMetric::build(ops);
  const auto prior = make_prior(2);
  const double omega = omega_at(ops, prior, 0.7);
  const auto rep = probes::lipschitz_probe(ops, metric, prior, omega, 8, 21, 1e-10);
  REQUIRE(rep.value("used") == 8);

  const double delta = 0.25;
  const int depth = 2;
  const auto table = probes::modulus_comparison(rep, delta, 1.0, depth);
  CHECK(table.delta == delta);
  CHECK(table.depth == depth);
  CHECK(table.supplied_c_star == 1.0);
  REQUIRE(table.rows.size() == 8);

  const int ci_d = column_index(rep, "distance");
  const int ci_g = column_index(rep, "gap");
  double fitted = 0.0, linear = 0.0;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    CHECK(r.distance == rep.rows[i][ci_d]);
    CHECK(r.gap == rep.rows[i][ci_g]);
    CHECK(r.modulus == material::alternating_modulus_iter(r.gap, delta, depth));
    CHECK(r.modulus ==
          material::alternating_modulus(material::alternating_modulus(r.gap, delta),
                                        delta));
    CHECK(r.modulus > 0.0);
    CHECK(r.ratio == r.distance / r.modulus);
    CHECK(r.pass == (r.distance <= 1.0 * r.modulus));
    fitted = std::max(fitted, r.ratio);
    linear = std::max(linear, r.distance / r.gap);
  }
  CHECK(table.fitted_c_star == fitted);
  CHECK(table.linear_constant == linear);

  // The fitted constant is minimal: nudged up everything passes, nudged down
  // at least the extremal row fails.
  const auto pass_all =
      probes::modulus_comparison(rep, delta, fitted * (1.0 + 1e-12), depth);
  for (const auto& r : pass_all.rows) CHECK(r.pass);
  const auto fail_some = probes::modulus_comparison(rep, delta, 0.99 * fitted, depth);
  int failures = 0;
  for (const auto& r : fail_some.rows) failures += r.pass ? 0 : 1;
  CHECK(failures >= 1);
}

TEST_CASE("modulus comparison skips flagged rows and validates its inputs") {
  probes::ProbeReport rep;
  rep.probe = "lipschitz";
  rep.columns = {"sample", "distance", "gap", "ratio", "skipped"};
  rep.rows = {
      {0, 1.0, 0.5, 2.0, 0.0},
      {1, 2.0, 0.25, 8.0, 0.0},
      {2, 0.3, 1e-9, 0.0, 1.0},  // skipped: must not contribute
  };

  const auto table = probes::modulus_comparison(rep, 0.5, 10.0, 1);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].gap == 0.5);
  CHECK(table.rows[1].gap == 0.25);
  CHECK(table.linear_constant == 8.0);
  CHECK(table.rows[0].modulus == material::alternating_modulus(0.5, 0.5));
  CHECK(table.rows[1].modulus == material::alternating_modulus(0.25, 0.5));

  CHECK_THROWS_AS(probes::modulus_comparison(rep, 0.5, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(probes::modulus_comparison(rep, 0.0, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(probes::modulus_comparison(rep, -0.1, 1.0, 1), ConfigError);

  probes::ProbeReport missing = rep;
  missing.columns = {"sample", "distance", "ratio", "skipped"};
  for (auto& row : missing.rows) row.erase(row.begin() + 2);
  CHECK_THROWS_AS(probes::modulus_comparison(missing, 0.5, 1.0, 1), ConfigError);

  // A positive but denormal gap underflows the logarithmic modulus to zero at a
  // small delta; dividing through would fabricate an infinite constant.
  probes::ProbeReport tiny;
  tiny.columns = {"distance", "gap", "skipped"};
  tiny.rows = {{1.0, std::numeric_limits<double>::denorm_min(), 0.0}};
  CHECK_THROWS_AS(probes::modulus_comparison(tiny, 1e-5, 1.0, 1), NumericError);
}
