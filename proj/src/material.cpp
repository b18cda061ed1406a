#include "edtn/material.hpp"

#include <cmath>
#include <string>

#include "edtn/errors.hpp"
#include "edtn/hash.hpp"

namespace edtn::material {

Eigen::Matrix3d apply_tensor(const IsotropicTensor& c, const Eigen::Matrix3d& a) {
  Eigen::Matrix3d s = 0.5 * (a + a.transpose());
  return c.lambda * s.trace() * Eigen::Matrix3d::Identity() + 2.0 * c.mu * s;
}

double tensor_contract(const IsotropicTensor& c, const Eigen::Matrix3d& a,
                       const Eigen::Matrix3d& b) {
  Eigen::Matrix3d sb = 0.5 * (b + b.transpose());
  return apply_tensor(c, a).cwiseProduct(sb).sum();
}

void PriorData::validate() const {
  auto fail = [](const std::string& field, const std::string& range) {
    throw ConfigError("prior." + field + " out of range, expected " + range);
  };
  if (!(alpha0 > 0.0 && alpha0 < 1.0)) fail("alpha0", "(0, 1)");
  if (!(beta0 > 0.0 && beta0 < 2.0)) fail("beta0", "(0, 2)");
  if (!(gamma0 > 0.0 && gamma0 < 1.0)) fail("gamma0", "(0, 1)");
  if (!(lipschitz >= 1.0)) fail("lipschitz", ">= 1");
  if (!(volume > 0.0)) fail("volume", "> 0");
  if (regions < 1) fail("regions", ">= 1");
}

IsotropicTensor reference_tensor(const PriorData& prior) {
  return {(prior.beta0 - 3.0 * prior.alpha0) / 2.0, prior.alpha0};
}

ParamVector::ParamVector(int regions, std::vector<double> entries)
    : n_(regions), v_(std::move(entries)) {
  if (static_cast<int>(v_.size()) != 3 * n_)
    throw DimensionError("ParamVector: entry count != 3 * regions");
}

double ParamVector::sup_norm() const {
  double m = 0.0;
  for (int j = 0; j < n_; ++j) {
    m = std::max(m, std::abs(lambda(j)));
    m = std::max(m, mu(j));
    m = std::max(m, std::abs(rho(j)));
  }
  return m;
}

std::uint64_t ParamVector::content_hash() const {
  Fnv1a h;
  h.add(n_);
  h.add(std::span<const double>(v_));
  return h.value();
}

double inf_distance(const ParamVector& a, const ParamVector& b) {
  if (a.regions() != b.regions())
    throw DimensionError("inf_distance: region counts differ");
  double m = 0.0;
  for (int k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

ParamVector operator+(const ParamVector& a, const ParamVector& b) {
  if (a.regions() != b.regions()) throw DimensionError("ParamVector +: size mismatch");
  ParamVector r(a.regions());
  for (int k = 0; k < a.size(); ++k) r[k] = a[k] + b[k];
  return r;
}

ParamVector operator-(const ParamVector& a, const ParamVector& b) {
  if (a.regions() != b.regions()) throw DimensionError("ParamVector -: size mismatch");
  ParamVector r(a.regions());
  for (int k = 0; k < a.size(); ++k) r[k] = a[k] - b[k];
  return r;
}

ParamVector operator*(double s, const ParamVector& a) {
  ParamVector r(a.regions());
  for (int k = 0; k < a.size(); ++k) r[k] = s * a[k];
  return r;
}

ConstraintSet::ConstraintSet(const PriorData& prior, SetKind kind)
    : prior_(prior), kind_(kind) {
  prior_.validate();
}

bool ConstraintSet::contains(const ParamVector& l) const {
  if (l.regions() != prior_.regions) return false;
  const double a0 = prior_.alpha0, b0 = prior_.beta0, g0 = prior_.gamma0;
  for (int j = 0; j < l.regions(); ++j) {
    const double lam = l.lambda(j), mu = l.mu(j), rho = l.rho(j);
    if (kind_ == SetKind::compact) {
      if (!(mu >= a0 && mu <= 1.0 / a0)) return false;
      if (!(lam <= 1.0 / a0)) return false;
      if (!(2.0 * mu + 3.0 * lam >= b0)) return false;
      if (!(rho >= 0.0 && rho <= 1.0 / g0)) return false;
    } else {
      if (!(mu > a0 / 2.0 && mu < 2.0 / a0)) return false;
      if (!(lam < 2.0 / a0)) return false;
      if (!(2.0 * mu + 3.0 * lam > b0 / 2.0)) return false;
      if (!(rho > g0 / 2.0 && rho < 2.0 / g0)) return false;
    }
  }
  return true;
}

namespace {

struct Point2 {
  double x, y;
};

// Closest point on segment [p, q].
Point2 project_segment(Point2 v, Point2 p, Point2 q) {
  const double dx = q.x - p.x, dy = q.y - p.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((v.x - p.x) * dx + (v.y - p.y) * dy) / len2 : 0.0;
  t = std::min(1.0, std::max(0.0, t));
  return {p.x + t * dx, p.y + t * dy};
}

double dist2(Point2 a, Point2 b) {
  return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
}

// Polygon vertices of {mu in [a0, 1/a0], lambda <= 1/a0, 3 lambda + 2 mu >= b0},
// counterclockwise in the (lambda, mu) plane.
void polygon_vertices(double a0, double b0, Point2 out[4]) {
  out[0] = {(b0 - 2.0 * a0) / 3.0, a0};
  out[1] = {1.0 / a0, a0};
  out[2] = {1.0 / a0, 1.0 / a0};
  out[3] = {(b0 - 2.0 / a0) / 3.0, 1.0 / a0};
}

}  // namespace

ParamVector ConstraintSet::project(const ParamVector& l) const {
  if (kind_ != SetKind::compact)
    throw ConfigError("projection is defined on the compact constraint set only");
  if (l.regions() != prior_.regions)
    throw DimensionError("project: region count does not match prior");
  const double a0 = prior_.alpha0, b0 = prior_.beta0, g0 = prior_.gamma0;
  Point2 poly[4];
  polygon_vertices(a0, b0, poly);
  ParamVector r = l;
  for (int j = 0; j < l.regions(); ++j) {
    r.rho(j) = std::min(1.0 / g0, std::max(0.0, l.rho(j)));
    Point2 v{l.lambda(j), l.mu(j)};
    const bool inside = v.y >= a0 && v.y <= 1.0 / a0 && v.x <= 1.0 / a0 &&
                        3.0 * v.x + 2.0 * v.y >= b0;
    if (inside) continue;
    Point2 best = project_segment(v, poly[0], poly[1]);
    double bd = dist2(v, best);
    for (int e = 1; e < 4; ++e) {
      Point2 c = project_segment(v, poly[e], poly[(e + 1) % 4]);
      double d = dist2(v, c);
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    // Snap rounding-level violations so the result satisfies contains() exactly;
    // downstream iterations assert membership of every projected point.
    best.y = std::min(1.0 / a0, std::max(a0, best.y));
    best.x = std::min(1.0 / a0, best.x);
    if (3.0 * best.x + 2.0 * best.y < b0) best.x = (b0 - 2.0 * best.y) / 3.0;
    r.lambda(j) = best.x;
    r.mu(j) = best.y;
  }
  return r;
}

ParamVector ConstraintSet::centroid() const {
  const double a0 = prior_.alpha0, g0 = prior_.gamma0;
  Point2 poly[4];
  polygon_vertices(a0, prior_.beta0, poly);
  double cx = 0.0, cy = 0.0;
  for (const auto& p : poly) {
    cx += 0.25 * p.x;
    cy += 0.25 * p.y;
  }
  ParamVector r(prior_.regions);
  for (int j = 0; j < prior_.regions; ++j) {
    r.lambda(j) = cx;
    r.mu(j) = cy;
    r.rho(j) = 0.5 / g0;
  }
  return r;
}

ParamVector ConstraintSet::sample(Rng& rng) const {
  const double a0 = prior_.alpha0, b0 = prior_.beta0, g0 = prior_.gamma0;
  const double lam_lo = (b0 - 2.0 / a0) / 3.0;
  ParamVector r(prior_.regions);
  for (int j = 0; j < prior_.regions; ++j) {
    double lam, mu;
    do {
      lam = rng.uniform(lam_lo, 1.0 / a0);
      mu = rng.uniform(a0, 1.0 / a0);
    } while (3.0 * lam + 2.0 * mu < b0);
    r.lambda(j) = lam;
    r.mu(j) = mu;
    r.rho(j) = rng.uniform(0.0, 1.0 / g0);
  }
  return r;
}

double continuity_modulus(double t, double delta) {
  if (!(delta > 0.0)) throw ConfigError("modulus: delta must be positive");
  if (t < 0.0) throw NumericError("modulus: negative argument");
  constexpr double inv_e = 0.36787944117144233;
  if (t == 0.0) return 0.0;
  if (t < inv_e) return std::pow(-std::log(t), -1.0 / (8.0 * delta));
  return t - inv_e + 1.0;
}

double alternating_modulus(double t, double delta) {
  return std::pow(continuity_modulus(t, delta), 0.2);
}

double alternating_modulus_iter(double t, double delta, int n) {
  if (n < 0) throw ConfigError("modulus iteration count must be >= 0");
  double x = t;
  for (int i = 0; i < n; ++i) x = alternating_modulus(x, delta);
  return x;
}

}  // namespace edtn::material
