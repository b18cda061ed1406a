#include "edtn/config.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "edtn/errors.hpp"
#include "edtn/hash.hpp"
#include "edtn/io.hpp"

namespace edtn::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::vector<Entry> parse_ini(const std::string& text, const std::string& origin) {
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s[0] == '[') {
      const std::size_t close = s.find(']');
      if (close == std::string::npos) fail("unterminated section header");
      if (close + 1 != s.size()) fail("text after section header");
      section = trim(s.substr(1, close - 1));
      if (section.empty()) fail("empty section name");
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    if (section.empty()) fail("key outside any [section]");
    Entry e;
    e.section = section;
    e.key = trim(s.substr(0, eq));
    e.value = trim(s.substr(eq + 1));
    e.line = line;
    if (e.key.empty()) fail("empty key");
    entries.push_back(std::move(e));
  }
  return entries;
}

namespace {

// Collects field-level problems so a bad config reports everything at once.
struct ErrorList {
  std::string origin;
  std::vector<std::string> messages;

  void add(const Entry& e, const std::string& msg) {
    messages.push_back(origin + ":" + std::to_string(e.line) + ": [" + e.section +
                       "] " + e.key + ": " + msg);
  }
  void add_plain(const std::string& msg) { messages.push_back(origin + ": " + msg); }
  void raise_if_any() const {
    if (messages.empty()) return;
    std::string all = "invalid configuration:";
    for (const auto& m : messages) all += "\n  " + m;
    throw ConfigError(all);
  }
};

bool to_double(const std::string& s, double& out) {
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && !s.empty() &&
         std::isfinite(out);
}

bool to_doubles(const std::string& s, std::vector<double>& out) {
  out.clear();
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) {
    double v;
    if (!to_double(tok, v)) return false;
    out.push_back(v);
  }
  return !out.empty();
}

bool to_int(const std::string& s, int& out) {
  double v;
  if (!to_double(s, v) || v != std::floor(v) || std::abs(v) > 2e9) return false;
  out = static_cast<int>(v);
  return true;
}

bool to_u64(const std::string& s, std::uint64_t& out) {
  // strtoull silently wraps negative input, so reject any sign up front.
  if (s.empty() || !std::isdigit(static_cast<unsigned char>(s[0]))) return false;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size()) return false;
  out = v;
  return true;
}

}  // namespace

material::ParamVector ExperimentConfig::truth() const {
  if (!has_material)
    throw ConfigError("this command needs a [material] section (lambda, mu, rho)");
  const int n = static_cast<int>(lambda.size());
  std::vector<double> entries;
  entries.insert(entries.end(), lambda.begin(), lambda.end());
  entries.insert(entries.end(), mu.begin(), mu.end());
  entries.insert(entries.end(), rho.begin(), rho.end());
  return material::ParamVector(n, std::move(entries));
}

std::uint64_t ExperimentConfig::content_hash() const {
  Fnv1a h;
  h.add_bytes("cfg1", 4);
  h.add(prior.alpha0);
  h.add(prior.beta0);
  h.add(prior.gamma0);
  h.add(prior.lipschitz);
  h.add(prior.regions);
  h.add(mesh.nx);
  h.add(mesh.ny);
  h.add(mesh.nz);
  h.add(static_cast<std::uint64_t>(mesh.blocks.size()));
  for (const auto& b : mesh.blocks) {
    for (double v : b.lo) h.add(v);
    for (double v : b.hi) h.add(v);
  }
  h.add_bytes(mesh.sigma_face.data(), mesh.sigma_face.size());
  h.add(static_cast<std::uint64_t>(has_material));
  for (double v : lambda) h.add(v);
  for (double v : mu) h.add(v);
  for (double v : rho) h.add(v);
  h.add(frequency_fraction);
  h.add(omega_absolute);
  h.add(tol);
  h.add(static_cast<std::uint64_t>(inversion.mode));
  h.add(static_cast<std::uint64_t>(inversion.step_rule));
  h.add(static_cast<std::uint64_t>(inversion.max_iterations));
  h.add(inversion.tol);
  h.add(inversion.grad_tol);
  h.add(inversion.tau_disc);
  h.add(inversion.noise_level);
  h.add(inversion.min_frequency_fraction);
  h.add(inversion.fixed_step);
  h.add_bytes(start.data(), start.size());
  h.add(perturbation);
  h.add(probe.samples);
  h.add(probe.l_samples);
  h.add(probe.h_samples);
  h.add(probe.pairs);
  for (double v : probe.radii) h.add(v);
  for (double v : probe.point) h.add(v);
  for (double v : probe.t_list) h.add(v);
  h.add(probe.delta);
  h.add(probe.c_star);
  h.add(seed);
  return h.value();
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  const std::vector<Entry> entries = parse_ini(text, origin);
  ExperimentConfig cfg;
  ErrorList errors{origin, {}};

  bool saw_fraction = false, saw_omega = false;
  bool saw_lambda = false, saw_mu = false, saw_rho = false;
  cfg.mesh.blocks.clear();

  for (const Entry& e : entries) {
    auto num = [&](double& out) {
      if (!to_double(e.value, out)) errors.add(e, "expected a number");
    };
    auto integer = [&](int& out) {
      if (!to_int(e.value, out)) errors.add(e, "expected an integer");
    };
    auto numbers = [&](std::vector<double>& out) {
      if (!to_doubles(e.value, out)) errors.add(e, "expected numbers");
    };
    if (e.section == "prior") {
      if (e.key == "alpha0") num(cfg.prior.alpha0);
      else if (e.key == "beta0") num(cfg.prior.beta0);
      else if (e.key == "gamma0") num(cfg.prior.gamma0);
      else if (e.key == "lipschitz") num(cfg.prior.lipschitz);
      else errors.add(e, "unknown key");
    } else if (e.section == "mesh") {
      if (e.key == "cells") {
        std::vector<double> v;
        if (!to_doubles(e.value, v) || (v.size() != 1 && v.size() != 3)) {
          errors.add(e, "expected 1 or 3 cell counts");
        } else {
          for (double c : v)
            if (c != std::floor(c) || c < 1 || c > 512) {
              errors.add(e, "cell counts must be integers in [1, 512]");
              v = {1, 1, 1};
              break;
            }
          cfg.mesh.nx = static_cast<int>(v[0]);
          cfg.mesh.ny = static_cast<int>(v.size() == 3 ? v[1] : v[0]);
          cfg.mesh.nz = static_cast<int>(v.size() == 3 ? v[2] : v[0]);
        }
      } else if (e.key == "block") {
        std::vector<double> v;
        if (!to_doubles(e.value, v) || v.size() != 6) {
          errors.add(e, "expected 6 numbers: lo_x lo_y lo_z hi_x hi_y hi_z");
        } else {
          mesh::BlockSpec b;
          b.lo = {v[0], v[1], v[2]};
          b.hi = {v[3], v[4], v[5]};
          cfg.mesh.blocks.push_back(b);
        }
      } else if (e.key == "sigma") {
        static const std::set<std::string> faces = {"x-", "x+", "y-",
                                                    "y+", "z-", "z+"};
        if (!faces.count(e.value))
          errors.add(e, "expected one of x-, x+, y-, y+, z-, z+");
        else
          cfg.mesh.sigma_face = e.value;
      } else {
        errors.add(e, "unknown key");
      }
    } else if (e.section == "material") {
      if (e.key == "lambda") { numbers(cfg.lambda); saw_lambda = true; }
      else if (e.key == "mu") { numbers(cfg.mu); saw_mu = true; }
      else if (e.key == "rho") { numbers(cfg.rho); saw_rho = true; }
      else errors.add(e, "unknown key");
    } else if (e.section == "frequency") {
      if (e.key == "fraction") { num(cfg.frequency_fraction); saw_fraction = true; }
      else if (e.key == "omega") { num(cfg.omega_absolute); saw_omega = true; }
      else errors.add(e, "unknown key");
    } else if (e.section == "solver") {
      if (e.key == "tol") num(cfg.tol);
      else errors.add(e, "unknown key");
    } else if (e.section == "inversion") {
      if (e.key == "mode") {
        try { cfg.inversion.mode = invert::parse_mode(e.value); }
        catch (const Error& ex) { errors.add(e, ex.what()); }
      } else if (e.key == "step_rule") {
        if (e.value == "backtracking") cfg.inversion.step_rule = invert::StepRule::backtracking;
        else if (e.value == "fixed") cfg.inversion.step_rule = invert::StepRule::fixed;
        else errors.add(e, "expected backtracking or fixed");
      } else if (e.key == "max_iterations") integer(cfg.inversion.max_iterations);
      else if (e.key == "grad_tol") num(cfg.inversion.grad_tol);
      else if (e.key == "tau_disc") num(cfg.inversion.tau_disc);
      else if (e.key == "noise") num(cfg.inversion.noise_level);
      else if (e.key == "min_frequency_fraction") num(cfg.inversion.min_frequency_fraction);
      else if (e.key == "fixed_step") num(cfg.inversion.fixed_step);
      else if (e.key == "start") {
        if (e.value == "centroid" || e.value == "perturbed") cfg.start = e.value;
        else errors.add(e, "expected centroid or perturbed");
      } else if (e.key == "perturbation") num(cfg.perturbation);
      else errors.add(e, "unknown key");
    } else if (e.section == "probe") {
      if (e.key == "samples") integer(cfg.probe.samples);
      else if (e.key == "l_samples") integer(cfg.probe.l_samples);
      else if (e.key == "h_samples") integer(cfg.probe.h_samples);
      else if (e.key == "pairs") integer(cfg.probe.pairs);
      else if (e.key == "radii") numbers(cfg.probe.radii);
      else if (e.key == "point") {
        std::vector<double> v;
        if (!to_doubles(e.value, v) || v.size() != 3)
          errors.add(e, "expected 3 coordinates");
        else
          cfg.probe.point = {v[0], v[1], v[2]};
      } else if (e.key == "t_list") numbers(cfg.probe.t_list);
      else if (e.key == "delta") num(cfg.probe.delta);
      else if (e.key == "c_star") num(cfg.probe.c_star);
      else errors.add(e, "unknown key");
    } else if (e.section == "output") {
      if (e.key == "directory") {
        if (e.value.empty()) errors.add(e, "empty directory");
        else cfg.output_dir = e.value;
      } else if (e.key == "seed") {
        if (!to_u64(e.value, cfg.seed)) errors.add(e, "expected an unsigned integer");
      } else if (e.key == "threads") {
        int t = 0;
        if (!to_int(e.value, t) || t < 0) errors.add(e, "expected threads >= 0");
        else cfg.threads = t;
      } else {
        errors.add(e, "unknown key");
      }
    } else {
      errors.add(e, "unknown section");
    }
  }

  if (cfg.mesh.blocks.empty()) cfg.mesh.blocks.push_back(mesh::BlockSpec{});
  cfg.prior.regions = static_cast<int>(cfg.mesh.blocks.size());

  try {
    cfg.prior.validate();
  } catch (const Error& ex) {
    errors.add_plain(std::string("[prior] ") + ex.what());
  }
  if (saw_fraction && saw_omega)
    errors.add_plain("[frequency] give either fraction or omega, not both");
  if (saw_omega && !(cfg.omega_absolute >= 0.0))
    errors.add_plain("[frequency] omega must be >= 0");
  if (!saw_omega) cfg.omega_absolute = -1.0;
  if (!(cfg.frequency_fraction > 0.0 && cfg.frequency_fraction <= 1.0))
    errors.add_plain("[frequency] fraction must lie in (0, 1]");
  if (!(cfg.tol > 0.0 && cfg.tol < 1.0))
    errors.add_plain("[solver] tol must lie in (0, 1)");

  const std::size_t nblocks = cfg.mesh.blocks.size();
  cfg.has_material = saw_lambda || saw_mu || saw_rho;
  if (cfg.has_material) {
    if (!(saw_lambda && saw_mu && saw_rho)) {
      errors.add_plain("[material] needs all of lambda, mu, rho");
    } else if (cfg.lambda.size() != nblocks || cfg.mu.size() != nblocks ||
               cfg.rho.size() != nblocks) {
      errors.add_plain("[material] lambda/mu/rho must each have one entry per block (" +
                       std::to_string(nblocks) + ")");
    } else {
      for (double v : cfg.mu)
        if (!(v > 0.0)) errors.add_plain("[material] mu entries must be positive");
      for (double v : cfg.rho)
        if (!(v >= 0.0)) errors.add_plain("[material] rho entries must be >= 0");
    }
  }

  if (cfg.inversion.max_iterations < 0)
    errors.add_plain("[inversion] max_iterations must be >= 0");
  if (!(cfg.inversion.grad_tol >= 0.0))
    errors.add_plain("[inversion] grad_tol must be >= 0");
  if (!(cfg.inversion.tau_disc >= 1.0))
    errors.add_plain("[inversion] tau_disc must be >= 1");
  if (!(cfg.inversion.noise_level >= 0.0))
    errors.add_plain("[inversion] noise must be >= 0");
  if (!(cfg.inversion.min_frequency_fraction >= 0.0 &&
        cfg.inversion.min_frequency_fraction <= 1.0))
    errors.add_plain("[inversion] min_frequency_fraction must lie in [0, 1]");
  if (!(cfg.inversion.fixed_step >= 0.0))
    errors.add_plain("[inversion] fixed_step must be >= 0");
  if (!(cfg.perturbation > -1.0 && cfg.perturbation < 10.0))
    errors.add_plain("[inversion] perturbation must lie in (-1, 10)");

  if (cfg.probe.samples <= 0) errors.add_plain("[probe] samples must be positive");
  if (cfg.probe.l_samples <= 0) errors.add_plain("[probe] l_samples must be positive");
  if (cfg.probe.h_samples < 0) errors.add_plain("[probe] h_samples must be >= 0");
  if (cfg.probe.pairs <= 0) errors.add_plain("[probe] pairs must be positive");
  for (double r : cfg.probe.radii)
    if (!(r > 0.0)) errors.add_plain("[probe] radii must be positive");
  for (double t : cfg.probe.t_list)
    if (!(t > 0.0)) errors.add_plain("[probe] t_list entries must be positive");
  if (!(cfg.probe.delta > 0.0)) errors.add_plain("[probe] delta must be positive");
  if (!(cfg.probe.c_star > 0.0)) errors.add_plain("[probe] c_star must be positive");

  errors.raise_if_any();
  cfg.inversion.tol = cfg.tol;
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return parse_config(read_file(path), path);
}

}  // namespace edtn::config
