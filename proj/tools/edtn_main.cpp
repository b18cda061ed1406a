#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <thread>
#include <vector>

#include "edtn/config.hpp"
#include "edtn/deriv.hpp"
#include "edtn/dtn.hpp"
#include "edtn/errors.hpp"
#include "edtn/fem.hpp"
#include "edtn/hash.hpp"
#include "edtn/invert.hpp"
#include "edtn/io.hpp"
#include "edtn/kernels.hpp"
#include "edtn/material.hpp"
#include "edtn/mesh.hpp"
#include "edtn/parallel.hpp"
#include "edtn/probes.hpp"
#include "edtn/rng.hpp"
#include "edtn/solver.hpp"
#include "edtn/version.hpp"

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace edtn;

struct Flags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;
  double tol = 0.0;
  bool tol_set = false;
};

// Mesh plus assembled unit-coefficient operators, shared by every command.
struct Workspace {
  config::ExperimentConfig cfg;
  mesh::PartitionedMesh mesh;
  std::shared_ptr<const fem::MeshOperators> ops;
};

Workspace make_workspace(config::ExperimentConfig cfg) {
  Workspace w;
  w.cfg = std::move(cfg);
  w.mesh = mesh::build_block_mesh(w.cfg.mesh);
  w.ops = fem::MeshOperators::build(w.mesh);
  return w;
}

struct Frequency {
  double omega = 0.0;
  double omega_max = -1.0;  // < 0 when the eigenvalue solve was skipped
  double lambda1 = 0.0;
  solver::EigReport eig;
  bool eig_ran = false;
};

// Frequencies given as a fraction of omega_max need the reference eigenvalue; an
// absolute frequency skips that solve unless the caller needs omega_max anyway.
Frequency resolve_frequency(const Workspace& w, bool need_omega_max) {
  Frequency f;
  if (w.cfg.omega_absolute >= 0.0 && !need_omega_max) {
    f.omega = w.cfg.omega_absolute;
    return f;
  }
  const material::IsotropicTensor c0 = material::reference_tensor(w.cfg.prior);
  f.eig = solver::smallest_dirichlet_eigenvalue(w.ops, c0, w.cfg.tol);
  f.eig_ran = true;
  f.lambda1 = f.eig.value;
  f.omega_max = solver::admissible_frequency_bound(w.cfg.prior, f.lambda1);
  f.omega = w.cfg.omega_absolute >= 0.0 ? w.cfg.omega_absolute
                                        : w.cfg.frequency_fraction * f.omega_max;
  return f;
}

json report_header(const config::ExperimentConfig& cfg, const std::string& command) {
  json j;
  j["toolkit_version"] = toolkit_version;
  j["config_hash"] = hash_hex(cfg.content_hash());
  j["command"] = command;
  return j;
}

void write_json(const fs::path& path, const json& j) {
  atomic_write(path.string(), j.dump(2) + "\n");
}

std::string csv_text(const std::vector<std::string>& columns,
                     const std::vector<std::vector<double>>& rows) {
  std::string s;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) s += ',';
    s += columns[i];
  }
  s += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s += ',';
      s += format_double(row[i]);
    }
    s += '\n';
  }
  return s;
}

json params_json(const material::ParamVector& l) {
  json j;
  std::vector<double> lam, mu, rho;
  for (int k = 0; k < l.regions(); ++k) {
    lam.push_back(l.lambda(k));
    mu.push_back(l.mu(k));
    rho.push_back(l.rho(k));
  }
  j["lambda"] = lam;
  j["mu"] = mu;
  j["rho"] = rho;
  return j;
}

void add_frequency(json& j, const Frequency& f) {
  j["omega"] = f.omega;
  if (f.eig_ran) {
    j["omega_max"] = f.omega_max;
    j["lambda1"] = f.lambda1;
  }
}

int cmd_mesh(const Workspace& w, const fs::path& out) {
  mesh::save_mesh(w.mesh, (out / "mesh.emesh").string());
  const mesh::PartitionReport rep = mesh::validate_partition(w.mesh);
  json j = report_header(w.cfg, "mesh");
  j["mesh"] = {{"id", w.mesh.id()},
               {"vertices", w.mesh.vertices.size()},
               {"tets", w.mesh.tets.size()},
               {"boundary_faces", w.mesh.faces.size()},
               {"regions", w.mesh.num_regions}};
  j["quality"] = {{"h_max", rep.quality.h_max},
                  {"shape_min", rep.quality.shape_min},
                  {"total_volume", rep.quality.total_volume},
                  {"region_volume", rep.quality.region_volume}};
  j["partition"] = {{"valid", rep.valid},
                    {"chain_depth", rep.chain_depth},
                    {"violations", rep.violations}};
  j["files"] = {{"mesh", "mesh.emesh"}};
  write_json(out / "mesh.json", j);
  return 0;
}

int cmd_eig(const Workspace& w, const fs::path& out) {
  const material::IsotropicTensor c0 = material::reference_tensor(w.cfg.prior);
  const solver::EigReport eig =
      solver::smallest_dirichlet_eigenvalue(w.ops, c0, w.cfg.tol);
  json j = report_header(w.cfg, "eig");
  j["mesh_id"] = w.mesh.id();
  j["reference_tensor"] = {{"lambda", c0.lambda}, {"mu", c0.mu}};
  j["lambda1"] = eig.value;
  j["iterations"] = eig.iterations;
  j["residual"] = eig.residual;
  j["converged"] = eig.converged;
  j["omega_max"] = solver::admissible_frequency_bound(w.cfg.prior, eig.value);
  j["tol"] = w.cfg.tol;
  write_json(out / "eig.json", j);
  return 0;
}

int cmd_forward(const Workspace& w, const fs::path& out) {
  const material::ParamVector l = w.cfg.truth();
  const Frequency f = resolve_frequency(w, false);
  const dtn::DtnOperator d = dtn::assemble_dtn(w.ops, l, f.omega, w.cfg.tol);
  json j = report_header(w.cfg, "forward");
  j["mesh_id"] = w.mesh.id();
  add_frequency(j, f);
  j["tol"] = w.cfg.tol;
  j["dim"] = d.lambda.rows();
  j["params"] = params_json(l);
  j["asymmetry"] = d.asymmetry;
  j["pcg_iterations"] = d.total_pcg_iterations;
  std::vector<std::int32_t> sigma(w.ops->dofs().sigma_dofs.begin(),
                                  w.ops->dofs().sigma_dofs.end());
  j["sigma_dofs"] = sigma;
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(d.lambda.size()));
  for (Eigen::Index r = 0; r < d.lambda.rows(); ++r)
    for (Eigen::Index c = 0; c < d.lambda.cols(); ++c) flat.push_back(d.lambda(r, c));
  j["lambda"] = flat;
  write_json(out / "dtn.json", j);
  return 0;
}

// Start for the inversion: either the constraint-set centroid or the truth shifted
// by the configured relative perturbation on the active coordinates (frozen
// coordinates keep their true values, which landweber preserves bit-for-bit).
material::ParamVector initial_guess(const config::ExperimentConfig& cfg,
                                    const material::ParamVector& truth,
                                    const material::ConstraintSet& set) {
  if (cfg.start == "centroid") {
    material::ParamVector l0 = set.centroid();
    const int n = truth.regions();
    if (cfg.inversion.mode == invert::Mode::s1)
      for (int k = 0; k < n; ++k) l0[2 * n + k] = truth[2 * n + k];
    if (cfg.inversion.mode == invert::Mode::s2)
      for (int k = 0; k < 2 * n; ++k) l0[k] = truth[k];
    return l0;
  }
  material::ParamVector l0 = truth;
  const int n = truth.regions();
  for (int k = 0; k < 3 * n; ++k) {
    const bool frozen = (cfg.inversion.mode == invert::Mode::s1 && k >= 2 * n) ||
                        (cfg.inversion.mode == invert::Mode::s2 && k < 2 * n);
    if (!frozen) l0[k] = truth[k] * (1.0 + cfg.perturbation);
  }
  material::ParamVector projected = set.project(l0);
  for (int k = 0; k < 3 * n; ++k) {
    const bool frozen = (cfg.inversion.mode == invert::Mode::s1 && k >= 2 * n) ||
                        (cfg.inversion.mode == invert::Mode::s2 && k < 2 * n);
    if (frozen) projected[k] = truth[k];
  }
  return projected;
}

int cmd_invert(const Workspace& w, const fs::path& out) {
  const material::ParamVector truth = w.cfg.truth();
  const Frequency f = resolve_frequency(w, true);
  const dtn::BoundaryMetric metric = dtn::BoundaryMetric::build(w.ops);
  const material::ConstraintSet set(w.cfg.prior, material::SetKind::compact);

  const invert::SynthesizedData data =
      invert::synthesize_data(w.ops, metric, truth, f.omega, w.cfg.tol,
                              w.cfg.inversion.noise_level, w.cfg.seed);
  const material::ParamVector l0 = initial_guess(w.cfg, truth, set);
  const invert::InversionResult res = invert::landweber(
      w.ops, metric, data.lambda, f.omega, f.omega_max, l0, set, w.cfg.inversion);

  const double err = material::inf_distance(res.params, truth);
  json j = report_header(w.cfg, "invert");
  j["mesh_id"] = w.mesh.id();
  add_frequency(j, f);
  j["mode"] = invert::mode_name(w.cfg.inversion.mode);
  j["step_rule"] =
      w.cfg.inversion.step_rule == invert::StepRule::fixed ? "fixed" : "backtracking";
  j["noise_level"] = w.cfg.inversion.noise_level;
  j["achieved_noise"] = data.achieved_noise;
  j["clean_star_norm"] = data.clean_star_norm;
  j["seed"] = w.cfg.seed;
  j["truth"] = params_json(truth);
  j["start"] = params_json(l0);
  j["result"] = params_json(res.params);
  j["iterations"] = res.iterations;
  j["misfit"] = res.misfit;
  j["grad_norm"] = res.grad_norm;
  j["discrepancy"] = res.discrepancy;
  j["stop_reason"] = res.stop_reason;
  j["error_to_truth"] = err;
  j["relative_error"] = err / truth.sup_norm();
  j["files"] = {{"trace", "invert_trace.csv"}};
  write_json(out / "invert.json", j);

  std::vector<std::string> columns = {"iter", "misfit", "grad_norm", "step",
                                      "projected"};
  for (const char* base : {"lambda", "mu", "rho"})
    for (int k = 1; k <= truth.regions(); ++k)
      columns.push_back(std::string(base) + "_" + std::to_string(k));
  std::vector<std::vector<double>> rows;
  for (const auto& t : res.trace) {
    std::vector<double> row = {double(t.iter), t.misfit, t.grad_norm, t.step,
                               t.projected ? 1.0 : 0.0};
    row.insert(row.end(), t.params.begin(), t.params.end());
    rows.push_back(std::move(row));
  }
  atomic_write((out / "invert_trace.csv").string(), csv_text(columns, rows));

  if (res.stop_reason == "stagnation") {
    // Outputs above (including the trace) are kept for post-mortem inspection.
    json e = {{"error",
               {{"kind", "solver"},
                {"message", "inversion stagnated: no descent step accepted"},
                {"iterations", res.iterations},
                {"misfit", res.misfit}}}};
    std::cerr << e.dump() << "\n";
    return 3;
  }
  return 0;
}

void write_probe_outputs(const config::ExperimentConfig& cfg, const fs::path& out,
                         const probes::ProbeReport& rep, json extra = json::object()) {
  json j = report_header(cfg, "probe");
  j["probe"] = rep.probe;
  j["mesh_id"] = rep.mesh_id;
  j["omega"] = rep.omega;
  j["seed"] = rep.seed;
  json summary = json::object();
  for (const auto& [k, v] : rep.summary) summary[k] = v;
  j["summary"] = summary;
  j["notes"] = rep.notes;
  for (auto& [k, v] : extra.items()) j[k] = v;
  const std::string csv_name = "probe_" + rep.probe + ".csv";
  j["table"] = {{"columns", rep.columns},
                {"rows", rep.rows.size()},
                {"csv", csv_name}};
  write_json(out / ("probe_" + rep.probe + ".json"), j);
  atomic_write((out / csv_name).string(), csv_text(rep.columns, rep.rows));
}

int cmd_probe(const Workspace& w, const fs::path& out, const std::string& name) {
  if (name == "lipschitz") {
    const Frequency f = resolve_frequency(w, false);
    const dtn::BoundaryMetric metric = dtn::BoundaryMetric::build(w.ops);
    const probes::ProbeReport rep =
        probes::lipschitz_probe(w.ops, metric, w.cfg.prior, f.omega,
                                w.cfg.probe.samples, w.cfg.seed, w.cfg.tol);
    const probes::ModulusTable table = probes::modulus_comparison(
        rep, w.cfg.probe.delta, w.cfg.probe.c_star, w.mesh.num_regions);
    bool all_pass = true;
    for (const auto& r : table.rows) all_pass = all_pass && r.pass;
    json extra;
    extra["modulus"] = {{"delta", table.delta},
                        {"depth", table.depth},
                        {"supplied_c_star", table.supplied_c_star},
                        {"fitted_c_star", table.fitted_c_star},
                        {"linear_constant", table.linear_constant},
                        {"all_pass", all_pass}};
    write_probe_outputs(w.cfg, out, rep, extra);
    return 0;
  }
  if (name == "q0") {
    const Frequency f = resolve_frequency(w, false);
    const dtn::BoundaryMetric metric = dtn::BoundaryMetric::build(w.ops);
    const probes::ProbeReport rep = probes::q0_probe(
        w.ops, metric, w.cfg.prior, f.omega, w.cfg.probe.l_samples,
        w.cfg.probe.h_samples, w.cfg.seed, w.cfg.tol);
    write_probe_outputs(w.cfg, out, rep);
    return 0;
  }
  if (name == "greens") {
    const Frequency f = resolve_frequency(w, false);
    const probes::ProbeReport rep = probes::greens_blowup_probe(
        w.ops, w.cfg.truth(), f.omega, w.cfg.probe.point, w.cfg.probe.radii,
        w.cfg.tol);
    write_probe_outputs(w.cfg, out, rep);
    return 0;
  }
  if (name == "taylor") {
    const Frequency f = resolve_frequency(w, false);
    const dtn::BoundaryMetric metric = dtn::BoundaryMetric::build(w.ops);
    const material::ParamVector l = w.cfg.truth();
    Rng rng(w.cfg.seed);
    material::ParamVector h(l.regions());
    double sup = 0.0;
    for (int k = 0; k < h.size(); ++k) {
      h[k] = rng.gaussian();
      sup = std::max(sup, std::abs(h[k]));
    }
    for (int k = 0; k < h.size(); ++k) h[k] /= sup;
    const deriv::TaylorReport tr =
        deriv::taylor_order(w.ops, metric, l, h, f.omega, w.cfg.probe.t_list,
                            w.cfg.tol);
    probes::ProbeReport rep;
    rep.probe = "taylor";
    rep.mesh_id = w.mesh.id();
    rep.omega = f.omega;
    rep.seed = w.cfg.seed;
    rep.columns = {"t", "remainder", "usable"};
    for (std::size_t i = 0; i < tr.t.size(); ++i)
      rep.rows.push_back({tr.t[i], tr.remainder[i], tr.usable[i] ? 1.0 : 0.0});
    rep.set("slope", tr.slope);
    rep.set("noise_floor", tr.noise_floor);
    write_probe_outputs(w.cfg, out, rep);
    return 0;
  }
  if (name == "alessandrini") {
    const Frequency f = resolve_frequency(w, false);
    const material::ConstraintSet set(w.cfg.prior, material::SetKind::compact);
    Rng rng(w.cfg.seed);
    const int nt = w.ops->dofs().n_trace();
    probes::ProbeReport rep;
    rep.probe = "alessandrini";
    rep.mesh_id = w.mesh.id();
    rep.omega = f.omega;
    rep.seed = w.cfg.seed;
    rep.columns = {"pair", "lhs", "rhs", "gap", "relative_gap"};
    double max_rel = 0.0;
    for (int p = 0; p < w.cfg.probe.pairs; ++p) {
      const material::ParamVector l1 = set.sample(rng);
      const material::ParamVector l2 = set.sample(rng);
      std::vector<double> psi(nt), phi(nt);
      for (auto& v : psi) v = rng.gaussian();
      for (auto& v : phi) v = rng.gaussian();
      const dtn::AlessandriniReport ar =
          dtn::alessandrini_gap(w.ops, l1, l2, f.omega, psi, phi, w.cfg.tol);
      const double scale = std::max({std::abs(ar.lhs), std::abs(ar.rhs), 1e-300});
      const double rel = ar.gap / scale;
      max_rel = std::max(max_rel, rel);
      rep.rows.push_back({double(p), ar.lhs, ar.rhs, ar.gap, rel});
    }
    rep.set("pairs", w.cfg.probe.pairs);
    rep.set("max_relative_gap", max_rel);
    write_probe_outputs(w.cfg, out, rep);
    return 0;
  }
  throw ConfigError("unknown probe '" + name + "'");
}

int exit_code_for(const Error& e) {
  const std::string& k = e.kind();
  return (k == "solver" || k == "numeric") ? 3 : 2;
}

void print_error_json(const Error& e) {
  json j;
  j["error"] = {{"kind", e.kind()}, {"message", e.what()}};
  if (const auto* s = dynamic_cast<const SolverError*>(&e)) {
    j["error"]["iterations"] = s->iterations;
    j["error"]["residual"] = s->residual;
  }
  std::fprintf(stderr, "%s\n", j.dump().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forward and inverse elastic boundary-value toolkit"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config_path, "experiment config (INI)")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--out", flags.out_dir, "output directory (overrides config)");
  auto* seed_opt = app.add_option("--seed", flags.seed, "RNG seed (overrides config)");
  app.add_option("--threads", flags.threads, "worker threads (0 = hardware)");
  auto* tol_opt =
      app.add_option("--tol", flags.tol, "solver tolerance (overrides config)");
  app.fallthrough();

  CLI::App* c_mesh = app.add_subcommand("mesh", "build the partitioned mesh");
  CLI::App* c_eig = app.add_subcommand("eig", "reference eigenvalue and omega_max");
  CLI::App* c_forward = app.add_subcommand("forward", "assemble the DtN operator");
  CLI::App* c_invert = app.add_subcommand("invert", "projected gradient inversion");
  CLI::App* c_probe = app.add_subcommand("probe", "empirical stability probes");
  std::string probe_name;
  c_probe->add_option("name", probe_name, "lipschitz|q0|greens|taylor|alessandrini")
      ->required()
      ->check(CLI::IsMember(
          {"lipschitz", "q0", "greens", "taylor", "alessandrini"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    config::ExperimentConfig cfg = config::load_config(flags.config_path);
    if (!flags.out_dir.empty()) cfg.output_dir = flags.out_dir;
    if (seed_opt->count() > 0) cfg.seed = flags.seed;
    if (tol_opt->count() > 0) {
      if (!(flags.tol > 0.0 && flags.tol < 1.0))
        throw ConfigError("--tol must lie in (0, 1)");
      cfg.tol = flags.tol;
      cfg.inversion.tol = flags.tol;
    }
    if (flags.threads >= 0) cfg.threads = flags.threads;
    const int threads = cfg.threads > 0
                            ? cfg.threads
                            : static_cast<int>(std::thread::hardware_concurrency());
    set_thread_count(threads);

    Workspace w = make_workspace(std::move(cfg));
    const fs::path out(w.cfg.output_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec)
      throw ConfigError("cannot create output directory '" + out.string() +
                        "': " + ec.message());

    if (c_mesh->parsed()) return cmd_mesh(w, out);
    if (c_eig->parsed()) return cmd_eig(w, out);
    if (c_forward->parsed()) return cmd_forward(w, out);
    if (c_invert->parsed()) return cmd_invert(w, out);
    if (c_probe->parsed()) return cmd_probe(w, out, probe_name);
    return 2;
  } catch (const Error& e) {
    print_error_json(e);
    return exit_code_for(e);
  } catch (const std::exception& e) {
    json j;
    j["error"] = {{"kind", "internal"}, {"message", e.what()}};
    std::fprintf(stderr, "%s\n", j.dump().c_str());
    return 3;
  }
}
