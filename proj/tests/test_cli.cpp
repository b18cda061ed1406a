#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string cli = EDTN_CLI_PATH;
const fs::path scratch = "/tmp/edtn_cli_tests";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int run(const std::string& args, std::string* err = nullptr) {
  fs::create_directories(scratch);
  const fs::path errfile = scratch / "stderr.txt";
  const std::string cmd = cli + " " + args + " 2>" + errfile.string();
  const int status = std::system(cmd.c_str());
  if (err) *err = slurp(errfile);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json load_json(const fs::path& p) {
  REQUIRE(fs::exists(p));
  return json::parse(slurp(p));
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = scratch / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const char* kBaseConfig = R"([mesh]
cells = 4

[material]
lambda = 0.8
mu = 1.0
rho = 1.0

[frequency]
fraction = 0.5

[probe]
samples = 3
l_samples = 1
h_samples = 20
pairs = 2
radii = 0.3 0.4
point = 0.5 0.5 0.5
t_list = 0.1 0.03 0.01

[output]
seed = 3
)";

const char* kInvertConfig = R"([mesh]
cells = 4
block = 0 0 0   1 1 0.5
block = 0 0 0.5 1 1 1

[material]
lambda = 0.6 1.1
mu = 0.9 1.3
rho = 0.8 1.0

[frequency]
fraction = 0.7

[inversion]
mode = full
max_iterations = 200
perturbation = 0.2

[output]
seed = 11
)";

fs::path base_config() {
  const fs::path p = scratch / "base.ini";
  write_file(p, kBaseConfig);
  return p;
}

fs::path invert_config() {
  const fs::path p = scratch / "invert.ini";
  write_file(p, kInvertConfig);
  return p;
}

bool hex16(const std::string& s) {
  if (s.size() != 16) return false;
  for (char c : s)
    if (!std::isxdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

// Byte-level comparison of two output directories: same file names, same content.
void check_dirs_identical(const fs::path& a, const fs::path& b) {
  std::map<std::string, std::string> fa, fb;
  for (const auto& e : fs::directory_iterator(a))
    fa[e.path().filename().string()] = slurp(e.path());
  for (const auto& e : fs::directory_iterator(b))
    fb[e.path().filename().string()] = slurp(e.path());
  REQUIRE(!fa.empty());
  REQUIRE(fa.size() == fb.size());
  for (const auto& [name, bytes] : fa) {
    REQUIRE(fb.count(name) == 1);
    CHECK_MESSAGE(bytes == fb[name], "file differs between reruns: ", name);
  }
}

}  // namespace

TEST_CASE("mesh command writes a versioned report and the mesh file") {
  const auto cfg = base_config();
  const auto out = fresh_dir("mesh_out");
  CHECK(run("mesh --config " + cfg.string() + " --out " + out.string()) == 0);

  const json j = load_json(out / "mesh.json");
  CHECK(j["command"] == "mesh");
  CHECK(!j["toolkit_version"].get<std::string>().empty());
  CHECK(hex16(j["config_hash"].get<std::string>()));
  CHECK(j["mesh"]["vertices"] == 125);  // (4+1)^3 grid points
  CHECK(j["mesh"]["tets"] == 384);      // 6 per cell
  CHECK(j["mesh"]["regions"] == 1);
  CHECK(j["partition"]["valid"] == true);
  CHECK(j["quality"]["total_volume"].get<double>() == doctest::Approx(1.0));
  CHECK(j["files"]["mesh"] == "mesh.emesh");
  CHECK(fs::exists(out / "mesh.emesh"));
}

TEST_CASE("eig command reports the reference eigenvalue and the frequency cap") {
  const auto cfg = base_config();
  const auto out = fresh_dir("eig_out");
  CHECK(run("eig --config " + cfg.string() + " --out " + out.string()) == 0);

  const json j = load_json(out / "eig.json");
  CHECK(j["command"] == "eig");
  CHECK(j["converged"] == true);
  const double lambda1 = j["lambda1"].get<double>();
  CHECK(lambda1 > 0.0);
  // omega_max^2 = gamma0 * lambda1 / 2 with the default gamma0 = 0.5.
  CHECK(j["omega_max"].get<double>() ==
        doctest::Approx(std::sqrt(0.5 * lambda1 / 2.0)).epsilon(1e-12));
  CHECK(j["residual"].get<double>() < 1e-6);
}

TEST_CASE("forward command writes the boundary operator with provenance") {
  const auto cfg = base_config();
  const auto out = fresh_dir("forward_out");
  CHECK(run("forward --config " + cfg.string() + " --out " + out.string()) == 0);

  const json j = load_json(out / "dtn.json");
  CHECK(j["command"] == "forward");
  const int dim = j["dim"].get<int>();
  CHECK(dim == 27);  // 3 components x (4-1)^2 patch-interior vertices
  CHECK(j["lambda"].size() == static_cast<std::size_t>(dim) * dim);
  CHECK(j["sigma_dofs"].size() == static_cast<std::size_t>(dim));
  CHECK(j["asymmetry"].get<double>() <= 1e-6);
  CHECK(j["omega"].get<double>() > 0.0);
  CHECK(j["params"]["lambda"] == json::array({0.8}));
  CHECK(j["pcg_iterations"].get<int>() > 0);
}

TEST_CASE("invert command recovers the coefficients and writes the trace") {
  const auto cfg = invert_config();
  const auto out = fresh_dir("invert_out");
  CHECK(run("invert --config " + cfg.string() + " --out " + out.string()) == 0);

  const json j = load_json(out / "invert.json");
  CHECK(j["command"] == "invert");
  CHECK(j["mode"] == "full");
  CHECK(j["noise_level"] == 0.0);
  const std::string reason = j["stop_reason"].get<std::string>();
  CHECK((reason == "gradient_tolerance" || reason == "discrepancy"));
  CHECK(j["relative_error"].get<double>() <= 1e-3);
  CHECK(j["truth"]["mu"] == json::array({0.9, 1.3}));
  CHECK(j["result"]["lambda"].size() == 2);
  CHECK(j["files"]["trace"] == "invert_trace.csv");

  const std::string trace = slurp(out / "invert_trace.csv");
  std::istringstream lines(trace);
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "iter,misfit,grad_norm,step,projected,"
        "lambda_1,lambda_2,mu_1,mu_2,rho_1,rho_2");
  int data_lines = 0;
  for (std::string line; std::getline(lines, line);) data_lines += !line.empty();
  CHECK(data_lines >= 1);
  CHECK(data_lines == j["iterations"].get<int>() + 1);
}

TEST_CASE("every command reproduces its outputs byte for byte") {
  const auto cfg = base_config();
  const auto icfg = invert_config();
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"mesh", cfg.string()},
      {"eig", cfg.string()},
      {"forward", cfg.string()},
      {"invert", icfg.string()},
      {"probe lipschitz", cfg.string()},
      {"probe q0", cfg.string()},
      {"probe greens", cfg.string()},
      {"probe taylor", cfg.string()},
      {"probe alessandrini", cfg.string()},
  };
  for (const auto& [command, config] : runs) {
    CAPTURE(command);
    const auto out1 = fresh_dir("rerun_a");
    const auto out2 = fresh_dir("rerun_b");
    CHECK(run(command + " --config " + config + " --out " + out1.string()) == 0);
    CHECK(run(command + " --config " + config + " --out " + out2.string()) == 0);
    check_dirs_identical(out1, out2);
  }
}

TEST_CASE("probe taylor reports a quadratic remainder trend") {
  const auto cfg = base_config();
  const auto out = fresh_dir("taylor_out");
  CHECK(run("probe taylor --config " + cfg.string() + " --out " + out.string()) == 0);

  const json j = load_json(out / "probe_taylor.json");
  CHECK(j["probe"] == "taylor");
  const double slope = j["summary"]["slope"].get<double>();
  CHECK(slope == doctest::Approx(2.0).epsilon(0.25));
  CHECK(j["table"]["rows"] == 3);
  CHECK(fs::exists(out / "probe_taylor.csv"));
}

TEST_CASE("probe alessandrini closes the symmetry identity to solver accuracy") {
  const auto cfg = base_config();
  const auto out = fresh_dir("aless_out");
  CHECK(run("probe alessandrini --config " + cfg.string() + " --out " + out.string()) ==
        0);

  const json j = load_json(out / "probe_alessandrini.json");
  CHECK(j["summary"]["pairs"] == 2);
  CHECK(j["summary"]["max_relative_gap"].get<double>() <= 1e-6);
  CHECK(fs::exists(out / "probe_alessandrini.csv"));
}

TEST_CASE("configuration problems exit with code 2 and a machine-readable reason") {
  const auto out = fresh_dir("err_out");
  const fs::path bad = scratch / "bad.ini";
  write_file(bad, "[mesh]\ncells = 4\nwibble = 1\n");

  std::string err;
  CHECK(run("mesh --config " + bad.string() + " --out " + out.string(), &err) == 2);
  const json e = json::parse(err);
  CHECK(e["error"]["kind"] == "config");
  CHECK(e["error"]["message"].get<std::string>().find("unknown key") !=
        std::string::npos);

  // Argument-level failures also exit 2 (missing config, unknown probe name).
  CHECK(run("mesh --config /tmp/edtn_missing_config.ini --out " + out.string()) == 2);
  CHECK(run("probe sideways --config " + bad.string() + " --out " + out.string()) == 2);
  CHECK(run("mesh") == 2);

  // A --tol override outside (0, 1) is rejected before any work happens.
  const auto cfg = base_config();
  CHECK(run("eig --config " + cfg.string() + " --out " + out.string() + " --tol 2",
            &err) == 2);
  CHECK(json::parse(err)["error"]["kind"] == "config");
}

TEST_CASE("an inversion frequency below the identifiability floor exits with code 2") {
  const fs::path cfg = scratch / "lowfreq.ini";
  std::string text(kInvertConfig);
  const auto pos = text.find("fraction = 0.7");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 14, "fraction = 0.3");
  write_file(cfg, text);

  const auto out = fresh_dir("lowfreq_out");
  std::string err;
  CHECK(run("invert --config " + cfg.string() + " --out " + out.string(), &err) == 2);
  const json e = json::parse(err);
  CHECK(e["error"]["kind"] == "frequency");
  CHECK(e["error"]["message"].get<std::string>().find("requires omega >=") !=
        std::string::npos);
}

TEST_CASE("a frequency outside the coercive regime exits with code 3") {
  const fs::path cfg = scratch / "highfreq.ini";
  std::string text(kBaseConfig);
  const auto pos = text.find("fraction = 0.5");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 14, "omega = 50");
  write_file(cfg, text);

  const auto out = fresh_dir("highfreq_out");
  std::string err;
  CHECK(run("forward --config " + cfg.string() + " --out " + out.string(), &err) == 3);
  const json e = json::parse(err);
  const std::string kind = e["error"]["kind"].get<std::string>();
  CHECK((kind == "solver" || kind == "numeric"));
  if (kind == "solver") {
    CHECK(e["error"].contains("iterations"));
    CHECK(e["error"].contains("residual"));
  }
}

TEST_CASE("seed overrides change the run identity, output location does not") {
  const auto cfg = base_config();
  const auto out1 = fresh_dir("seed_a");
  const auto out2 = fresh_dir("seed_b");
  const auto out3 = fresh_dir("seed_c");
  CHECK(run("eig --config " + cfg.string() + " --out " + out1.string() + " --seed 1") ==
        0);
  CHECK(run("eig --config " + cfg.string() + " --out " + out2.string() + " --seed 2") ==
        0);
  CHECK(run("eig --config " + cfg.string() + " --out " + out3.string() + " --seed 1") ==
        0);
  const std::string h1 = load_json(out1 / "eig.json")["config_hash"];
  const std::string h2 = load_json(out2 / "eig.json")["config_hash"];
  const std::string h3 = load_json(out3 / "eig.json")["config_hash"];
  CHECK(h1 != h2);
  CHECK(h1 == h3);

  // Nested output directories are created on demand.
  const fs::path nested = scratch / "nested/a/b";
  fs::remove_all(scratch / "nested");
  CHECK(run("mesh --config " + cfg.string() + " --out " + nested.string()) == 0);
  CHECK(fs::exists(nested / "mesh.json"));
}
