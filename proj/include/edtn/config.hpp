#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "edtn/invert.hpp"
#include "edtn/material.hpp"
#include "edtn/mesh.hpp"

namespace edtn::config {

// One "key = value" line of the INI text, with provenance for error messages.
struct Entry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
};

// Strict INI reader: [section] headers, key = value lines, full-line comments with
// '#' or ';'. Malformed lines throw ConfigError with origin:line positions.
std::vector<Entry> parse_ini(const std::string& text, const std::string& origin);

struct ProbeConfig {
  int samples = 50;    // lipschitz pairs
  int l_samples = 2;   // q0 parameter draws
  int h_samples = 200; // q0 random directions
  int pairs = 20;      // alessandrini pairs
  std::vector<double> radii = {0.05, 0.1, 0.2, 0.4};         // greens exclusion radii
  std::array<double, 3> point = {0.5, 0.5, 0.5};             // greens source
  std::vector<double> t_list = {1e-1, 3e-2, 1e-2, 3e-3};     // taylor step sizes
  double delta = 1e-2;  // modulus-comparison delta
  double c_star = 1.0;  // modulus-comparison candidate constant
};

// Fully validated experiment description. Parsing reports every field error at once
// (section, key and line), and rejects unknown sections and keys.
struct ExperimentConfig {
  material::PriorData prior;
  mesh::BlockMeshSpec mesh;

  std::vector<double> lambda, mu, rho;  // true coefficients, one entry per block
  bool has_material = false;

  double frequency_fraction = 0.7;  // of omega_max
  double omega_absolute = -1.0;     // >= 0 selects an absolute frequency instead

  double tol = 1e-10;

  invert::InversionConfig inversion;
  std::string start = "perturbed";  // or "centroid"
  double perturbation = 0.2;        // relative start offset from the truth

  ProbeConfig probe;

  std::string output_dir = "out";
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency

  material::ParamVector truth() const;  // throws when [material] is absent
  std::uint64_t content_hash() const;   // identity of the effective run
};

ExperimentConfig parse_config(const std::string& text, const std::string& origin);
ExperimentConfig load_config(const std::string& path);

}  // namespace edtn::config
