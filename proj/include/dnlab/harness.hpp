#pragma once

/// Experiment registry, YAML configuration, and run manifests for the `lab` CLI.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dnlab/field_core.hpp"

namespace dnlab {

struct ExperimentInfo {
  std::string name;
  std::vector<std::string> required_keys;
  std::vector<std::string> optional_keys;
  std::string runtime;  // desk-scale estimate
  std::string summary;
};

const std::vector<ExperimentInfo>& list_experiments();
std::string experiment_table();

struct ExperimentConfig {
  std::string experiment;
  int N = 8;
  std::uint64_t seed = 1;
  std::string output;  // resolved output directory

  std::optional<PotentialSpec> potential;
  std::optional<PotentialSpec> potential_b;

  // per-experiment knobs; only the keys listed in the registry are accepted
  double lambda = 0.0;
  int samples = 10;
  int eigen_count = 0;                  // 0: full spectrum up to N = 16, else 210
  std::vector<int> weyl_window{20, 200};
  std::vector<double> hs;
  Vec3 k = Vec3::Zero();
  double slope_min = 0.7;
  double slope_max = 1.3;
  double cutoff = 0.0;                  // lattice radius
  bool correction = false;
  double h = 0.15;
  double max_rel_error = 0.25;
  std::vector<double> scales;
  double sigma = 2.0;
  std::vector<double> lambdas{-3.0};
  std::vector<int> orders{0, 1, 2, 3};
  double tolerance = 1e-8;
  std::vector<int> tail_terms;
  std::vector<double> mus;
  Vec3 xi = Vec3::Zero();
  std::vector<double> ks;
  double max_rel_gap = 0.2;

  std::string canonical;  // effective config as emitted YAML, hashed into the manifest
};

/// Flags override top-level scalars: key -> YAML scalar text.
using Overrides = std::map<std::string, std::string>;

/// Parse errors name the offending key (and line when known).
ExperimentConfig parse_config(const std::string& yaml_text, const Overrides& overrides = {});
ExperimentConfig load_config(const std::string& path, const Overrides& overrides = {});

/// Relative outputs land under $LAB_OUTPUT_ROOT when it is set.
std::string resolve_output_dir(const std::string& output);

struct StageTime {
  std::string name;
  double seconds = 0;
};

struct OutputFile {
  std::string file;  // relative to the manifest directory
  std::string sha256;
  std::size_t rows = 0;  // data rows for CSV files
};

struct Assertion {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ErrorRecord {
  std::string stage;
  std::string kind;
  std::string message;
};

struct RunManifest {
  std::string experiment;
  std::string config_hash;
  std::string version;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string started_at;
  std::vector<StageTime> stages;
  std::vector<OutputFile> outputs;
  std::vector<Assertion> assertions;
  std::optional<ErrorRecord> error;

  /// 0 ok, 1 an embedded assertion failed, 2 error
  int exit_code() const;
  const OutputFile* find(const std::string& file) const;
};

RunManifest run_experiment(const ExperimentConfig& config);
RunManifest run(const std::string& config_path, const Overrides& overrides = {});

std::string manifest_json(const RunManifest& m);
RunManifest read_manifest(const std::string& path);

struct VerifyResult {
  bool ok = true;
  std::vector<std::string> problems;
};

/// recompute every listed checksum relative to the manifest's directory
VerifyResult verify(const std::string& manifest_path);

inline constexpr const char* kManifestName = "manifest.json";

}  // namespace dnlab
