#include <CLI11.hpp>
#include <iostream>

#include "dnlab/harness.hpp"
#include "dnlab/linalg.hpp"

using namespace dnlab;

namespace {

int run_command(const std::string& config, const std::vector<std::string>& sets) {
  Overrides ov;
  for (const auto& s : sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "error: --set expects key=value, got '" << s << "'\n";
      return 2;
    }
    ov[s.substr(0, eq)] = s.substr(eq + 1);
  }
  RunManifest m;
  try {
    m = run(config, ov);
  } catch (const LabError& e) {
    std::cerr << "error [" << error_kind_name(e.kind()) << "]: " << e.what() << "\n";
    return 2;
  }
  for (const auto& s : m.stages) std::cout << "stage " << s.name << ": " << s.seconds << " s\n";
  for (const auto& a : m.assertions)
    std::cout << (a.passed ? "[PASS] " : "[FAIL] ") << a.name << (a.detail.empty() ? "" : ": ")
              << a.detail << "\n";
  if (m.error)
    std::cerr << "error in stage " << m.error->stage << " [" << m.error->kind << "]: " << m.error->message
              << "\n";
  std::cout << "manifest: " << m.output_dir << "/" << kManifestName << "\n";
  return m.exit_code();
}

int verify_command(const std::string& manifest) {
  VerifyResult r;
  try {
    r = verify(manifest);
  } catch (const LabError& e) {
    std::cerr << "error [" << error_kind_name(e.kind()) << "]: " << e.what() << "\n";
    return 2;
  }
  for (const auto& p : r.problems) std::cout << p << "\n";
  std::cout << (r.ok ? "all checksums match\n" : "verification failed\n");
  return r.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  pin_blas_environment(argv);
  CLI::App app{"DN-map inverse-potential lab"};
  app.require_subcommand(1);

  std::string config, manifest;
  std::vector<std::string> sets;
  std::string output;
  auto* run_cmd = app.add_subcommand("run", "run an experiment from a YAML config");
  run_cmd->add_option("config", config, "config file")->required();
  run_cmd->add_option("--set", sets, "override a top-level config key (key=value)");
  run_cmd->add_option("-o,--output", output, "output directory (relative to $LAB_OUTPUT_ROOT)");
  auto* list_cmd = app.add_subcommand("list", "list the experiments");
  auto* verify_cmd = app.add_subcommand("verify", "recompute the checksums of a run manifest");
  verify_cmd->add_option("manifest", manifest, "manifest.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*list_cmd) {
    std::cout << experiment_table();
    return 0;
  }
  if (*verify_cmd) return verify_command(manifest);
  if (!output.empty()) sets.push_back("output=" + output);
  return run_command(config, sets);
}
