#include "dnlab/harness.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "dnlab/inverse_engine.hpp"
#include "dnlab/io.hpp"
#include "dnlab/linalg.hpp"
#include "dnlab/spectral_bl.hpp"

namespace dnlab {

namespace fs = std::filesystem;

// ====================================================================
// Registry
// ====================================================================

const std::vector<ExperimentInfo>& list_experiments() {
  static const std::vector<ExperimentInfo> reg = {
      {"forward", {"N", "potential"}, {"eigen_count", "weyl_window"}, "N=8: 1 s; N=32: 20 s",
       "discrete spectrum and Weyl slope"},
      {"dn", {"N", "potential", "potential_b"}, {"lambda", "samples"}, "N=8: 2 s; N=16: 1 min",
       "integral identity, gap norms and smoothing index"},
      {"cgo-decay", {"N", "potential", "hs"}, {"k", "slope_min", "slope_max"},
       "N=16: 10 s; N=32: 2 min", "CGO remainder norms against h"},
      {"reconstruct", {"N", "potential", "potential_b", "cutoff"},
       {"correction", "h", "max_rel_error"}, "N=16: 20 s; N=32: 3 min",
       "Fourier-mode recovery of V - V~ from DN data"},
      {"stability", {"N", "potential", "potential_b", "scales"}, {"sigma"}, "N=8: 5 s per pair",
       "DN gap against potential difference along a scaled family"},
      {"borg-levinson", {"N", "potential"},
       {"potential_b", "lambdas", "orders", "samples", "tolerance", "tail_terms", "mus"},
       "N=8: 5 s; N=16: 1 min", "boundary spectral data, derivative series, large-mu decay"},
      {"s-limit", {"N", "potential", "potential_b", "xi", "ks"}, {"max_rel_gap"},
       "N=16: 20 s; N=32: 3 min", "S functional differences against the Fourier mode"},
  };
  return reg;
}

std::string experiment_table() {
  std::ostringstream os;
  os << std::left << std::setw(15) << "experiment" << std::setw(46) << "required keys"
     << "runtime\n";
  for (const auto& e : list_experiments()) {
    std::string keys;
    for (const auto& k : e.required_keys) keys += (keys.empty() ? "" : ", ") + k;
    os << std::setw(15) << e.name << std::setw(46) << keys << e.runtime << "\n";
  }
  return os.str();
}

namespace {

const ExperimentInfo* find_experiment(const std::string& name) {
  for (const auto& e : list_experiments())
    if (e.name == name) return &e;
  return nullptr;
}

int max_grid(const std::string& name) {
  if (name == "dn" || name == "stability" || name == "borg-levinson") return 16;
  if (name == "cgo-decay") return 64;
  return 32;
}

// ====================================================================
// Config parsing
// ====================================================================

std::string where(const YAML::Node& n) {
  if (n.Mark().is_null()) return "";
  return " (line " + std::to_string(n.Mark().line + 1) + ")";
}

[[noreturn]] void parse_fail(const std::string& key, const YAML::Node& n, const std::string& what) {
  fail(ErrorKind::Parse, "config key '" + key + "': " + what + where(n));
}

template <class T>
T get(const YAML::Node& n, const std::string& key, const char* type) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    parse_fail(key, n, std::string("expected ") + type);
  }
}

std::vector<double> get_reals(const YAML::Node& n, const std::string& key) {
  if (!n.IsSequence()) parse_fail(key, n, "expected a list of numbers");
  std::vector<double> out;
  for (const auto& e : n) out.push_back(get<double>(e, key, "a number"));
  return out;
}

std::vector<int> get_ints(const YAML::Node& n, const std::string& key) {
  if (!n.IsSequence()) parse_fail(key, n, "expected a list of integers");
  std::vector<int> out;
  for (const auto& e : n) out.push_back(get<int>(e, key, "an integer"));
  return out;
}

Vec3 get_vec3(const YAML::Node& n, const std::string& key) {
  auto v = get_reals(n, key);
  if (v.size() != 3) parse_fail(key, n, "expected three numbers");
  return Vec3(v[0], v[1], v[2]);
}

GaussianBump parse_bump(const YAML::Node& n, const std::string& key) {
  GaussianBump b{{0.5, 0.5, 0.5}, 0.2, 10};
  for (const auto& kv : n) {
    auto name = kv.first.as<std::string>();
    if (name == "center") b.center = get_vec3(kv.second, key + ".center");
    else if (name == "width") b.width = get<double>(kv.second, key + ".width", "a number");
    else if (name == "amplitude") b.amplitude = get<double>(kv.second, key + ".amplitude", "a number");
    else if (name != "kind") parse_fail(key + "." + name, kv.second, "unknown key");
  }
  return b;
}

PotentialSpec parse_potential(const YAML::Node& n, const std::string& key, std::uint64_t derived_seed) {
  if (!n.IsMap()) parse_fail(key, n, "expected a table with a 'kind'");
  if (!n["kind"]) parse_fail(key + ".kind", n, "missing");
  const auto kind = get<std::string>(n["kind"], key + ".kind", "a string");
  PotentialSpec spec;
  std::set<std::string> allowed{"kind", "scale", "sigma"};
  if (kind == "zero") {
    spec = PotentialSpec::zero();
  } else if (kind == "constant") {
    allowed.insert("value");
    if (!n["value"]) parse_fail(key + ".value", n, "missing");
    spec = PotentialSpec::constant_value(get<double>(n["value"], key + ".value", "a number"));
  } else if (kind == "bump") {
    allowed.insert({"center", "width", "amplitude", "bumps"});
    spec = PotentialSpec::bump({0.5, 0.5, 0.5}, 0.2, 10);
    if (n["bumps"]) {
      if (!n["bumps"].IsSequence()) parse_fail(key + ".bumps", n["bumps"], "expected a list");
      spec.bumps.clear();
      for (const auto& b : n["bumps"]) spec.bumps.push_back(parse_bump(b, key + ".bumps"));
    } else {
      YAML::Node single(YAML::NodeType::Map);
      for (const char* f : {"center", "width", "amplitude"})
        if (n[f]) single[f] = n[f];
      spec.bumps = {parse_bump(single, key)};
    }
  } else if (kind == "rough") {
    allowed.insert({"seed", "alpha", "amplitude", "noise", "law", "point"});
    std::uint64_t seed = n["seed"] ? get<std::uint64_t>(n["seed"], key + ".seed", "an unsigned integer")
                                   : derived_seed;
    double alpha = n["alpha"] ? get<double>(n["alpha"], key + ".alpha", "a number") : 1.0;
    double amp = n["amplitude"] ? get<double>(n["amplitude"], key + ".amplitude", "a number") : 1.0;
    double noise = n["noise"] ? get<double>(n["noise"], key + ".noise", "a number") : 0.5;
    PointwiseLaw law = PointwiseLaw::Uniform;
    if (n["law"]) {
      auto l = get<std::string>(n["law"], key + ".law", "a string");
      if (l == "normal") law = PointwiseLaw::Normal;
      else if (l != "uniform") parse_fail(key + ".law", n["law"], "expected 'uniform' or 'normal'");
    }
    spec = PotentialSpec::rough(seed, alpha, amp, noise, law);
    if (n["point"]) spec.singular_point = get_vec3(n["point"], key + ".point");
  } else {
    parse_fail(key + ".kind", n["kind"], "unknown potential kind '" + kind + "'");
  }
  for (const auto& kv : n) {
    auto name = kv.first.as<std::string>();
    if (!allowed.count(name)) parse_fail(key + "." + name, kv.second, "unknown key for kind " + kind);
  }
  if (n["sigma"]) spec.sigma = get<double>(n["sigma"], key + ".sigma", "a number");
  if (n["scale"]) spec = spec.scaled(get<double>(n["scale"], key + ".scale", "a number"));
  return spec;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(stream)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t(out[0]) << 32) | out[1];
}

}  // namespace

std::string resolve_output_dir(const std::string& output) {
  fs::path p(output);
  if (p.is_relative()) {
    if (const char* root = std::getenv("LAB_OUTPUT_ROOT"); root && *root) p = fs::path(root) / p;
  }
  return p.lexically_normal().string();
}

ExperimentConfig parse_config(const std::string& yaml_text, const Overrides& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    fail(ErrorKind::Parse, "config is not valid YAML (line " + std::to_string(e.mark.line + 1) +
                               "): " + e.msg);
  }
  if (!root.IsMap()) fail(ErrorKind::Parse, "config must be a table of keys");
  for (const auto& [k, v] : overrides) {
    try {
      root[k] = YAML::Load(v);
    } catch (const YAML::Exception& e) {
      fail(ErrorKind::Parse, "override '" + k + "': not a valid value: " + e.msg);
    }
  }

  ExperimentConfig c;
  if (!root["experiment"]) fail(ErrorKind::Parse, "config key 'experiment': missing");
  c.experiment = get<std::string>(root["experiment"], "experiment", "a string");
  const ExperimentInfo* info = find_experiment(c.experiment);
  if (!info) parse_fail("experiment", root["experiment"], "unknown experiment '" + c.experiment + "'");

  std::set<std::string> allowed{"experiment", "seed", "output"};
  allowed.insert(info->required_keys.begin(), info->required_keys.end());
  allowed.insert(info->optional_keys.begin(), info->optional_keys.end());
  for (const auto& kv : root) {
    auto name = kv.first.as<std::string>();
    if (!allowed.count(name))
      parse_fail(name, kv.first, "not a key of experiment '" + c.experiment + "'");
  }
  for (const auto& k : info->required_keys)
    if (!root[k]) fail(ErrorKind::Parse, "config key '" + k + "': missing (required by " + c.experiment + ")");

  if (root["seed"]) c.seed = get<std::uint64_t>(root["seed"], "seed", "an unsigned 64-bit integer");
  c.N = get<int>(root["N"], "N", "an integer");
  if (c.N < 2 || c.N > max_grid(c.experiment))
    fail(ErrorKind::Validation, "N = " + std::to_string(c.N) + " outside [2, " +
                                    std::to_string(max_grid(c.experiment)) + "] for " + c.experiment);
  c.output = root["output"] ? get<std::string>(root["output"], "output", "a path") : "runs/" + c.experiment;
  c.output = resolve_output_dir(c.output);

  if (root["potential"]) c.potential = parse_potential(root["potential"], "potential", mix_seed(c.seed, 1));
  if (root["potential_b"])
    c.potential_b = parse_potential(root["potential_b"], "potential_b", mix_seed(c.seed, 2));

  auto real = [&](const char* k, double& dst) {
    if (root[k]) dst = get<double>(root[k], k, "a number");
  };
  auto integer = [&](const char* k, int& dst) {
    if (root[k]) dst = get<int>(root[k], k, "an integer");
  };
  real("lambda", c.lambda);
  integer("samples", c.samples);
  integer("eigen_count", c.eigen_count);
  if (root["weyl_window"]) c.weyl_window = get_ints(root["weyl_window"], "weyl_window");
  if (root["hs"]) c.hs = get_reals(root["hs"], "hs");
  if (root["k"]) c.k = get_vec3(root["k"], "k");
  real("slope_min", c.slope_min);
  real("slope_max", c.slope_max);
  real("cutoff", c.cutoff);
  if (root["correction"]) c.correction = get<bool>(root["correction"], "correction", "true or false");
  real("h", c.h);
  real("max_rel_error", c.max_rel_error);
  if (root["scales"]) c.scales = get_reals(root["scales"], "scales");
  real("sigma", c.sigma);
  if (root["lambdas"]) c.lambdas = get_reals(root["lambdas"], "lambdas");
  if (root["orders"]) c.orders = get_ints(root["orders"], "orders");
  real("tolerance", c.tolerance);
  if (root["tail_terms"]) c.tail_terms = get_ints(root["tail_terms"], "tail_terms");
  if (root["mus"]) c.mus = get_reals(root["mus"], "mus");
  if (root["xi"]) c.xi = get_vec3(root["xi"], "xi");
  if (root["ks"]) c.ks = get_reals(root["ks"], "ks");
  real("max_rel_gap", c.max_rel_gap);

  if (c.samples < 1) fail(ErrorKind::Validation, "samples must be positive");
  if (c.weyl_window.size() != 2 || c.weyl_window[0] < 1 || c.weyl_window[1] <= c.weyl_window[0])
    fail(ErrorKind::Validation, "weyl_window must be [kmin, kmax] with 1 <= kmin < kmax");
  if (c.experiment == "cgo-decay" && c.hs.size() < 2)
    fail(ErrorKind::Validation, "cgo-decay needs at least two h values");
  if (c.experiment == "stability" && c.scales.empty())
    fail(ErrorKind::Validation, "stability needs a nonempty scales list");
  if (c.experiment == "reconstruct" && !(c.cutoff > 0))
    fail(ErrorKind::Validation, "cutoff must be positive");
  for (int m : c.orders)
    if (m < 0) fail(ErrorKind::Validation, "derivative orders must be nonnegative");

  YAML::Emitter em;
  em << root;
  c.canonical = em.c_str();
  return c;
}

ExperimentConfig load_config(const std::string& path, const Overrides& overrides) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const LabError&) {
    fail(ErrorKind::Io, "cannot read config " + path);
  }
  return parse_config(text, overrides);
}

// ====================================================================
// Manifest
// ====================================================================

int RunManifest::exit_code() const {
  if (error) return 2;
  for (const auto& a : assertions)
    if (!a.passed) return 1;
  return 0;
}

const OutputFile* RunManifest::find(const std::string& file) const {
  for (const auto& o : outputs)
    if (o.file == file) return &o;
  return nullptr;
}

std::string manifest_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["experiment"] = m.experiment;
  j["config_hash"] = m.config_hash;
  j["version"] = m.version;
  j["seed"] = m.seed;
  j["output_dir"] = m.output_dir;
  j["started_at"] = m.started_at;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : m.stages) j["stages"].push_back({{"name", s.name}, {"seconds", s.seconds}});
  j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& o : m.outputs)
    j["outputs"].push_back({{"file", o.file}, {"sha256", o.sha256}, {"rows", o.rows}});
  j["assertions"] = nlohmann::ordered_json::array();
  for (const auto& a : m.assertions)
    j["assertions"].push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
  if (m.error)
    j["error"] = {{"stage", m.error->stage}, {"kind", m.error->kind}, {"message", m.error->message}};
  else
    j["error"] = nullptr;
  j["exit_code"] = m.exit_code();
  return j.dump(2) + "\n";
}

RunManifest read_manifest(const std::string& path) {
  RunManifest m;
  try {
    auto j = nlohmann::json::parse(read_text(path));
    m.experiment = j.at("experiment");
    m.config_hash = j.at("config_hash");
    m.version = j.at("version");
    m.seed = j.at("seed");
    m.output_dir = j.at("output_dir");
    m.started_at = j.at("started_at");
    for (const auto& s : j.at("stages")) m.stages.push_back({s.at("name"), s.at("seconds")});
    for (const auto& o : j.at("outputs")) m.outputs.push_back({o.at("file"), o.at("sha256"), o.at("rows")});
    for (const auto& a : j.at("assertions"))
      m.assertions.push_back({a.at("name"), a.at("passed"), a.at("detail")});
    if (!j.at("error").is_null())
      m.error = ErrorRecord{j["error"].at("stage"), j["error"].at("kind"), j["error"].at("message")};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, "malformed manifest " + path + ": " + e.what());
  }
  return m;
}

VerifyResult verify(const std::string& manifest_path) {
  RunManifest m = read_manifest(manifest_path);
  fs::path dir = fs::path(manifest_path).parent_path();
  VerifyResult r;
  for (const auto& o : m.outputs) {
    fs::path p = dir / o.file;
    if (!fs::exists(p)) {
      r.ok = false;
      r.problems.push_back(o.file + ": missing");
      continue;
    }
    if (sha256_hex(read_text(p.string())) != o.sha256) {
      r.ok = false;
      r.problems.push_back(o.file + ": checksum mismatch");
    }
  }
  return r;
}

// ====================================================================
// Runner
// ====================================================================

namespace {

struct StageAbort {};

class Runner {
 public:
  explicit Runner(const ExperimentConfig& c) : cfg(c), dir(c.output) {
    m.experiment = c.experiment;
    m.config_hash = sha256_hex(c.canonical);
    m.version = DNLAB_VERSION;
    m.seed = c.seed;
    m.output_dir = dir.string();
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    m.started_at = os.str();
  }

  void stage(const std::string& name, const std::function<void()>& fn) {
    auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const LabError& e) {
      m.error = ErrorRecord{name, error_kind_name(e.kind()), e.what()};
    } catch (const std::exception& e) {
      m.error = ErrorRecord{name, "runtime", e.what()};
    }
    double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.stages.push_back({name, s});
    if (m.error) throw StageAbort{};
  }

  void emit(const std::string& file, const CsvTable& t) {
    std::string text = t.str();
    write_text((dir / file).string(), text);
    m.outputs.push_back({file, sha256_hex(text), t.rows()});
  }

  void check(const std::string& name, bool passed, const std::string& detail) {
    m.assertions.push_back({name, passed, detail});
  }

  const ExperimentConfig& cfg;
  fs::path dir;
  RunManifest m;
};

std::string num(double v) { return format_number(v); }

std::string label(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

PotentialSpec need(const std::optional<PotentialSpec>& p, const char* key) {
  if (!p) fail(ErrorKind::Config, std::string("missing potential '") + key + "'");
  return *p;
}

OperatorPtr make_op(const PotentialSpec& spec, const GridPtr& g) {
  return assemble(sample_potential(spec, g), g);
}

BoundaryField random_boundary(const GridPtr& g, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  auto f = BoundaryField::zeros(g);
  for (int s = 0; s < g->boundary_count(); ++s) {
    double re = nd(rng);
    f.values[s] = cplx(re, nd(rng));
  }
  return f;
}

double rel_l2(const ScalarField& a, const ScalarField& b) {
  ScalarField d = a;
  d.values -= b.values;
  double nb = norm(b, NormKind::l2());
  return nb > 0 ? norm(d, NormKind::l2()) / nb : norm(d, NormKind::l2());
}

// --------------------------------------------------------------------

void run_forward(Runner& r) {
  const auto& c = r.cfg;
  GridPtr g;
  OperatorPtr op;
  SpectralData spec;
  r.stage("assemble", [&] {
    g = build_grid(c.N);
    op = make_op(need(c.potential, "potential"), g);
  });
  r.stage("eigendecompose", [&] {
    int count = c.eigen_count > 0 ? c.eigen_count
                                  : (c.N <= 16 ? g->interior_count() : std::min(210, g->interior_count()));
    spec = eigendecompose(*op, count);
  });
  r.stage("export", [&] {
    CsvTable t({"k", "lambda"});
    for (int k = 0; k < spec.count(); ++k) t.add_row(std::vector<double>{double(k + 1), spec.values[k]});
    r.emit("spectral.csv", t);
    const int kmin = c.weyl_window[0], kmax = c.weyl_window[1];
    if (spec.count() >= kmax) {
      double slope = weyl_fit(spec, kmin, kmax);
      CsvTable w({"kmin", "kmax", "slope"});
      w.add_row(std::vector<double>{double(kmin), double(kmax), slope});
      r.emit("weyl.csv", w);
      r.check("weyl slope 2/3 +- 0.15", std::abs(slope - 2.0 / 3) <= 0.15, "slope " + num(slope));
    }
  });
}

void run_dn(Runner& r) {
  const auto& c = r.cfg;
  GridPtr g = build_grid(c.N);
  OperatorPtr A, B;
  std::optional<DnMatrix> dA, dB;
  r.stage("assemble", [&] {
    A = make_op(need(c.potential, "potential"), g);
    B = make_op(need(c.potential_b, "potential_b"), g);
    dA = assemble_dn(A, c.lambda, DnMode::Dense);
    dB = assemble_dn(B, c.lambda, DnMode::Dense);
  });
  r.stage("identity", [&] {
    std::mt19937_64 rng(c.seed);
    CsvTable t({"sample", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "error"});
    double worst = 0;
    for (int s = 0; s < c.samples; ++s) {
      auto f = random_boundary(g, rng), ft = random_boundary(g, rng);
      auto u = solve_dirichlet(*A, c.lambda, f);
      auto ut = solve_dirichlet(*B, std::conj(cplx(c.lambda)), ft);
      ScalarField d = u;
      d.values = (B->potential() - A->potential()).cast<cplx>().cwiseProduct(u.values);
      cplx lhs = volume_inner(d, ut);
      BoundaryField gap{g, dB->apply(f.values) - dA->apply(f.values)};
      cplx rhs = boundary_inner(gap, ft);
      double err = std::abs(lhs - rhs) / (1 + std::abs(lhs));
      worst = std::max(worst, err);
      t.add_row(std::vector<double>{double(s), lhs.real(), lhs.imag(), rhs.real(), rhs.imag(), err});
    }
    r.emit("identity.csv", t);
    r.check("integral identity <= 1e-10 (1 + |lhs|)", worst <= 1e-10, "worst " + num(worst));
  });
  r.stage("gap", [&] {
    CsvTable t({"lambda", "gap", "modal_gap", "smoothing_index"});
    double gap = A->fingerprint() == B->fingerprint() ? 0.0 : dn_gap_norm(*dA, *dB);
    double modal = modal_gap_norm(*dA, *dB, 0.5, -0.5);
    t.add_row(std::vector<double>{c.lambda, gap, modal, smoothing_index(*dA, *dB)});
    r.emit("dn_summary.csv", t);
  });
}

void run_cgo_decay(Runner& r) {
  const auto& c = r.cfg;
  GridPtr g;
  OperatorPtr op;
  r.stage("assemble", [&] {
    g = build_grid(c.N);
    op = make_op(need(c.potential, "potential"), g);
  });
  std::vector<double> hs, l2;
  CsvTable t({"h", "rho", "l2", "h1", "h1_scl", "residual"});
  r.stage("solve", [&] {
    for (double h : c.hs) {
      FrequencyProbe p = mode_probe(c.k, h);
      CgoSolution s = cgo_solve(*op, p, 1, CgoBranch::Primary);
      t.add_row(std::vector<double>{p.h, p.rho, s.v_norms.l2, s.v_norms.h1, s.v_norms.h1_scl, s.residual});
      hs.push_back(p.h);
      l2.push_back(s.v_norms.l2);
    }
  });
  r.stage("export", [&] {
    r.emit("cgo_decay.csv", t);
    bool degenerate = std::all_of(l2.begin(), l2.end(), [](double v) { return v == 0; });
    double slope = degenerate ? 0.0 : loglog_slope(hs, l2);
    CsvTable s({"slope"});
    s.add_row(std::vector<double>{slope});
    r.emit("cgo_slope.csv", s);
    if (!degenerate)
      r.check("remainder slope in [" + label(c.slope_min) + ", " + label(c.slope_max) + "]",
              slope >= c.slope_min && slope <= c.slope_max, "slope " + num(slope));
  });
}

void run_reconstruct(Runner& r) {
  const auto& c = r.cfg;
  GridPtr g = build_grid(c.N);
  std::optional<DnMatrix> dA, dB;
  Reconstruction rec;
  r.stage("assemble", [&] {
    dA = assemble_dn(make_op(need(c.potential, "potential"), g), 0.0);
    dB = assemble_dn(make_op(need(c.potential_b, "potential_b"), g), 0.0);
  });
  r.stage("estimate", [&] {
    ReconstructOptions o;
    o.correction = c.correction ? Correction::On : Correction::Off;
    o.h = c.h;
    rec = reconstruct(*dA, *dB, std::pow(c.cutoff, 3), o);
  });
  r.stage("export", [&] {
    ScalarField W = dA->op()->potential_field();
    W.values -= dB->op()->potential_field().values;
    auto band = band_limited(W, frequency_lattice(c.cutoff));
    double e_band = rel_l2(rec.field, band), e_full = rel_l2(rec.field, W);
    double worst = 0;
    for (const auto& m : rec.modes)
      worst = std::max(worst, std::abs(m.estimate - m.truth) / (1 + std::abs(m.truth)));
    write_modes_csv(rec.modes, (r.dir / "modes.csv").string());
    CsvTable t({"cutoff", "modes", "rel_error_band", "rel_error_full", "max_mode_error"});
    t.add_row(std::vector<double>{c.cutoff, double(rec.modes.size()), e_band, e_full, worst});
    r.emit("reconstruction.csv", t);
    // modes.csv was written by the module; checksum it like the rest
    std::string text = read_text((r.dir / "modes.csv").string());
    r.m.outputs.push_back({"modes.csv", sha256_hex(text), rec.modes.size()});
    if (c.correction)
      r.check("corrected modes match fourier_mode to 1e-8", worst <= 1e-8, "worst " + num(worst));
    else
      r.check("relative error against the band-limited field <= " + label(c.max_rel_error),
              e_band <= c.max_rel_error, "error " + num(e_band));
  });
}

void run_stability(Runner& r) {
  const auto& c = r.cfg;
  StabilityResult res;
  r.stage("experiment", [&] {
    std::vector<PotentialPair> pairs;
    PotentialSpec base = need(c.potential, "potential"), pert = need(c.potential_b, "potential_b");
    for (double s : c.scales) pairs.push_back({base, pert.scaled(s)});
    res = stability_experiment(pairs, c.sigma, c.N);
  });
  r.stage("export", [&] {
    CsvTable t({"scale", "gap", "l2_diff", "psi", "c_fit"});
    bool bound = true, increasing = true;
    for (size_t i = 0; i < res.reports.size(); ++i) {
      const auto& s = res.reports[i];
      t.add_row(std::vector<double>{c.scales[i], s.gap, s.l2_diff, s.psi_value, s.fitted_c});
      bound = bound && res.fitted_c * s.l2_diff <= s.psi_value * (1 + 1e-12);
      if (i > 0) increasing = increasing && s.gap > res.reports[i - 1].gap;
    }
    r.emit("stability.csv", t);
    r.check("fitted C |V - V~| <= Psi(gap) at every point", bound, "C " + num(res.fitted_c));
    r.check("gap strictly increasing along the family", increasing, "");
  });
}

void run_borg_levinson(Runner& r) {
  const auto& c = r.cfg;
  GridPtr g = build_grid(c.N);
  OperatorPtr op;
  std::optional<BoundarySpectralData> bsd;
  r.stage("spectrum", [&] {
    op = make_op(need(c.potential, "potential"), g);
    auto spec = std::make_shared<const SpectralData>(eigendecompose(*op, g->interior_count()));
    bsd = boundary_spectral_data(spec, op);
  });
  r.stage("series", [&] {
    CsvTable s({"k", "lambda", "psi_norm"});
    for (int k = 0; k < bsd->count(); ++k)
      s.add_row(std::vector<double>{double(k + 1), bsd->spectrum->values[k], bsd->psi_norms[k]});
    r.emit("spectral_data.csv", s);
    std::mt19937_64 rng(c.seed);
    CsvTable t({"m", "lambda", "residual"});
    double worst = 0;
    for (double lam : c.lambdas)
      for (int m : c.orders) {
        double res = 0;
        for (int i = 0; i < c.samples; ++i) {
          auto f = random_boundary(g, rng);
          CVec ref = dn_derivative_direct(*op, lam, m, f).values;
          CVec ser = dn_derivative_series(*bsd, lam, m, f).values;
          res = std::max(res, (ser - ref).norm() / ref.norm());
        }
        worst = std::max(worst, res);
        t.add_row(std::vector<double>{double(m), lam, res});
      }
    r.emit("series_check.csv", t);
    r.check("full-basis series residual <= " + label(c.tolerance), worst <= c.tolerance, "worst " + num(worst));
  });
  if (!c.tail_terms.empty())
    r.stage("tail", [&] {
      std::mt19937_64 rng(mix_seed(c.seed, 3));
      auto f = random_boundary(g, rng);
      const int m = 3;
      SeriesOptions all;
      all.local_term = false;
      CVec full = dn_derivative_series(*bsd, 0.0, m, f, all).values;
      std::vector<double> Ks, tails;
      CsvTable t({"terms", "tail"});
      for (int K : c.tail_terms) {
        SeriesOptions o = all;
        o.terms = K;
        double tail = (full - dn_derivative_series(*bsd, 0.0, m, f, o).values).norm();
        Ks.push_back(K);
        tails.push_back(tail);
        t.add_row(std::vector<double>{double(K), tail});
      }
      r.emit("tail.csv", t);
      double slope = loglog_slope(Ks, tails);
      r.check("m=3 tail slope -4/3 +- 0.3", std::abs(slope + 4.0 / 3) <= 0.3, "slope " + num(slope));
    });
  if (!c.mus.empty())
    r.stage("large-mu", [&] {
      auto B = make_op(need(c.potential_b, "potential_b"), g);
      auto gaps = large_mu_gap(op, B, c.mus);
      CsvTable t({"mu", "gap"});
      bool decreasing = true;
      for (size_t i = 0; i < gaps.size(); ++i) {
        t.add_row(std::vector<double>{gaps[i].mu, gaps[i].gap});
        if (i > 0) decreasing = decreasing && gaps[i].gap < gaps[i - 1].gap;
      }
      r.emit("mu_gap.csv", t);
      if (gaps.front().gap > 0) {
        double e = mu_decay_exponent(gaps);
        r.check("large-mu gap strictly decreasing", decreasing, "");
        r.check("large-mu decay exponent >= 0.15", e >= 0.15, "exponent " + num(e));
      }
    });
}

void run_s_limit(Runner& r) {
  const auto& c = r.cfg;
  GridPtr g = build_grid(c.N);
  std::vector<SLimitPoint> pts;
  r.stage("evaluate", [&] {
    auto A = make_op(need(c.potential, "potential"), g);
    auto B = make_op(need(c.potential_b, "potential_b"), g);
    pts = s_limit_check(A, B, c.xi, c.ks);
  });
  r.stage("export", [&] {
    CsvTable t({"k", "diff_re", "diff_im", "target_re", "target_im", "error"});
    bool decreasing = true;
    double prev = INFINITY, last = 0;
    for (const auto& p : pts) {
      double err = std::abs(p.difference - p.target);
      t.add_row(std::vector<double>{p.k, p.difference.real(), p.difference.imag(), p.target.real(),
                                    p.target.imag(), err});
      decreasing = decreasing && err < prev;
      prev = last = err;
    }
    r.emit("s_limit.csv", t);
    double target = pts.empty() ? 0.0 : std::abs(pts.back().target);
    if (target > 0) {
      r.check("S-limit error decreasing in k", decreasing, "");
      r.check("final S-limit error <= " + label(c.max_rel_gap) + " |target|", last <= c.max_rel_gap * target,
              "relative " + num(last / target));
    }
  });
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config) {
  Runner r(config);
  std::error_code ec;
  fs::create_directories(r.dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory " + r.dir.string() + ": " + ec.message());
  static const std::map<std::string, void (*)(Runner&)> table = {
      {"forward", run_forward},         {"dn", run_dn},
      {"cgo-decay", run_cgo_decay},     {"reconstruct", run_reconstruct},
      {"stability", run_stability},     {"borg-levinson", run_borg_levinson},
      {"s-limit", run_s_limit},
  };
  try {
    table.at(config.experiment)(r);
  } catch (const StageAbort&) {
  }
  write_text((r.dir / kManifestName).string(), manifest_json(r.m));
  return r.m;
}

RunManifest run(const std::string& config_path, const Overrides& overrides) {
  return run_experiment(load_config(config_path, overrides));
}

}  // namespace dnlab
