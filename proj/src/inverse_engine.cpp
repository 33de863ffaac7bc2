#include "dnlab/inverse_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dnlab/io.hpp"

namespace dnlab {

double psi(double theta, double r) {
  if (!(theta > 0)) fail(ErrorKind::Domain, "psi needs theta > 0");
  if (!(r >= 0) || !std::isfinite(r)) fail(ErrorKind::Domain, "psi needs r >= 0");
  if (r == 0) return 0;
  if (r == 1) fail(ErrorKind::Domain, "psi is singular at r = 1");
  return std::pow(std::abs(std::log(r)), -theta) + r;
}

namespace {

bool same_probe(const FrequencyProbe& a, const FrequencyProbe& b) {
  return a.k == b.k && a.xi == b.xi && a.zeta == b.zeta && a.zeta_tilde == b.zeta_tilde && a.h == b.h;
}

ScalarField difference(const DnMatrix& A, const DnMatrix& B) {
  ScalarField W = A.op()->potential_field();
  W.values -= B.op()->potential_field().values;
  return W;
}

}  // namespace

ModeEstimate estimate_mode(const DnMatrix& A, const DnMatrix& B, const FrequencyProbe& probe,
                           const CgoSolution& solA, const CgoSolution& solB, Correction correction) {
  check_compatible(A, B);
  check_same_grid(A.grid(), solA.u.grid, "mode estimate");
  check_same_grid(A.grid(), solB.u.grid, "mode estimate");
  if (!same_probe(probe, solA.probe) || !same_probe(probe, solB.probe))
    fail(ErrorKind::Mismatch, "CGO solutions were built from a different probe");
  if (solA.sign != 1 || solA.branch != CgoBranch::Primary || solB.sign != -1 ||
      solB.branch != CgoBranch::Paired)
    fail(ErrorKind::Mismatch, "mode estimate needs (+xi, zeta) and (-xi, zeta~) solutions");
  if (correction == Correction::On &&
      (solA.fingerprint != A.fingerprint() || solB.fingerprint != B.fingerprint()))
    fail(ErrorKind::Mismatch, "corrected estimate needs CGOs of the DN potentials");

  ModeEstimate m;
  m.k = probe.k;
  m.rho = probe.rho;
  m.h = probe.h;
  BoundaryField g = gamma0(solA.u), gt = gamma0(solB.u);
  BoundaryField d = A.apply(g);
  d.values -= B.apply(g).values;
  m.pairing = boundary_bilinear(d, gt);

  ScalarField W = difference(A, B);
  m.truth = fourier_mode(W, probe.k);
  ScalarField z = ScalarField::zeros(A.grid());
  const CVec& v = solA.v.values;
  const CVec& vt = solB.v.values;
  z.values = W.values.cwiseProduct(v + vt + v.cwiseProduct(vt));
  m.remainder_bound = A.grid()->volume_weights().dot(z.values.cwiseAbs());
  m.correction = correction == Correction::On ? fourier_mode(z, probe.k) : cplx(0);
  m.estimate = m.pairing - m.correction;
  return m;
}

FrequencyProbe mode_probe(const Vec3& k, double h) {
  const double kn = k.norm();
  if (kn / 2 >= 0.95 / h) h = 0.95 * 2 / kn;
  double rho = std::sqrt(1 / (h * h) - kn * kn / 4);
  if (kn == 0) return make_probe(k, rho, Vec3(1, 0, 0));
  return make_probe(k, rho);
}

std::vector<Vec3> frequency_lattice(double radius) {
  if (!(radius >= 0)) fail(ErrorKind::Domain, "lattice radius must be nonnegative");
  const double tp = 2 * std::numbers::pi;
  const int m = static_cast<int>(std::floor(radius / tp + 1e-12));
  std::vector<Vec3> out;
  for (int a = -m; a <= m; ++a)
    for (int b = -m; b <= m; ++b)
      for (int c = -m; c <= m; ++c) {
        Vec3 k = tp * Vec3(a, b, c);
        if (k.norm() <= radius * (1 + 1e-12)) out.push_back(k);
      }
  std::stable_sort(out.begin(), out.end(),
                   [](const Vec3& x, const Vec3& y) { return x.squaredNorm() < y.squaredNorm() - 1e-9; });
  return out;
}

namespace {

void add_mode(ScalarField& out, const Vec3& k, cplx coeff) {
  const Grid3& g = *out.grid;
  for (int n = 0; n < g.node_count(); ++n) {
    double ph = k.dot(g.coord(n));
    out.values[n] += coeff * cplx(std::cos(ph), std::sin(ph));
  }
}

}  // namespace

Reconstruction reconstruct(const DnMatrix& A, const DnMatrix& B, double rho,
                           const ReconstructOptions& opts) {
  check_compatible(A, B);
  if (!(rho > 0)) fail(ErrorKind::Domain, "cutoff must be positive");
  const double radius = std::cbrt(rho);
  std::vector<Vec3> lattice = opts.lattice.empty() ? frequency_lattice(radius) : opts.lattice;
  if (lattice.empty()) fail(ErrorKind::Domain, "empty frequency lattice");
  const double tp = 2 * std::numbers::pi;
  for (const Vec3& k : lattice) {
    Vec3 q = k / tp;
    if ((q - q.array().round().matrix()).norm() > 1e-9)
      fail(ErrorKind::Domain, "lattice frequencies must be 2*pi times integers");
    if (k.norm() > radius * (1 + 1e-12)) fail(ErrorKind::Domain, "lattice frequency beyond cutoff");
  }

  Reconstruction rec;
  rec.field = ScalarField::zeros(A.grid());
  for (const Vec3& k : lattice) {
    FrequencyProbe p = mode_probe(k, opts.h);
    ModeEstimate m;
    if (opts.correction == Correction::On) {
      auto ua = cgo_solve(*A.op(), p, 1, CgoBranch::Primary);
      auto ub = cgo_solve(*B.op(), p, -1, CgoBranch::Paired);
      m = estimate_mode(A, B, p, ua, ub, Correction::On);
    } else {
      auto ua = cgo_plane_wave(A.grid(), p, 1, CgoBranch::Primary);
      auto ub = cgo_plane_wave(A.grid(), p, -1, CgoBranch::Paired);
      m = estimate_mode(A, B, p, ua, ub, Correction::Off);
    }
    add_mode(rec.field, k, m.estimate);
    rec.modes.push_back(m);
  }
  return rec;
}

ScalarField band_limited(const ScalarField& W, const std::vector<Vec3>& lattice) {
  ScalarField out = ScalarField::zeros(W.grid);
  for (const Vec3& k : lattice) add_mode(out, k, fourier_mode(W, k));
  return out;
}

CutoffChoice choose_cutoff(double gap, double beta, double c) {
  if (!(gap >= 0) || !std::isfinite(gap)) fail(ErrorKind::Domain, "gap must be finite and nonnegative");
  if (!(beta > 0) || !(c > 0)) fail(ErrorKind::Domain, "cutoff rule needs beta > 0 and c > 0");
  CutoffChoice out;
  if (gap >= std::exp(-1.0)) {
    out.too_noisy = true;
    out.rho = kMinCutoff;
  } else if (gap == 0) {
    out.rho = kMaxCutoff;
  } else {
    out.rho = std::min(kMaxCutoff, std::abs(std::log(gap)) / (2 * c));
  }
  out.decay_term = std::pow(out.rho, -beta);
  out.growth_term = gap * std::exp(c * out.rho);
  out.bound = out.decay_term + out.growth_term;
  return out;
}

StabilityResult stability_experiment(const std::vector<PotentialPair>& pairs, double sigma, int N,
                                     GapOptions gap_opts) {
  if (!(sigma > 0)) fail(ErrorKind::Domain, "smoothness tag sigma must be positive");
  const double beta = std::min(0.5, sigma / 3);
  GridPtr grid = build_grid(N);
  StabilityResult res;
  for (const auto& pr : pairs) {
    ScalarField Va = sample_potential(pr.a, grid), Vb = sample_potential(pr.b, grid);
    auto A = assemble_dn(assemble(Va, grid), 0.0);
    auto B = assemble_dn(assemble(Vb, grid), 0.0);
    StabilityReport r;
    r.fingerprint_a = A.fingerprint();
    r.fingerprint_b = B.fingerprint();
    r.sigma = sigma;
    r.beta = beta;
    r.gap = r.fingerprint_a == r.fingerprint_b ? 0.0 : dn_gap_norm(A, B, gap_opts);
    ScalarField W = Va;
    W.values -= Vb.values;
    r.l2_diff = norm(W, NormKind::l2());
    r.psi_value = psi(beta, r.gap);
    r.cutoff = choose_cutoff(r.gap, beta);
    res.reports.push_back(r);
  }
  double C = INFINITY;
  for (const auto& r : res.reports)
    if (r.l2_diff > 0) C = std::min(C, r.psi_value / r.l2_diff);
  res.fitted_c = std::isfinite(C) ? C : 0.0;
  for (auto& r : res.reports) r.fitted_c = res.fitted_c;
  return res;
}

void write_modes_csv(const std::vector<ModeEstimate>& modes, const std::string& path) {
  CsvTable t({"k1", "k2", "k3", "est_re", "est_im", "true_re", "true_im", "rho", "h"});
  for (const auto& m : modes)
    t.add_row(std::vector<double>{m.k[0], m.k[1], m.k[2], m.estimate.real(), m.estimate.imag(),
                                  m.truth.real(), m.truth.imag(), m.rho, m.h});
  t.write(path);
}

void write_stability_csv(const StabilityResult& result, const std::string& path) {
  CsvTable t({"pair", "gap", "l2_diff", "psi", "c_fit"});
  for (const auto& r : result.reports)
    t.add_row(std::vector<std::string>{r.fingerprint_a + ":" + r.fingerprint_b, format_number(r.gap),
                                       format_number(r.l2_diff), format_number(r.psi_value),
                                       format_number(r.fitted_c)});
  t.write(path);
}

}  // namespace dnlab
