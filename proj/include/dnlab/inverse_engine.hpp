#pragma once

/// Fourier-mode recovery of W = V - V~ from DN data through paired CGO
/// solutions, low-pass synthesis, and the log-stability experiment.

#include <vector>

#include "dnlab/cgo_probe.hpp"
#include "dnlab/dn_map.hpp"

namespace dnlab {

/// |ln r|^{-theta} + r, extended by 0 at r = 0
double psi(double theta, double r);

enum class Correction { On, Off };

struct ModeEstimate {
  Vec3 k;
  cplx estimate;
  cplx truth;  // fourier_mode(V - V~, k)
  double rho = 0;
  double h = 0;
  cplx pairing;     // <(A - B) g, g~> (bilinear)
  cplx correction;  // integral of W (v + v~ + v v~) e^{-ik.x}, zero when off
  double remainder_bound = 0;  // integral of |W| |v + v~ + v v~|
};

/// solA: sign +1, primary branch; solB: sign -1, paired branch, both from `probe`.
/// With the correction on, solA and solB must solve with the potentials of A and B.
ModeEstimate estimate_mode(const DnMatrix& A, const DnMatrix& B, const FrequencyProbe& probe,
                           const CgoSolution& solA, const CgoSolution& solB,
                           Correction correction = Correction::On);

/// the probe used for frequency k at semiclassical parameter h (h is lowered
/// when |k|/2 leaves no room for rho > 0)
FrequencyProbe mode_probe(const Vec3& k, double h);

/// 2*pi*Z^3 points with |k| <= radius, ordered by |k| then lexicographically
std::vector<Vec3> frequency_lattice(double radius);

struct ReconstructOptions {
  Correction correction = Correction::Off;  // Off: plane-wave CGOs, no access to V
  double h = 0.15;
  std::vector<Vec3> lattice;  // empty: every 2*pi*Z^3 point with |k| <= rho^{1/3}
};

struct Reconstruction {
  ScalarField field;
  std::vector<ModeEstimate> modes;
};

/// sum of estimated modes e^{ik.x} over the lattice, |k| <= rho^{1/3}
Reconstruction reconstruct(const DnMatrix& A, const DnMatrix& B, double rho,
                           const ReconstructOptions& opts = {});

/// sum of exact modes fourier_mode(W, k) e^{ik.x}
ScalarField band_limited(const ScalarField& W, const std::vector<Vec3>& lattice);

/// c = 1 + max |x| over the cube
inline constexpr double kEnvelopeC = 2.7320508075688772;
inline constexpr double kMaxCutoff = 1.0 / kMinH;
inline constexpr double kMinCutoff = 1.0 / kMaxH;

struct CutoffChoice {
  double rho = 0;
  double decay_term = 0;   // rho^{-beta}
  double growth_term = 0;  // gap * e^{c rho}
  double bound = 0;
  bool too_noisy = false;  // gap >= e^{-1}: cutoff collapsed to kMinCutoff
};

CutoffChoice choose_cutoff(double gap, double beta = 0.5, double c = kEnvelopeC);

struct PotentialPair {
  PotentialSpec a;
  PotentialSpec b;
};

struct StabilityReport {
  std::string fingerprint_a;
  std::string fingerprint_b;
  double gap = 0;
  double l2_diff = 0;
  double sigma = 0;
  double beta = 0;
  CutoffChoice cutoff;
  double psi_value = 0;
  double fitted_c = 0;
};

struct StabilityResult {
  std::vector<StabilityReport> reports;  // input order
  double fitted_c = 0;  // largest C with C |V - V~| <= psi for every pair
};

StabilityResult stability_experiment(const std::vector<PotentialPair>& pairs, double sigma, int N,
                                     GapOptions gap = {});

void write_modes_csv(const std::vector<ModeEstimate>& modes, const std::string& path);
void write_stability_csv(const StabilityResult& result, const std::string& path);

}  // namespace dnlab
