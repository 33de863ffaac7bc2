#pragma once

/// CGO frequency geometry, numerical CGO solutions on an enlarged box, and
/// eikonal validators for limiting Carleman weights.

#include <optional>

#include "dnlab/forward_solver.hpp"

namespace dnlab {

using CVec3 = Eigen::Vector3cd;

struct FrequencyProbe {
  Vec3 k;
  Vec3 k_tilde;  // |k_tilde| = rho, orthogonal to k and xi
  Vec3 xi;       // unit
  double rho = 0;
  double h = 0;  // 1 / sqrt(|k|^2/4 + rho^2)
  Vec3 zeta;        // h (k/2 + k_tilde)
  Vec3 zeta_tilde;  // h (k/2 - k_tilde)
};

/// xi is Gram-Schmidt of the canonical basis vector least aligned with k,
/// k_tilde points along k x xi. With k = 0 a direction hint for xi is required.
FrequencyProbe make_probe(const Vec3& k, double rho, std::optional<Vec3> xi_hint = std::nullopt);

/// semiclassical window in which cgo_solve is declared well conditioned
inline constexpr double kMinH = 0.08;
inline constexpr double kMaxH = 0.6;

/// Primary: oscillation zeta; Paired: oscillation zeta_tilde.
enum class CgoBranch { Primary, Paired };

/// Complex frequencies a (primary, decay s*xi) and a_t (paired, decay -s*xi) of
/// the leading exponentials e^{a.x}. They are the continuum values
/// -(s xi + i zeta)/h, -(-s xi + i zeta_tilde)/h moved by the smallest common
/// correction that makes both plane waves exactly harmonic for the 7-point
/// Laplacian at spacing dx, keeping a + a_t = -i k exactly.
struct PhasePair {
  CVec3 a;
  CVec3 a_tilde;
};
PhasePair discrete_phases(const FrequencyProbe& probe, int sign, double dx);

struct CgoNorms {
  double l2 = 0;
  double h1 = 0;
  double h1_scl = 0;  // (|v|^2 + h^2 |grad v|^2)^{1/2}
};

struct CgoSolution {
  FrequencyProbe probe;
  int sign = 1;
  CgoBranch branch = CgoBranch::Primary;
  CVec3 phase;     // leading exponential e^{phase . x}
  ScalarField u;   // total field on the grid
  ScalarField v;   // u = e^{phase.x} (1 + v)
  ScalarField w;   // conjugated unknown, v = e^{-i Im(phase).x} w
  CgoNorms v_norms;
  double residual = 0;      // max interior |(-Delta_h + V) u| relative to stencil size
  std::string fingerprint;  // potential used
};

/// Minimum-norm solution w of the conjugated equation at the interior nodes of
/// (-1/4, 5/4)^3 (N must be divisible by 4), restricted to the unit cube.
CgoSolution cgo_solve(const DiscreteOperator& op, const FrequencyProbe& probe, int sign,
                      CgoBranch branch = CgoBranch::Primary);

/// leading exponential alone (the V = 0 solution), without a solve
CgoSolution cgo_plane_wave(const GridPtr& grid, const FrequencyProbe& probe, int sign,
                           CgoBranch branch = CgoBranch::Primary);

struct ProbeTrace {
  BoundaryField g;
  double hhalf = 0;        // quotient H^{1/2} norm of g
  double envelope_c = 0;   // 1 + max |x| over the cube
  double log_bound = 0;    // envelope_c / h
};

ProbeTrace probe_traces(const CgoSolution& sol);

// ---------------------------------------------------------------- eikonal

enum class PhaseKind { Linear, Log, Coordinate, Radial };

struct PhaseSpec {
  PhaseKind kind = PhaseKind::Linear;
  Vec3 direction{1, 0, 0};  // linear: x.direction; radial: axis direction
  Vec3 point{0, 0, 0};      // log: singular point; radial: a point on the axis
  int axis = 0;             // coordinate

  static PhaseSpec linear(const Vec3& d) { return {PhaseKind::Linear, d, {0, 0, 0}, 0}; }
  static PhaseSpec log(const Vec3& x0) { return {PhaseKind::Log, {1, 0, 0}, x0, 0}; }
  static PhaseSpec coordinate(int axis) { return {PhaseKind::Coordinate, {1, 0, 0}, {0, 0, 0}, axis}; }
  static PhaseSpec radial(const Vec3& point, const Vec3& d) { return {PhaseKind::Radial, d, point, 0}; }

  double value(const Vec3& x) const;
};

struct EikonalReport {
  double norm_residual = 0;  // max | |grad phi|^2 - |grad psi|^2 |
  double dot_residual = 0;   // max | grad phi . grad psi |
  double max_residual() const { return std::max(norm_residual, dot_residual); }
};

/// central-difference residuals of the limiting-weight conditions at interior nodes
EikonalReport eikonal_check(const PhaseSpec& phi, const PhaseSpec& psi, int N = 32);

}  // namespace dnlab
