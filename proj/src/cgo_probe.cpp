#include "dnlab/cgo_probe.hpp"

#include <Eigen/Geometry>
#include <Eigen/QR>
#include <cmath>
#include <numbers>

namespace dnlab {

FrequencyProbe make_probe(const Vec3& k, double rho, std::optional<Vec3> xi_hint) {
  if (!(rho > 0) || !std::isfinite(rho)) fail(ErrorKind::Domain, "probe needs rho > 0");
  if (!k.allFinite()) fail(ErrorKind::Domain, "probe frequency is not finite");
  const double kn = k.norm();
  FrequencyProbe p;
  p.k = k;
  p.rho = rho;

  Vec3 khat = kn > 0 ? Vec3(k / kn) : Vec3::Zero();
  Vec3 xi;
  if (xi_hint) {
    xi = *xi_hint - khat * khat.dot(*xi_hint);
    if (xi.norm() < 1e-8 * std::max(1.0, xi_hint->norm()))
      fail(ErrorKind::Domain, "xi hint is parallel to k");
  } else {
    if (kn == 0) fail(ErrorKind::Domain, "k = 0 needs an explicit xi direction");
    int best = 0;
    for (int d = 1; d < 3; ++d)
      if (std::abs(khat[d]) < std::abs(khat[best])) best = d;
    xi = Vec3::Unit(best) - khat * khat[best];
  }
  p.xi = xi.normalized();
  Vec3 t = kn > 0 ? Vec3(khat.cross(p.xi)) : Vec3::Zero();
  if (kn == 0) {
    int best = 0;
    for (int d = 1; d < 3; ++d)
      if (std::abs(p.xi[d]) < std::abs(p.xi[best])) best = d;
    t = Vec3::Unit(best) - p.xi * p.xi[best];
  }
  p.k_tilde = rho * t.normalized();
  p.h = 1.0 / std::sqrt(kn * kn / 4 + rho * rho);
  p.zeta = p.h * (k / 2 + p.k_tilde);
  p.zeta_tilde = p.h * (k / 2 - p.k_tilde);
  return p;
}

namespace {

// symbol of the 7-point Laplacian on e^{z x} along one axis, and its derivative
cplx lap_symbol(cplx z, double dx) {
  cplx s = std::sinh(0.5 * z * dx);
  return 4.0 * s * s / (dx * dx);
}
cplx lap_symbol_d(cplx z, double dx) { return 2.0 * std::sinh(z * dx) / dx; }

cplx symbol(const CVec3& a, double dx) {
  return lap_symbol(a[0], dx) + lap_symbol(a[1], dx) + lap_symbol(a[2], dx);
}

CVec3 to_c(const Vec3& v) { return v.cast<cplx>(); }

const cplx I(0, 1);

}  // namespace

PhasePair discrete_phases(const FrequencyProbe& probe, int sign, double dx) {
  if (sign != 1 && sign != -1) fail(ErrorKind::Domain, "CGO sign must be +1 or -1");
  const double s = sign, h = probe.h;
  CVec3 a0 = -(s * to_c(probe.xi) + I * to_c(probe.zeta)) / h;
  CVec3 b0 = -(-s * to_c(probe.xi) + I * to_c(probe.zeta_tilde)) / h;
  CVec3 delta = CVec3::Zero();
  const double scale = 1.0 / (h * h);
  for (int it = 0; it < 50; ++it) {
    CVec3 a = a0 + delta, b = b0 - delta;
    Eigen::Vector2cd F(symbol(a, dx), symbol(b, dx));
    if (F.norm() <= 1e-13 * scale) return {a, b};
    Eigen::Matrix<cplx, 2, 3> J;
    for (int d = 0; d < 3; ++d) {
      J(0, d) = lap_symbol_d(a[d], dx);
      J(1, d) = -lap_symbol_d(b[d], dx);
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::Matrix<cplx, 2, 3>> cod(J);
    delta -= cod.solve(F);
  }
  fail(ErrorKind::Convergence, "discrete plane-wave phase did not converge");
}

namespace {

CVec3 phase_for(const FrequencyProbe& probe, int sign, CgoBranch branch, double dx) {
  if (branch == CgoBranch::Primary) return discrete_phases(probe, sign, dx).a;
  return discrete_phases(probe, -sign, dx).a_tilde;
}

void check_window(const FrequencyProbe& probe) {
  if (!(probe.h >= kMinH && probe.h <= kMaxH))
    fail(ErrorKind::Conditioning,
         "semiclassical parameter h = " + std::to_string(probe.h) + " outside [" +
             std::to_string(kMinH) + ", " + std::to_string(kMaxH) + "]");
}

// max interior |(-Delta_h + V) u| over the largest stencil magnitude
double relative_residual(const Grid3& g, const RVec& V, const CVec& u) {
  const double inv = 1.0 / (g.dx() * g.dx());
  double worst = 0, scale = 0;
  for (int n : g.interior_nodes()) {
    auto a = g.ijk(n);
    cplx r = (6.0 * inv + V[n]) * u[n];
    double sc = (6.0 * inv + std::abs(V[n])) * std::abs(u[n]);
    for (int d = 0; d < 3; ++d)
      for (int e : {-1, 1}) {
        auto b = a;
        b[d] += e;
        cplx x = u[g.index(b[0], b[1], b[2])];
        r -= inv * x;
        sc += inv * std::abs(x);
      }
    worst = std::max(worst, std::abs(r));
    scale = std::max(scale, sc);
  }
  return scale > 0 ? worst / scale : worst;
}

CgoNorms remainder_norms(const ScalarField& v, double h) {
  CgoNorms out;
  out.l2 = norm(v, NormKind::l2());
  out.h1 = norm(v, NormKind::h1());
  double grad2 = std::max(0.0, (v.values.adjoint() * (v.grid->stiffness() * v.values))(0, 0).real());
  out.h1_scl = std::sqrt(out.l2 * out.l2 + h * h * grad2);
  return out;
}

CgoSolution assemble_solution(const GridPtr& grid, const FrequencyProbe& probe, int sign,
                              CgoBranch branch, const CVec3& a, const CVec& w_omega,
                              const RVec& V, std::string fingerprint) {
  CgoSolution sol;
  sol.probe = probe;
  sol.sign = sign;
  sol.branch = branch;
  sol.phase = a;
  sol.fingerprint = std::move(fingerprint);
  sol.u = ScalarField::zeros(grid);
  sol.v = ScalarField::zeros(grid);
  sol.w = ScalarField::zeros(grid);
  sol.w.values = w_omega;
  const Vec3 alpha = a.real(), beta = a.imag();
  for (int n = 0; n < grid->node_count(); ++n) {
    Vec3 x = grid->coord(n);
    cplx osc = std::exp(I * beta.dot(x));
    sol.v.values[n] = w_omega[n] / osc;
    sol.u.values[n] = std::exp(alpha.dot(x)) * (osc + w_omega[n]);
  }
  sol.v_norms = remainder_norms(sol.v, probe.h);
  sol.residual = relative_residual(*grid, V, sol.u.values);
  return sol;
}

}  // namespace

CgoSolution cgo_plane_wave(const GridPtr& grid, const FrequencyProbe& probe, int sign,
                           CgoBranch branch) {
  check_window(probe);
  CVec3 a = phase_for(probe, sign, branch, grid->dx());
  return assemble_solution(grid, probe, sign, branch, a, CVec::Zero(grid->node_count()),
                           RVec::Zero(grid->node_count()), "zero");
}

CgoSolution cgo_solve(const DiscreteOperator& op, const FrequencyProbe& probe, int sign,
                      CgoBranch branch) {
  check_window(probe);
  const GridPtr& grid = op.grid();
  const int N = grid->N();
  if (N % 4 != 0) fail(ErrorKind::Config, "CGO solve needs N divisible by 4");
  const double dx = grid->dx();
  CVec3 a = phase_for(probe, sign, branch, dx);
  const RVec& V = op.potential();

  if (V.cwiseAbs().maxCoeff() == 0.0)
    return assemble_solution(grid, probe, sign, branch, a, CVec::Zero(grid->node_count()), V,
                             op.fingerprint());

  // enlarged box: node indices -p..N+p; equations at interior box nodes,
  // unknowns on every box node, minimum-norm solution w = P^T (P P^T)^{-1} f
  const int p = N / 4, M = N + 2 * p, n = M - 1, P1 = M + 1;
  auto row = [n](int i, int j, int l) { return ((i - 1) * n + (j - 1)) * n + (l - 1); };
  auto col = [P1](int i, int j, int l) { return (i * P1 + j) * P1 + l; };
  const Vec3 alpha = a.real(), beta = a.imag();
  const double inv = 1.0 / (dx * dx);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(n) * n * n * 7);
  CVec rhs = CVec::Zero(n * n * n);
  for (int i = 1; i < M; ++i)
    for (int j = 1; j < M; ++j)
      for (int l = 1; l < M; ++l) {
        int r = row(i, j, l);
        int o[3] = {i - p, j - p, l - p};
        bool inside = o[0] >= 0 && o[0] <= N && o[1] >= 0 && o[1] <= N && o[2] >= 0 && o[2] <= N;
        double Vn = inside ? V[grid->index(o[0], o[1], o[2])] : 0.0;
        trip.emplace_back(r, col(i, j, l), 6.0 * inv + Vn);
        for (int d = 0; d < 3; ++d)
          for (int e : {-1, 1}) {
            int q[3] = {i, j, l};
            q[d] += e;
            trip.emplace_back(r, col(q[0], q[1], q[2]), -inv * std::exp(e * alpha[d] * dx));
          }
        if (Vn != 0.0) {
          Vec3 x(o[0] * dx, o[1] * dx, o[2] * dx);
          rhs[r] = -Vn * std::exp(I * beta.dot(x));
        }
      }
  SpMat P(n * n * n, P1 * P1 * P1);
  P.setFromTriplets(trip.begin(), trip.end());
  SpMat PT = P.transpose();
  SpMat G = P * PT;
  SpdSparseCholesky chol(G);
  if (!chol.ok()) fail(ErrorKind::Conditioning, "conjugated CGO system is rank deficient");
  CVec w = PT * chol.solve(rhs);
  if (!w.allFinite()) fail(ErrorKind::Conditioning, "conjugated CGO solve produced non-finite values");

  CVec w_omega(grid->node_count());
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j <= N; ++j)
      for (int l = 0; l <= N; ++l) w_omega[grid->index(i, j, l)] = w[col(i + p, j + p, l + p)];
  return assemble_solution(grid, probe, sign, branch, a, w_omega, V, op.fingerprint());
}

ProbeTrace probe_traces(const CgoSolution& sol) {
  const GridPtr& g = sol.u.grid;
  ProbeTrace t;
  t.g = BoundaryField::zeros(g);
  const auto& b = g->boundary_nodes();
  for (size_t s = 0; s < b.size(); ++s) t.g.values[s] = sol.u.values[b[s].node];
  t.hhalf = norm(t.g, NormKind::hhalf());
  t.envelope_c = 1.0 + std::sqrt(3.0);
  t.log_bound = t.envelope_c / sol.probe.h;
  return t;
}

// ---------------------------------------------------------------- eikonal

double PhaseSpec::value(const Vec3& x) const {
  switch (kind) {
    case PhaseKind::Linear:
      return x.dot(direction);
    case PhaseKind::Log:
      return std::log((x - point).norm());
    case PhaseKind::Coordinate:
      return x[axis];
    case PhaseKind::Radial: {
      Vec3 d = direction.normalized();
      Vec3 r = x - point;
      return (r - d * d.dot(r)).norm();
    }
  }
  fail(ErrorKind::Domain, "unknown phase kind");
}

namespace {

bool in_closed_cube(const Vec3& x) { return (x.array() >= 0.0).all() && (x.array() <= 1.0).all(); }

// slab test of the infinite line point + t*dir against [0,1]^3
bool line_meets_cube(const Vec3& point, const Vec3& dir) {
  double lo = -INFINITY, hi = INFINITY;
  for (int d = 0; d < 3; ++d) {
    if (dir[d] == 0.0) {
      if (point[d] < 0.0 || point[d] > 1.0) return false;
      continue;
    }
    double t0 = (0.0 - point[d]) / dir[d], t1 = (1.0 - point[d]) / dir[d];
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  return lo <= hi;
}

void check_phase(const PhaseSpec& s) {
  switch (s.kind) {
    case PhaseKind::Linear:
      if (s.direction.norm() == 0) fail(ErrorKind::Domain, "linear phase needs a direction");
      break;
    case PhaseKind::Log:
      if (in_closed_cube(s.point)) fail(ErrorKind::Domain, "log phase is singular inside the domain");
      break;
    case PhaseKind::Coordinate:
      if (s.axis < 0 || s.axis > 2) fail(ErrorKind::Domain, "coordinate axis must be 0, 1 or 2");
      break;
    case PhaseKind::Radial:
      if (s.direction.norm() == 0) fail(ErrorKind::Domain, "radial phase needs an axis direction");
      if (line_meets_cube(s.point, s.direction))
        fail(ErrorKind::Domain, "radial phase axis meets the domain");
      break;
  }
}

}  // namespace

EikonalReport eikonal_check(const PhaseSpec& phi, const PhaseSpec& psi, int N) {
  check_phase(phi);
  check_phase(psi);
  GridPtr g = build_grid(N);
  const double dx = g->dx();
  EikonalReport rep;
  for (int n : g->interior_nodes()) {
    Vec3 x = g->coord(n), gp, gq;
    for (int d = 0; d < 3; ++d) {
      Vec3 e = Vec3::Unit(d) * dx;
      gp[d] = (phi.value(x + e) - phi.value(x - e)) / (2 * dx);
      gq[d] = (psi.value(x + e) - psi.value(x - e)) / (2 * dx);
    }
    rep.norm_residual = std::max(rep.norm_residual, std::abs(gp.squaredNorm() - gq.squaredNorm()));
    rep.dot_residual = std::max(rep.dot_residual, std::abs(gp.dot(gq)));
  }
  return rep;
}

}  // namespace dnlab
