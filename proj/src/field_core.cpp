#include "dnlab/field_core.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "dnlab/io.hpp"
#include "dnlab/linalg.hpp"

namespace dnlab {

namespace {

double trap(int idx, int N) { return (idx == 0 || idx == N) ? 0.5 : 1.0; }

}  // namespace

// ====================================================================
// Grid
// ====================================================================

Grid3::Grid3(int N) : N_(N), dx_(1.0 / N) {
  if (N < 4) fail(ErrorKind::Config, "grid subdivisions must be >= 4, got " + std::to_string(N));
  const int P = N + 1;
  const int total = P * P * P;
  interior_slot_.assign(total, -1);
  boundary_slot_.assign(total, -1);
  vol_w_.resize(total);
  std::vector<double> fw;
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j <= N; ++j)
      for (int l = 0; l <= N; ++l) {
        const int n = index(i, j, l);
        const int idx[3] = {i, j, l};
        vol_w_[n] = dx_ * dx_ * dx_ * trap(i, N) * trap(j, N) * trap(l, N);
        int owner = -1;
        double w = 0.0;
        for (int d = 0; d < 3; ++d) {
          if (idx[d] != 0 && idx[d] != N) continue;
          if (owner < 0) owner = d;
          double face = dx_ * dx_;
          for (int e = 0; e < 3; ++e)
            if (e != d) face *= trap(idx[e], N);
          w += face;
        }
        if (owner < 0) {
          interior_slot_[n] = static_cast<int>(interior_.size());
          interior_.push_back(n);
        } else {
          boundary_slot_[n] = static_cast<int>(boundary_.size());
          boundary_.push_back({n, owner, idx[owner] == 0 ? -1 : 1, w});
          fw.push_back(w);
        }
      }
  face_w_ = Eigen::Map<RVec>(fw.data(), static_cast<Eigen::Index>(fw.size()));

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(total) * 7);
  const int stride[3] = {P * P, P, 1};
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j <= N; ++j)
      for (int l = 0; l <= N; ++l) {
        const int n = index(i, j, l);
        const int idx[3] = {i, j, l};
        for (int d = 0; d < 3; ++d) {
          if (idx[d] == N) continue;
          double c = dx_;
          for (int e = 0; e < 3; ++e)
            if (e != d) c *= trap(idx[e], N);
          const int m = n + stride[d];
          t.emplace_back(n, n, c);
          t.emplace_back(m, m, c);
          t.emplace_back(n, m, -c);
          t.emplace_back(m, n, -c);
        }
      }
  K_.resize(total, total);
  K_.setFromTriplets(t.begin(), t.end());
}

std::array<int, 3> Grid3::ijk(int node) const {
  const int P = N_ + 1;
  return {node / (P * P), (node / P) % P, node % P};
}

Vec3 Grid3::coord(int node) const {
  auto a = ijk(node);
  return Vec3(a[0] * dx_, a[1] * dx_, a[2] * dx_);
}

GridPtr build_grid(int N) { return std::make_shared<const Grid3>(N); }

void check_same_grid(const GridPtr& a, const GridPtr& b, const char* what) {
  if (!a || !b || a->N() != b->N())
    fail(ErrorKind::Mismatch, std::string("grid mismatch in ") + what);
}

// ====================================================================
// Fields
// ====================================================================

ScalarField ScalarField::zeros(GridPtr g, bool with_boundary) {
  ScalarField f;
  f.values = CVec::Zero(g->node_count());
  f.grid = std::move(g);
  f.has_boundary = with_boundary;
  return f;
}

CVec ScalarField::interior() const {
  const auto& nodes = grid->interior_nodes();
  CVec out(static_cast<Eigen::Index>(nodes.size()));
  for (size_t s = 0; s < nodes.size(); ++s) out[s] = values[nodes[s]];
  return out;
}

BoundaryField BoundaryField::zeros(GridPtr g) {
  BoundaryField f;
  f.values = CVec::Zero(g->boundary_count());
  f.grid = std::move(g);
  return f;
}

PotentialSpec PotentialSpec::zero() { return {}; }

PotentialSpec PotentialSpec::constant_value(double c) {
  PotentialSpec s;
  s.kind = PotentialKind::Constant;
  s.constant = c;
  s.sigma = 1e9;
  return s;
}

PotentialSpec PotentialSpec::bump(Vec3 center, double width, double amplitude, double sigma) {
  PotentialSpec s;
  s.kind = PotentialKind::GaussianBumps;
  s.bumps.push_back({center, width, amplitude});
  s.sigma = sigma;
  return s;
}

PotentialSpec PotentialSpec::rough(std::uint64_t seed, double alpha, double amplitude,
                                   double noise, PointwiseLaw law) {
  PotentialSpec s;
  s.kind = PotentialKind::RoughSample;
  s.seed = seed;
  s.alpha = alpha;
  s.amplitude = amplitude;
  s.noise = noise;
  s.law = law;
  return s;
}

PotentialSpec PotentialSpec::scaled(double factor) const {
  PotentialSpec s = *this;
  s.constant *= factor;
  s.amplitude *= factor;
  for (auto& b : s.bumps) b.amplitude *= factor;
  return s;
}

ScalarField sample_potential(const PotentialSpec& spec, GridPtr grid) {
  ScalarField out = ScalarField::zeros(grid, true);
  const int total = grid->node_count();
  switch (spec.kind) {
    case PotentialKind::Zero:
      break;
    case PotentialKind::Constant:
      out.values.setConstant(spec.constant);
      break;
    case PotentialKind::GaussianBumps:
      for (const auto& b : spec.bumps) {
        if (!(b.width > 0)) fail(ErrorKind::Config, "bump width must be positive");
        for (int n = 0; n < total; ++n) {
          double r2 = (grid->coord(n) - b.center).squaredNorm();
          out.values[n] += b.amplitude * std::exp(-r2 / (2 * b.width * b.width));
        }
      }
      break;
    case PotentialKind::RoughSample: {
      if (!(spec.alpha >= 0 && spec.alpha < 2))
        fail(ErrorKind::Config, "rough-sample singular exponent must lie in [0, 2)");
      std::mt19937_64 rng(spec.seed);
      std::uniform_real_distribution<double> uni(-1.0, 1.0);
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::vector<double> eta(total);
      for (auto& e : eta) e = spec.law == PointwiseLaw::Uniform ? uni(rng) : gauss(rng);
      const double eps = 1e-12;
      std::vector<int> singular;
      for (int n = 0; n < total; ++n) {
        double r = (grid->coord(n) - spec.singular_point).norm();
        if (r < eps) {
          singular.push_back(n);
          continue;
        }
        out.values[n] = spec.amplitude * std::pow(r, -spec.alpha) * (1.0 + spec.noise * eta[n]);
      }
      for (int n : singular) {
        auto a = grid->ijk(n);
        int nb = a[0] < grid->N() ? grid->index(a[0] + 1, a[1], a[2])
                                  : grid->index(a[0] - 1, a[1], a[2]);
        out.values[n] = out.values[nb];
      }
      break;
    }
  }
  for (int n = 0; n < total; ++n)
    if (!std::isfinite(out.values[n].real()))
      fail(ErrorKind::Generation, "non-finite potential sample at node " + std::to_string(n));
  return out;
}

ScalarField truncate(const ScalarField& field, double k) {
  if (!(k > 0)) fail(ErrorKind::Domain, "truncation level must be positive");
  ScalarField out = field;
  for (Eigen::Index n = 0; n < out.values.size(); ++n) {
    cplx& z = out.values[n];
    if (!(std::abs(z) > k)) continue;
    if (z.imag() == 0) {
      z = std::copysign(k, z.real());
      continue;
    }
    double scale = k / std::abs(z);
    while (std::abs(z * scale) > k) scale = std::nextafter(scale, 0.0);
    z *= scale;
  }
  return out;
}

// ====================================================================
// Norms
// ====================================================================

namespace {

double weighted_lp(const CVec& v, const RVec& w, double p) {
  if (!(p > 1)) fail(ErrorKind::Domain, "Lp norm needs p > 1");
  double s = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += w[i] * std::pow(std::abs(v[i]), p);
  return std::pow(s, 1.0 / p);
}

double h1_energy(const Grid3& g, const CVec& v) {
  CVec Kv = g.stiffness() * v;
  double mass = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) mass += g.volume_weights()[i] * std::norm(v[i]);
  return mass + v.dot(Kv).real();
}

std::vector<int> slots(const Grid3& g, bool interior) {
  std::vector<int> s(g.node_count());
  for (int n = 0; n < g.node_count(); ++n) s[n] = interior ? g.interior_slot(n) : g.boundary_slot(n);
  return s;
}

// interior block of K + M
SpMat shifted_interior(const Grid3& g) {
  auto is = slots(g, true);
  SpMat A = extract_block(g.stiffness(), is, g.interior_count(), is, g.interior_count());
  for (int s = 0; s < g.interior_count(); ++s)
    A.coeffRef(s, s) += g.volume_weights()[g.interior_nodes()[s]];
  return A;
}

}  // namespace

ScalarField zero_extension(const BoundaryField& f) {
  ScalarField out = ScalarField::zeros(f.grid, true);
  const auto& b = f.grid->boundary_nodes();
  for (size_t s = 0; s < b.size(); ++s) out.values[b[s].node] = f.values[s];
  return out;
}

ScalarField minimal_extension(const BoundaryField& f) {
  const Grid3& g = *f.grid;
  SpMat A = shifted_interior(g);
  SpMat KIB = extract_block(g.stiffness(), slots(g, true), g.interior_count(), slots(g, false),
                            g.boundary_count());
  SpdSparseCholesky lu(A);
  if (!lu.ok()) fail(ErrorKind::Domain, "singular Gram system in quotient norm");
  CVec rhs = -(KIB * f.values);
  CVec inner = lu.solve(rhs);
  ScalarField out = zero_extension(f);
  const auto& in = g.interior_nodes();
  for (size_t s = 0; s < in.size(); ++s) out.values[in[s]] = inner[s];
  return out;
}

RMat hhalf_gram(const GridPtr& grid) {
  const Grid3& g = *grid;
  if (g.boundary_count() > 4000)
    fail(ErrorKind::Config, "dense H^{1/2} Gram matrix limited to N <= 24");
  auto is = slots(g, true);
  auto bs = slots(g, false);
  SpMat A = shifted_interior(g);
  SpMat KIB = extract_block(g.stiffness(), is, g.interior_count(), bs, g.boundary_count());
  SpMat KBB = extract_block(g.stiffness(), bs, g.boundary_count(), bs, g.boundary_count());
  SpdSparseCholesky lu(A);
  if (!lu.ok()) fail(ErrorKind::Domain, "singular Gram system in quotient norm");
  RMat X = lu.solve(RMat(KIB));
  RMat S = RMat(KBB) - RMat(KIB.transpose()) * X;
  const auto& b = g.boundary_nodes();
  for (size_t s = 0; s < b.size(); ++s) S(s, s) += g.volume_weights()[b[s].node];
  return 0.5 * (S + S.transpose());
}

double norm(const ScalarField& field, NormKind kind) {
  const Grid3& g = *field.grid;
  switch (kind.tag) {
    case NormTag::L2:
      return weighted_lp(field.values, g.volume_weights(), 2.0);
    case NormTag::Lp:
      return weighted_lp(field.values, g.volume_weights(), kind.p);
    case NormTag::H1:
      if (!field.has_boundary)
        fail(ErrorKind::Domain, "H1 norm needs boundary values; use H1_0 for zero extension");
      return std::sqrt(h1_energy(g, field.values));
    case NormTag::H1_0: {
      CVec v = field.values;
      for (const auto& b : g.boundary_nodes()) v[b.node] = 0;
      return std::sqrt(h1_energy(g, v));
    }
    case NormTag::HhalfQuotient:
    case NormTag::HminushalfDual:
      fail(ErrorKind::Domain, "fractional norms apply to boundary fields only");
  }
  fail(ErrorKind::Domain, "unknown norm kind");
}

double norm(const BoundaryField& field, NormKind kind) {
  const Grid3& g = *field.grid;
  switch (kind.tag) {
    case NormTag::L2:
      return weighted_lp(field.values, g.face_weights(), 2.0);
    case NormTag::Lp:
      return weighted_lp(field.values, g.face_weights(), kind.p);
    case NormTag::HhalfQuotient:
      return std::sqrt(h1_energy(g, minimal_extension(field).values));
    case NormTag::HminushalfDual: {
      // (K+M) F = boundary load M_G g; the dual norm squared is <g, F>
      SpMat A = g.stiffness();
      for (int n = 0; n < g.node_count(); ++n) A.coeffRef(n, n) += g.volume_weights()[n];
      CVec load = CVec::Zero(g.node_count());
      const auto& b = g.boundary_nodes();
      for (size_t s = 0; s < b.size(); ++s) load[b[s].node] = b[s].weight * field.values[s];
      SpdSparseCholesky lu(A);
      if (!lu.ok()) fail(ErrorKind::Domain, "singular Gram system in dual norm");
      CVec F = lu.solve(load);
      return std::sqrt(std::max(0.0, load.dot(F).real()));
    }
    case NormTag::H1:
    case NormTag::H1_0:
      fail(ErrorKind::Domain, "H1 norms apply to volume fields only");
  }
  fail(ErrorKind::Domain, "unknown norm kind");
}

// ====================================================================
// Quadrature and pairings
// ====================================================================

cplx fourier_mode(const ScalarField& field, const Vec3& k) {
  const Grid3& g = *field.grid;
  cplx s = 0;
  for (int n = 0; n < g.node_count(); ++n) {
    if (field.values[n] == cplx(0)) continue;
    double phase = -k.dot(g.coord(n));
    s += g.volume_weights()[n] * field.values[n] * cplx(std::cos(phase), std::sin(phase));
  }
  return s;
}

cplx boundary_bilinear(const BoundaryField& a, const BoundaryField& b) {
  check_same_grid(a.grid, b.grid, "boundary pairing");
  return (a.grid->face_weights().cast<cplx>().array() * a.values.array() * b.values.array()).sum();
}

cplx boundary_inner(const BoundaryField& a, const BoundaryField& b) {
  check_same_grid(a.grid, b.grid, "boundary pairing");
  return (a.grid->face_weights().cast<cplx>().array() * a.values.array() *
          b.values.conjugate().array())
      .sum();
}

cplx volume_inner(const ScalarField& a, const ScalarField& b) {
  check_same_grid(a.grid, b.grid, "volume pairing");
  return (a.grid->volume_weights().cast<cplx>().array() * a.values.array() *
          b.values.conjugate().array())
      .sum();
}

cplx volume_bilinear(const ScalarField& a, const ScalarField& b) {
  check_same_grid(a.grid, b.grid, "volume pairing");
  return (a.grid->volume_weights().cast<cplx>().array() * a.values.array() * b.values.array())
      .sum();
}

void export_field(const ScalarField& field, const std::string& path_stem) {
  write_complex_binary(path_stem + ".bin", field.values.data(),
                       static_cast<size_t>(field.values.size()));
  nlohmann::json meta = {
      {"N", field.grid->N()},
      {"dx", field.grid->dx()},
      {"nodes_per_axis", field.grid->nodes_per_axis()},
      {"node_count", field.grid->node_count()},
      {"has_boundary", field.has_boundary},
      {"layout", "row-major, z fastest, little-endian float64 (re, im) pairs"},
  };
  write_text(path_stem + ".json", meta.dump(2) + "\n");
}

}  // namespace dnlab
