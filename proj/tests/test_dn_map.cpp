#include <Eigen/Eigenvalues>
#include <filesystem>

#include "doctest.h"
#include "dnlab/dn_map.hpp"
#include "dnlab/io.hpp"
#include "oracles.hpp"

using namespace dnlab;

namespace {

ScalarField bump(const GridPtr& g, double amp = 5.0) {
  return sample_potential(PotentialSpec::bump({0.45, 0.5, 0.6}, 0.2, amp), g);
}

ScalarField constant(const GridPtr& g, double c) {
  return sample_potential(PotentialSpec::constant_value(c), g);
}

BoundaryField random_boundary(const GridPtr& g, std::mt19937_64& rng) {
  BoundaryField f = BoundaryField::zeros(g);
  f.values = oracle::random_complex(g->boundary_count(), rng);
  return f;
}

BoundaryField trace_of(const GridPtr& g, const std::function<double(const Vec3&)>& fn) {
  BoundaryField f = BoundaryField::zeros(g);
  for (int s = 0; s < g->boundary_count(); ++s) f.values[s] = fn(g->coord(g->boundary_nodes()[s].node));
  return f;
}

// DN matrix from the loop-built full form: Schur complement onto the boundary
CMat oracle_dn(const GridPtr& g, const RVec& V, cplx lambda) {
  CMat A = oracle::full_form(g->N(), V, lambda);
  std::vector<int> in = g->interior_nodes(), bd;
  for (const auto& b : g->boundary_nodes()) bd.push_back(b.node);
  const int ni = static_cast<int>(in.size()), nb = static_cast<int>(bd.size());
  CMat AII(ni, ni), AIB(ni, nb), ABI(nb, ni), ABB(nb, nb);
  for (int r = 0; r < ni; ++r) {
    for (int c = 0; c < ni; ++c) AII(r, c) = A(in[r], in[c]);
    for (int c = 0; c < nb; ++c) AIB(r, c) = A(in[r], bd[c]);
  }
  for (int r = 0; r < nb; ++r) {
    for (int c = 0; c < ni; ++c) ABI(r, c) = A(bd[r], in[c]);
    for (int c = 0; c < nb; ++c) ABB(r, c) = A(bd[r], bd[c]);
  }
  CMat S = ABB - ABI * AII.partialPivLu().solve(AIB);
  for (int r = 0; r < nb; ++r) S.row(r) /= g->face_weights()[r];
  return S;
}

// largest generalized singular value: max |Tf|_{S^-1} / |f|_S by a dense eigensolve
double oracle_gap(const GridPtr& g, const CMat& D) {
  CMat G = oracle::full_form(g->N(), RVec::Ones(g->node_count()), 0.0);
  std::vector<int> in = g->interior_nodes(), bd;
  for (const auto& b : g->boundary_nodes()) bd.push_back(b.node);
  const int ni = static_cast<int>(in.size()), nb = static_cast<int>(bd.size());
  RMat AII(ni, ni), AIB(ni, nb), ABB(nb, nb);
  for (int r = 0; r < ni; ++r) {
    for (int c = 0; c < ni; ++c) AII(r, c) = G(in[r], in[c]).real();
    for (int c = 0; c < nb; ++c) AIB(r, c) = G(in[r], bd[c]).real();
  }
  for (int r = 0; r < nb; ++r)
    for (int c = 0; c < nb; ++c) ABB(r, c) = G(bd[r], bd[c]).real();
  RMat S = ABB - AIB.transpose() * AII.llt().solve(AIB);
  Eigen::SelfAdjointEigenSolver<RMat> es(S);
  RMat Sih = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
             es.eigenvectors().transpose();
  CMat T = g->face_weights().cast<cplx>().asDiagonal() * D;
  CMat W = Sih.cast<cplx>() * T * Sih.cast<cplx>();
  Eigen::JacobiSVD<CMat> svd(W);
  return svd.singularValues()[0];
}

}  // namespace

TEST_CASE("Dirichlet trace") {
  auto g = build_grid(6);
  auto one = sample_field(g, [](const Vec3&) { return cplx(1); });
  CHECK((gamma0(one).values.array() == cplx(1)).all());
  auto x1 = sample_field(g, [](const Vec3& x) { return cplx(x[0]); });
  auto t = gamma0(x1);
  for (int s = 0; s < g->boundary_count(); ++s)
    CHECK(t.values[s] == cplx(g->coord(g->boundary_nodes()[s].node)[0]));
  std::mt19937_64 rng(1);
  ScalarField u = ScalarField::zeros(g);
  u.values = oracle::random_complex(g->node_count(), rng);
  auto f = gamma0(u);
  CHECK(gamma0(zero_extension(f)).values == f.values);
  ScalarField nob = u;
  nob.has_boundary = false;
  CHECK_THROWS_AS(gamma0(nob), LabError);
}

TEST_CASE("weak normal derivative") {
  auto g = build_grid(8);
  auto V0 = ScalarField::zeros(g);
  auto x1 = sample_field(g, [](const Vec3& x) { return cplx(x[0]); });
  CHECK(std::abs(boundary_bilinear(gamma1(x1, V0), gamma0(x1)) - 1.0) < 1e-10);
  auto one = sample_field(g, [](const Vec3&) { return cplx(1); });
  CHECK(gamma1(one, V0).values.cwiseAbs().maxCoeff() < 1e-10);

  auto V = bump(g);
  auto op = assemble(V, g);
  std::mt19937_64 rng(2);
  auto f = random_boundary(g, rng);
  auto u = solve_dirichlet(*op, 0.0, f);
  auto psi = gamma1(u, V);
  // form energy by explicit loops over edges and nodes
  CMat A = oracle::full_form(8, V.real_values(), 0.0);
  cplx energy = u.values.dot(A * u.values);
  CHECK(std::abs(boundary_inner(psi, gamma0(u)) - std::conj(energy)) < 1e-9 * std::abs(energy));

  for (int t = 0; t < 10; ++t) {
    ScalarField F = zero_extension(f);
    for (int n : g->interior_nodes()) F.values[n] = oracle::random_complex(1, rng)[0] * 3.0;
    cplx w = weak_form(u, V, 0.0, F);
    CHECK(std::abs(boundary_bilinear(psi, f) - w) < 1e-9 * std::abs(w));
  }
  CHECK((gamma1(*op, u).values - psi.values).cwiseAbs().maxCoeff() == 0.0);

  ScalarField junk = u;
  junk.values[g->interior_nodes()[10]] += 1.0;
  CHECK_THROWS_AS(gamma1(junk, V), LabError);
}

TEST_CASE("DN matrix assembly") {
  auto g = build_grid(8);
  BoundaryField one = BoundaryField::zeros(g);
  one.values.setOnes();
  auto dn0 = assemble_dn(assemble(ScalarField::zeros(g), g), 0.0);
  CHECK(dn0.is_dense());
  CHECK(dn0.apply(one).values.cwiseAbs().maxCoeff() < 1e-10);
  auto dnc = assemble_dn(assemble(constant(g, 2.0), g), 0.0);
  CHECK(boundary_inner(dnc.apply(one), one).real() > 0);

  auto V = bump(g);
  auto op = assemble(V, g);
  auto dn = assemble_dn(op, 0.0);
  CMat ref = oracle_dn(g, V.real_values(), 0.0);
  CHECK((dn.matrix() - ref).cwiseAbs().maxCoeff() < 1e-9 * ref.cwiseAbs().maxCoeff());

  cplx lam(-3.0, 2.0);
  auto dnl = assemble_dn(op, lam);
  CMat refl = oracle_dn(g, V.real_values(), lam);
  CHECK((dnl.matrix() - refl).cwiseAbs().maxCoeff() < 1e-9 * refl.cwiseAbs().maxCoeff());

  auto lazy = assemble_dn(op, 0.0, DnMode::Lazy);
  CHECK_FALSE(lazy.is_dense());
  std::mt19937_64 rng(3);
  auto f = random_boundary(g, rng);
  CHECK((lazy.apply(f.values) - dn.apply(f.values)).cwiseAbs().maxCoeff() <
        1e-10 * dn.apply(f.values).cwiseAbs().maxCoeff());
  CHECK_THROWS_AS(lazy.matrix(), LabError);

  for (int t = 0; t < 5; ++t) {
    auto a = random_boundary(g, rng), b = random_boundary(g, rng);
    cplx l = boundary_inner(dn.apply(a), b), r = boundary_inner(a, dn.apply(b));
    CHECK(std::abs(l - r) < 1e-9 * std::abs(l));
    CHECK(std::abs(boundary_inner(dn.apply(a), a).imag()) < 1e-10 * std::abs(boundary_inner(dn.apply(a), a)));
  }

  auto spec = eigendecompose(*op, 1);
  CHECK_THROWS_AS(assemble_dn(op, spec.values[0]), LabError);
}

TEST_CASE("discrete integral identity") {
  auto g = build_grid(8);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    ScalarField V = ScalarField::zeros(g), W = V;
    V.values = oracle::random_real(g->node_count(), rng, -2, 6).cast<cplx>();
    W.values = oracle::random_real(g->node_count(), rng, -2, 6).cast<cplx>();
    auto opV = assemble(V, g), opW = assemble(W, g);
    auto f = random_boundary(g, rng), ft = random_boundary(g, rng);
    auto u = solve_dirichlet(*opV, 0.0, f);
    auto ut = solve_dirichlet(*opW, 0.0, ft);
    ScalarField diff = W;
    diff.values = (W.values - V.values).cwiseProduct(u.values);
    cplx lhs = volume_inner(diff, ut);
    auto dV = assemble_dn(opV, 0.0), dW = assemble_dn(opW, 0.0);
    BoundaryField gap{g, dW.apply(f.values) - dV.apply(f.values)};
    cplx rhs = boundary_inner(gap, ft);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * (1 + std::abs(lhs)));
  }
}

TEST_CASE("form monotonicity and growth") {
  auto g = build_grid(8);
  std::mt19937_64 rng(5);
  ScalarField V = ScalarField::zeros(g);
  V.values = oracle::random_real(g->node_count(), rng, 0, 3).cast<cplx>();
  ScalarField W = V;
  W.values += oracle::random_real(g->node_count(), rng, 0, 2).cast<cplx>();
  auto dV = assemble_dn(assemble(V, g), 0.0), dW = assemble_dn(assemble(W, g), 0.0);
  for (int t = 0; t < 10; ++t) {
    BoundaryField f = BoundaryField::zeros(g);
    f.values = oracle::random_real(g->boundary_count(), rng).cast<cplx>();
    BoundaryField d{g, dW.apply(f.values) - dV.apply(f.values)};
    CHECK(boundary_inner(d, f).real() >= -1e-9);
  }

  auto d0 = assemble_dn(assemble(ScalarField::zeros(g), g), 0.0);
  std::vector<double> norms, gaps;
  for (int c = 1; c <= 8; ++c) {
    auto Vc = constant(g, c);
    norms.push_back(norm(Vc, NormKind::lp(1.5)));
    gaps.push_back(dn_gap_norm(assemble_dn(assemble(Vc, g), 0.0), d0));
  }
  CHECK(loglog_slope(norms, gaps) <= 1.1);
}

TEST_CASE("gap norm") {
  auto g = build_grid(8);
  auto d0 = assemble_dn(assemble(ScalarField::zeros(g), g), 0.0);
  CHECK(dn_gap_norm(d0, d0) <= 1e-12);
  double prev = 0;
  for (double c : {1.0, 2.0, 4.0}) {
    auto dc = assemble_dn(assemble(constant(g, c), g), 0.0);
    double gap = dn_gap_norm(dc, d0);
    double ref = oracle_gap(g, dc.matrix() - d0.matrix());
    CHECK(gap == doctest::Approx(ref).epsilon(1e-6));
    CHECK(gap > prev);
    prev = gap;
    CHECK(modal_gap_norm(dc, d0, 0.5, -0.5) == doctest::Approx(gap).epsilon(1e-6));
  }
  auto db = assemble_dn(assemble(bump(g), g), 0.0);
  double gb = dn_gap_norm(db, d0);
  CHECK(gb == doctest::Approx(oracle_gap(g, db.matrix() - d0.matrix())).epsilon(1e-6));
  for (double alpha : {-2.5, 0.3, 7.0}) {
    DnMatrix sa(db.op(), 0.0, CMat(alpha * db.matrix()));
    DnMatrix sb(d0.op(), 0.0, CMat(alpha * d0.matrix()));
    CHECK(std::abs(dn_gap_norm(sa, sb) - std::abs(alpha) * gb) <= 1e-9 + 1e-6 * std::abs(alpha) * gb);
  }
  auto other = assemble_dn(assemble(ScalarField::zeros(g), g), -1.0);
  CHECK_THROWS_AS(dn_gap_norm(d0, other), LabError);
  CHECK_THROWS_AS(dn_gap_norm(d0, assemble_dn(assemble(ScalarField::zeros(build_grid(6)), build_grid(6)), 0.0)), LabError);
}

TEST_CASE("smoothing of DN differences") {
  auto g16 = build_grid(16);
  auto d0 = assemble_dn(assemble(ScalarField::zeros(g16), g16), 0.0);
  CHECK(smoothing_index(d0, d0) == std::numeric_limits<double>::infinity());
  auto d1 = assemble_dn(assemble(constant(g16, 1.0), g16), 0.0);
  CHECK(smoothing_index(d1, d0) > 0.5);

  auto g32 = build_grid(32);
  auto l0 = assemble_dn(assemble(ScalarField::zeros(g32), g32), 0.0);
  auto lb = assemble_dn(assemble(bump(g32), g32), 0.0);
  CHECK_FALSE(lb.is_dense());
  auto rep = smoothing_report(lb, l0);
  CHECK(rep.exponent_gap > 0.5);
  CHECK(rep.slope_a > 0.5);
}

TEST_CASE("DN export") {
  auto g = build_grid(4);
  auto dn = assemble_dn(assemble(bump(g), g), 0.0);
  auto dir = std::filesystem::temp_directory_path() / "dnlab_dn_test";
  export_dn(dn, (dir / "dn").string());
  auto back = read_complex_binary((dir / "dn.bin").string());
  REQUIRE(back.size() == static_cast<size_t>(dn.matrix().size()));
  CHECK(back[5] == dn.matrix().data()[5]);
  auto meta = read_text((dir / "dn.json").string());
  CHECK(meta.find(dn.fingerprint()) != std::string::npos);
  CHECK(meta.find("gram_checksum") != std::string::npos);
  std::filesystem::remove_all(dir);
}
