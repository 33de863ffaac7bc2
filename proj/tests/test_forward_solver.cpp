#include <Eigen/Eigenvalues>
#include <numbers>

#include "doctest.h"
#include "dnlab/forward_solver.hpp"
#include "oracles.hpp"

using namespace dnlab;

namespace {

ScalarField bump_field(const GridPtr& g, double amp = 5.0) {
  return sample_potential(PotentialSpec::bump({0.4, 0.55, 0.5}, 0.18, amp), g);
}

BoundaryField random_boundary(const GridPtr& g, std::mt19937_64& rng) {
  BoundaryField f = BoundaryField::zeros(g);
  f.values = oracle::random_complex(g->boundary_count(), rng);
  return f;
}

ScalarField random_interior(const GridPtr& g, std::mt19937_64& rng) {
  ScalarField f = ScalarField::zeros(g);
  for (int n : g->interior_nodes()) f.values[n] = oracle::random_complex(1, rng)[0];
  return f;
}

// sum over grid edges of squared forward differences, times the cell volume
double gradient_energy(const GridPtr& g, const CVec& u) {
  const int N = g->N();
  const double h = g->dx();
  double s = 0;
  for (int i = 0; i <= N; ++i)
    for (int j = 0; j <= N; ++j)
      for (int l = 0; l <= N; ++l) {
        int idx[3] = {i, j, l};
        for (int d = 0; d < 3; ++d) {
          if (idx[d] == N) continue;
          int nb[3] = {i, j, l};
          nb[d]++;
          double w = h * h * h;
          for (int e = 0; e < 3; ++e)
            if (e != d) w *= oracle::tw(idx[e], N);
          s += w * std::norm((u[g->index(nb[0], nb[1], nb[2])] - u[g->index(i, j, l)]) / h);
        }
      }
  return s;
}

}  // namespace

TEST_CASE("quadratic form identity") {
  auto g = build_grid(8);
  auto V = bump_field(g);
  auto op = assemble(V, g);
  std::mt19937_64 rng(1);
  const double h3 = std::pow(g->dx(), 3);
  for (int t = 0; t < 100; ++t) {
    auto u = random_interior(g, rng);
    CVec ui = u.interior();
    double lhs = h3 * ui.dot(op->apply_interior(ui)).real();
    double pot = 0;
    for (int n : g->interior_nodes()) pot += h3 * V.values[n].real() * std::norm(u.values[n]);
    double rhs = gradient_energy(g, u.values) + pot;
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(rhs));
  }
  SpMat L = op->interior_matrix();
  CHECK((RMat(L) - RMat(L).transpose()).cwiseAbs().maxCoeff() == 0.0);
  auto other = build_grid(6);
  CHECK_THROWS_AS(assemble(V, other), LabError);
}

TEST_CASE("closed-form free spectrum") {
  auto g = build_grid(4);
  auto op = assemble(ScalarField::zeros(g), g);
  auto spec = eigendecompose(*op, 27);
  const double dx = g->dx();
  double s = std::sin(std::numbers::pi * dx / 2);
  CHECK(std::abs(spec.values[0] - 3 * 4 / (dx * dx) * s * s) < 1e-9);
  RVec exact = free_spectrum(4);
  CHECK((spec.values - exact).cwiseAbs().maxCoeff() < 1e-9);

  auto shifted = assemble(sample_potential(PotentialSpec::constant_value(3.5), g), g);
  auto s2 = eigendecompose(*shifted, 27);
  CHECK((s2.values - spec.values - RVec::Constant(27, 3.5)).cwiseAbs().maxCoeff() < 1e-9);

  std::mt19937_64 rng(2);
  for (int t = 0; t < 5; ++t) {
    ScalarField V = ScalarField::zeros(g);
    V.values = oracle::random_real(g->node_count(), rng, 0, 10).cast<cplx>();
    CHECK(eigendecompose(*assemble(V, g), 1).values[0] >= spec.values[0] - 1e-12);
  }
}

TEST_CASE("eigendecomposition against a dense oracle") {
  auto g = build_grid(8);
  auto V = bump_field(g);
  auto op = assemble(V, g);
  auto spec = eigendecompose(*op, 343);
  Eigen::SelfAdjointEigenSolver<RMat> es(oracle::fd_operator(8, V.real_values(), 0.0).real());
  CHECK((spec.values - es.eigenvalues()).cwiseAbs().maxCoeff() < 1e-8);
  for (int k = 0; k < spec.count(); k += 17) {
    auto fk = spec.field(k);
    CHECK(std::abs(norm(fk, NormKind::l2()) - 1.0) < 1e-8);
    for (int j = k + 1; j < spec.count(); j += 23) CHECK(std::abs(volume_inner(fk, spec.field(j))) < 1e-8);
    CHECK(interior_residual(*op, spec.values[k], fk) <= 1e-8 * std::abs(spec.values[k]) + 1e-8);
  }
  CHECK_THROWS_AS(eigendecompose(*op, 0), LabError);
  CHECK_THROWS_AS(eigendecompose(*op, 344), LabError);
}

TEST_CASE("iterative eigensolver beyond the dense range") {
  auto g = build_grid(20);
  auto op = assemble(ScalarField::zeros(g), g);
  auto spec = eigendecompose(*op, 40);
  RVec exact = free_spectrum(20).head(40);
  CHECK((spec.values - exact).cwiseAbs().maxCoeff() < 1e-8 * exact.maxCoeff());
  for (int k = 0; k < 40; k += 7) {
    CHECK(std::abs(norm(spec.field(k), NormKind::l2()) - 1.0) < 1e-8);
    CHECK(std::abs(volume_inner(spec.field(k), spec.field(39 - k))) < 1e-8 + (k == 39 - k));
  }
  CHECK(spec.max_residual <= 1e-8 * exact.maxCoeff() + 1e-8);
}

TEST_CASE("Weyl slope") {
  auto g = build_grid(32);
  auto free_op = assemble(ScalarField::zeros(g), g);
  auto spec = eigendecompose(*free_op, 210);
  CHECK(weyl_fit(spec, 20, 200) == doctest::Approx(2.0 / 3.0).epsilon(0.15 / (2.0 / 3.0)));
  auto bump_op = assemble(bump_field(g, 20), g);
  auto sb = eigendecompose(*bump_op, 210);
  CHECK(std::abs(weyl_fit(sb, 20, 200) - 2.0 / 3.0) <= 0.15);
  CHECK_THROWS_AS(weyl_fit(spec, 20, 24), LabError);
}

TEST_CASE("Dirichlet problem") {
  auto g = build_grid(8);
  auto op0 = assemble(ScalarField::zeros(g), g);
  auto quad = sample_field(g, [](const Vec3& x) { return cplx(x[0] * x[0] - x[1] * x[1]); });
  BoundaryField fq = BoundaryField::zeros(g);
  for (int s = 0; s < g->boundary_count(); ++s) fq.values[s] = quad.values[g->boundary_nodes()[s].node];
  auto uq = solve_dirichlet(*op0, 0.0, fq);
  CHECK((uq.values - quad.values).cwiseAbs().maxCoeff() < 1e-11);

  BoundaryField one = BoundaryField::zeros(g);
  one.values.setOnes();
  auto u1 = solve_dirichlet(*op0, 0.0, one);
  CHECK((u1.values.array() - 1.0).abs().maxCoeff() < 1e-12);

  auto V = bump_field(g);
  auto op = assemble(V, g);
  std::mt19937_64 rng(3);
  auto f = random_boundary(g, rng);
  auto u = solve_dirichlet(*op, 0.0, f);
  for (int s = 0; s < g->boundary_count(); ++s) CHECK(u.values[g->boundary_nodes()[s].node] == f.values[s]);
  CVec full = zero_extension(f).values;
  CVec ref = oracle::dirichlet(8, V.real_values(), 0.0, full);
  CHECK((u.values - ref).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(interior_residual(*op, 0.0, u) <= 1e-9 * op->spectral_radius_bound() * u.values.cwiseAbs().maxCoeff());

  auto f2 = random_boundary(g, rng);
  BoundaryField comb = f;
  cplx a(0.3, -1.2), b(2.0, 0.5);
  comb.values = a * f.values + b * f2.values;
  auto uc = solve_dirichlet(*op, 0.0, comb);
  CVec lin = a * u.values + b * solve_dirichlet(*op, 0.0, f2).values;
  CHECK((uc.values - lin).cwiseAbs().maxCoeff() < 1e-12 * lin.cwiseAbs().maxCoeff());
}

TEST_CASE("near-eigenvalue guard") {
  auto g = build_grid(6);
  auto op = assemble(bump_field(g), g);
  auto spec = eigendecompose(*op, 3);
  BoundaryField f = BoundaryField::zeros(g);
  f.values.setOnes();
  try {
    solve_dirichlet(*op, spec.values[1], f);
    FAIL("expected a resolvent singularity");
  } catch (const LabError& e) {
    CHECK(e.kind() == ErrorKind::ResolventSingularity);
    REQUIRE(e.nearest_eigenvalue.has_value());
    CHECK(std::abs(*e.nearest_eigenvalue - spec.values[1]) < 1e-6 * spec.values[1]);
  }
  CHECK_NOTHROW(solve_dirichlet(*op, spec.values[1] + 1.0, f));
}

TEST_CASE("resolvent") {
  auto g = build_grid(8);
  auto op = assemble(bump_field(g), g);
  auto spec = eigendecompose(*op, 5);
  for (int k = 0; k < 5; ++k) {
    auto r = resolvent_apply(*op, 0.0, spec.field(k));
    CHECK((r.values - spec.field(k).values / spec.values[k]).cwiseAbs().maxCoeff() < 1e-8);
  }
  auto one = sample_field(g, [](const Vec3&) { return cplx(1); });
  ScalarField F = ScalarField::zeros(g);
  for (int n : g->interior_nodes()) F.values[n] = 1.0;
  auto r = resolvent_apply(*op, -100.0, F);
  CHECK(norm(r, NormKind::l2()) <= norm(F, NormKind::l2()) / (spec.values[0] + 100.0) * (1 + 1e-6));
  CVec res = op->apply_interior(r.interior()) + 100.0 * r.interior() - F.interior();
  CHECK(res.cwiseAbs().maxCoeff() < 1e-9 * op->spectral_radius_bound() * r.values.cwiseAbs().maxCoeff());

  auto free_op = assemble(ScalarField::zeros(g), g);
  cplx lam = std::pow(cplx(3, 1), 2);
  std::mt19937_64 rng(4);
  auto G = random_interior(g, rng);
  auto rc = resolvent_apply(*free_op, lam, G);
  CVec ref = oracle::fd_operator(8, RVec::Zero(g->node_count()), lam).partialPivLu().solve(G.interior());
  CHECK((rc.interior() - ref).cwiseAbs().maxCoeff() < 1e-10 * ref.cwiseAbs().maxCoeff());

  for (int t = 0; t < 5; ++t) {
    auto A = random_interior(g, rng), B = random_interior(g, rng);
    cplx l2 = cplx(7.0, 2.0 + t);
    cplx lhs = volume_inner(resolvent_apply(*op, l2, A), B);
    cplx rhs = volume_inner(A, resolvent_apply(*op, std::conj(l2), B));
    CHECK(std::abs(lhs - rhs) < 1e-9 * std::abs(lhs));
  }
  (void)one;
}

TEST_CASE("coercivity after shift") {
  auto g = build_grid(6);
  auto V = sample_potential(PotentialSpec::bump({0.5, 0.5, 0.5}, 0.2, -400), g);
  auto op = assemble(V, g);
  auto spec = eigendecompose(*op, 1);
  REQUIRE(spec.values[0] < 0);
  RMat A = RMat(op->interior_matrix());
  double s = std::abs(spec.values[0]) + 1e-3;
  Eigen::LLT<RMat> ok(A + s * RMat::Identity(A.rows(), A.cols()));
  CHECK(ok.info() == Eigen::Success);
  Eigen::LLT<RMat> bad(A + (std::abs(spec.values[0]) - 1.0) * RMat::Identity(A.rows(), A.cols()));
  CHECK(bad.info() != Eigen::Success);
}

TEST_CASE("eigenvalues of truncated potentials converge") {
  auto g = build_grid(8);
  auto V = sample_potential(PotentialSpec::rough(21, 1.6, 1.0, 0.3), g);
  RVec target = eigendecompose(*assemble(V, g), 5).values;
  double prev = INFINITY;
  for (double j : {1.0, 4.0, 16.0, 64.0, 1e4}) {
    RVec lj = eigendecompose(*assemble(truncate(V, j), g), 5).values;
    double d = (lj - target).cwiseAbs().maxCoeff();
    CHECK(d <= prev + 1e-12);
    prev = d;
  }
  CHECK(prev < 1e-9);
}

TEST_CASE("factorization cache is bounded") {
  auto g = build_grid(5);
  auto op = assemble(ScalarField::zeros(g), g);
  BoundaryField f = BoundaryField::zeros(g);
  f.values.setOnes();
  for (int t = 0; t < 12; ++t) solve_dirichlet(*op, cplx(-1.0 - t, 0.5 * t), f);
  CHECK(op->cached_factorizations() == DiscreteOperator::kCacheSize);
}
