#include "dnlab/dn_map.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <numbers>

#include "dnlab/io.hpp"

namespace dnlab {

BoundaryField gamma0(const ScalarField& u) {
  if (!u.has_boundary) fail(ErrorKind::IllDefined, "gamma0 needs boundary values");
  BoundaryField f = BoundaryField::zeros(u.grid);
  const auto& b = u.grid->boundary_nodes();
  for (size_t s = 0; s < b.size(); ++s) f.values[s] = u.values[b[s].node];
  return f;
}

namespace {

// full-grid form applied to u: (K u) + m (V - lambda) u
CVec form_apply(const Grid3& g, const RVec& V, cplx lambda, const CVec& u) {
  CVec out = g.stiffness() * u;
  for (int n = 0; n < g.node_count(); ++n) out[n] += g.volume_weights()[n] * (V[n] - lambda) * u[n];
  return out;
}

RVec real_potential(const ScalarField& V) {
  RVec out = V.values.real();
  if (V.values.imag().cwiseAbs().maxCoeff() > 0)
    fail(ErrorKind::Domain, "potential must be real-valued");
  return out;
}

BoundaryField gamma1_impl(const Grid3& g, const GridPtr& gp, const RVec& V, cplx lambda,
                          const ScalarField& u) {
  if (!u.has_boundary) fail(ErrorKind::IllDefined, "gamma1 needs boundary values");
  CVec Au = form_apply(g, V, lambda, u.values);
  const double h3 = g.dx() * g.dx() * g.dx();
  // scale by the size of the individual stencil terms, |K| |u| + |V - lambda| |u|
  double residual = 0, scale = 0;
  RVec Ku = g.stiffness().cwiseAbs() * u.values.cwiseAbs();
  for (int n : g.interior_nodes()) {
    residual = std::max(residual, std::abs(Au[n]) / h3);
    scale = std::max(scale, Ku[n] / h3 + std::abs((V[n] - lambda) * u.values[n]));
  }
  if (residual > 1e-6 * scale)
    fail(ErrorKind::IllDefined, "field is not a discrete solution (relative residual " +
                                    format_number(residual / scale) + ")");
  BoundaryField psi = BoundaryField::zeros(gp);
  const auto& b = g.boundary_nodes();
  for (size_t s = 0; s < b.size(); ++s) psi.values[s] = Au[b[s].node] / b[s].weight;
  return psi;
}

}  // namespace

BoundaryField gamma1(const ScalarField& u, const ScalarField& V, cplx lambda) {
  check_same_grid(u.grid, V.grid, "gamma1");
  return gamma1_impl(*u.grid, u.grid, real_potential(V), lambda, u);
}

BoundaryField gamma1(const DiscreteOperator& op, const ScalarField& u, cplx lambda) {
  check_same_grid(u.grid, op.grid(), "gamma1");
  return gamma1_impl(*u.grid, u.grid, op.potential(), lambda, u);
}

cplx weak_form(const ScalarField& u, const ScalarField& V, cplx lambda, const ScalarField& F) {
  check_same_grid(u.grid, F.grid, "weak_form");
  CVec Au = form_apply(*u.grid, real_potential(V), lambda, u.values);
  return F.values.transpose() * Au;
}

// ====================================================================
// DN matrix
// ====================================================================

DnMatrix::DnMatrix(OperatorPtr op, cplx lambda, std::optional<CMat> matrix)
    : op_(std::move(op)), lambda_(lambda), matrix_(std::move(matrix)) {}

const CMat& DnMatrix::matrix() const {
  if (!matrix_) fail(ErrorKind::Config, "DN map was assembled without a dense matrix");
  return *matrix_;
}

CVec DnMatrix::apply(const CVec& f) const {
  if (matrix_) return *matrix_ * f;
  BoundaryField bf{grid(), f};
  return gamma1(*op_, solve_dirichlet(*op_, lambda_, bf), lambda_).values;
}

BoundaryField DnMatrix::apply(const BoundaryField& f) const {
  check_same_grid(f.grid, grid(), "DN apply");
  return BoundaryField{grid(), apply(f.values)};
}

std::shared_ptr<const RMat> DnMatrix::gram() const { return shared_gram(grid()); }

std::shared_ptr<const RMat> shared_gram(const GridPtr& grid) {
  static std::mutex m;
  static std::map<int, std::shared_ptr<const RMat>> cache;
  std::lock_guard<std::mutex> lock(m);
  auto it = cache.find(grid->N());
  if (it != cache.end()) return it->second;
  auto g = std::make_shared<const RMat>(hhalf_gram(grid));
  cache[grid->N()] = g;
  return g;
}

DnMatrix assemble_dn(OperatorPtr op, cplx lambda, DnMode mode) {
  const Grid3& g = *op->grid();
  const bool dense = mode == DnMode::Dense || (mode == DnMode::Auto && g.N() <= 16);
  if (!dense) {
    op->solve_interior(lambda, CVec(CVec::Zero(g.interior_count())));  // admissibility check
    return DnMatrix(op, lambda, std::nullopt);
  }
  const double h3 = g.dx() * g.dx() * g.dx();
  CMat X = op->solve_interior(lambda, CMat(op->coupling().cast<cplx>())) / h3;
  CMat B = -(op->coupling().transpose().cast<cplx>() * X);
  std::vector<int> bs(g.node_count());
  for (int n = 0; n < g.node_count(); ++n) bs[n] = g.boundary_slot(n);
  SpMat KBB = extract_block(g.stiffness(), bs, g.boundary_count(), bs, g.boundary_count());
  B += CMat(KBB.cast<cplx>());
  const auto& bn = g.boundary_nodes();
  for (size_t s = 0; s < bn.size(); ++s)
    B(s, s) += g.volume_weights()[bn[s].node] * (op->potential()[bn[s].node] - lambda);
  for (size_t s = 0; s < bn.size(); ++s) B.row(s) /= bn[s].weight;
  return DnMatrix(op, lambda, std::move(B));
}

void check_compatible(const DnMatrix& A, const DnMatrix& B) {
  check_same_grid(A.grid(), B.grid(), "DN comparison");
  if (A.lambda() != B.lambda()) fail(ErrorKind::Mismatch, "DN maps at different spectral parameters");
}

// ====================================================================
// Gap norms
// ====================================================================

double dn_gap_norm(const DnMatrix& A, const DnMatrix& B, GapOptions opts) {
  check_compatible(A, B);
  const Grid3& g = *A.grid();
  const RVec& w = g.face_weights();
  // T = M (A - B) maps boundary values to boundary loads
  CMat T = w.cast<cplx>().asDiagonal() * (A.matrix() - B.matrix());
  if (T.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  auto gram = shared_gram(A.grid());
  Eigen::LLT<RMat> llt(*gram);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Domain, "H^{1/2} Gram matrix is singular");
  auto Sinv = [&](const CVec& v) {
    CVec out(v.size());
    out.real() = llt.solve(RVec(v.real()));
    out.imag() = llt.solve(RVec(v.imag()));
    return out;
  };
  const Eigen::Index n = T.rows();
  CVec x(n);
  for (Eigen::Index i = 0; i < n; ++i)
    x[i] = 1.0 + 0.5 * std::sin(1.0 + 0.37 * static_cast<double>(i));
  double prev = 0, est = 0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    CVec Sx = *gram * x;
    double xn = std::sqrt(std::abs(x.dot(Sx)));
    x /= xn;
    CVec y = Sinv(T * x);
    est = std::sqrt(std::abs(y.dot(T * x)));  // (Tx)^H S^{-1} (Tx)
    if (it > 3 && std::abs(est - prev) <= opts.tolerance * 1e-2 * est) return est;
    prev = est;
    x = Sinv(T.adjoint() * y);
  }
  fail(ErrorKind::Convergence, "gap-norm power iteration did not converge");
}

namespace {

struct ModalBasis {
  RVec sigma;  // generalised eigenvalues of (S, M)
  RMat Y;      // orthonormal eigenvectors of M^{-1/2} S M^{-1/2}
};

std::shared_ptr<const ModalBasis> modal_basis(const GridPtr& grid) {
  static std::mutex m;
  static std::map<int, std::shared_ptr<const ModalBasis>> cache;
  {
    std::lock_guard<std::mutex> lock(m);
    auto it = cache.find(grid->N());
    if (it != cache.end()) return it->second;
  }
  auto S = shared_gram(grid);
  RVec isw = grid->face_weights().cwiseSqrt().cwiseInverse();
  RMat C = isw.asDiagonal() * (*S) * isw.asDiagonal();
  auto basis = std::make_shared<ModalBasis>();
  symmetric_eigen(C, basis->sigma, &basis->Y);
  std::lock_guard<std::mutex> lock(m);
  cache[grid->N()] = basis;
  return basis;
}

}  // namespace

double modal_gap_norm(const DnMatrix& A, const DnMatrix& B, double source_order,
                      double target_order) {
  check_compatible(A, B);
  auto basis = modal_basis(A.grid());
  const RVec sw = A.grid()->face_weights().cwiseSqrt();
  CMat D = A.matrix() - B.matrix();
  // modal coefficients: c = Y^T M^{1/2} f, f = M^{-1/2} Y c
  CMat Dm = basis->Y.transpose().cast<cplx>() * sw.cast<cplx>().asDiagonal() * D *
            sw.cwiseInverse().cast<cplx>().asDiagonal() * basis->Y.cast<cplx>();
  RVec left = basis->sigma.array().pow(target_order);
  RVec right = basis->sigma.array().pow(-source_order);
  CMat W = left.cast<cplx>().asDiagonal() * Dm * right.cast<cplx>().asDiagonal();
  if (W.imag().cwiseAbs().maxCoeff() == 0.0) return largest_singular_value(RMat(W.real()));
  return largest_singular_value(W);
}

// ====================================================================
// Smoothing
// ====================================================================

SmoothingReport smoothing_report(const DnMatrix& A, const DnMatrix& B) {
  check_compatible(A, B);
  const Grid3& g = *A.grid();
  const auto& bn = g.boundary_nodes();
  const int M = g.N() / 2;
  std::vector<double> ms, na, nb, nd;
  bool all_zero = true;
  for (int m = 1; m <= M; ++m) {
    BoundaryField f = BoundaryField::zeros(A.grid());
    for (size_t s = 0; s < bn.size(); ++s) {
      if (bn[s].axis != 0 || bn[s].sign != -1) continue;
      Vec3 x = g.coord(bn[s].node);
      f.values[s] = std::sin(m * std::numbers::pi * x[1]) * std::sin(m * std::numbers::pi * x[2]);
    }
    double fn = norm(f, NormKind::l2());
    CVec a = A.apply(f.values), b = B.apply(f.values);
    double da = norm(BoundaryField{A.grid(), a}, NormKind::l2()) / fn;
    double db = norm(BoundaryField{A.grid(), b}, NormKind::l2()) / fn;
    double dd = norm(BoundaryField{A.grid(), CVec(a - b)}, NormKind::l2()) / fn;
    if (dd > 1e-13 * std::max(da, db)) all_zero = false;
    if (m >= 2) {
      ms.push_back(m);
      na.push_back(da);
      nb.push_back(db);
      nd.push_back(std::max(dd, 1e-300));
    }
  }
  SmoothingReport r{};
  r.slope_a = loglog_slope(ms, na);
  r.slope_b = loglog_slope(ms, nb);
  if (all_zero) {
    r.slope_difference = -std::numeric_limits<double>::infinity();
    r.exponent_gap = std::numeric_limits<double>::infinity();
    return r;
  }
  r.slope_difference = loglog_slope(ms, nd);
  r.exponent_gap = std::min(r.slope_a, r.slope_b) - r.slope_difference;
  return r;
}

double smoothing_index(const DnMatrix& A, const DnMatrix& B) {
  return smoothing_report(A, B).exponent_gap;
}

void export_dn(const DnMatrix& dn, const std::string& path_stem) {
  const CMat& m = dn.matrix();
  write_complex_binary(path_stem + ".bin", m.data(), static_cast<size_t>(m.size()));
  auto gram = shared_gram(dn.grid());
  std::string gbytes(reinterpret_cast<const char*>(gram->data()), sizeof(double) * gram->size());
  nlohmann::json meta = {
      {"N", dn.grid()->N()},
      {"lambda", {dn.lambda().real(), dn.lambda().imag()}},
      {"rows", m.rows()},
      {"cols", m.cols()},
      {"layout", "column-major, little-endian float64 (re, im) pairs"},
      {"potential_fingerprint", dn.fingerprint()},
      {"gram_checksum", sha256_hex(gbytes)},
  };
  write_text(path_stem + ".json", meta.dump(2) + "\n");
}

}  // namespace dnlab
