#include "dnlab/forward_solver.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <variant>

#include "dnlab/io.hpp"

namespace dnlab {

// ====================================================================
// Factorization cache
// ====================================================================

class Factorization {
 public:
  Factorization(const SpMat& L, cplx lambda) {
    const Eigen::Index n = L.rows();
    if (lambda.imag() == 0.0) {
      SpMat A = L;
      for (Eigen::Index i = 0; i < n; ++i) A.coeffRef(i, i) -= lambda.real();
      spd_ = std::make_unique<SpdSparseCholesky>(A);
      if (spd_->ok()) {
        ok_ = true;
        return;
      }
      spd_.reset();
      real_ = std::make_unique<RealSparseLu>(A);
      ok_ = real_->ok();
    } else {
      SpCMat A = L.cast<cplx>();
      for (Eigen::Index i = 0; i < n; ++i) A.coeffRef(i, i) -= lambda;
      complex_ = std::make_unique<ComplexSparseLu>(A);
      ok_ = complex_->ok();
    }
  }
  bool ok() const { return ok_; }
  template <class M>
  M solve(const M& b) const {
    if (spd_) return spd_->solve(b);
    return real_ ? real_->solve(b) : complex_->solve(b);
  }

 private:
  std::unique_ptr<SpdSparseCholesky> spd_;
  std::unique_ptr<RealSparseLu> real_;
  std::unique_ptr<ComplexSparseLu> complex_;
  bool ok_ = false;
};

namespace {

std::vector<int> slot_map(const Grid3& g, bool interior) {
  std::vector<int> s(g.node_count());
  for (int n = 0; n < g.node_count(); ++n) s[n] = interior ? g.interior_slot(n) : g.boundary_slot(n);
  return s;
}

[[noreturn]] void singular(cplx lambda, double nearest) {
  LabError e(ErrorKind::ResolventSingularity,
             "spectral parameter (" + format_number(lambda.real()) + ", " +
                 format_number(lambda.imag()) + ") is within the guard of eigenvalue " +
                 format_number(nearest));
  e.nearest_eigenvalue = nearest;
  throw e;
}

}  // namespace

DiscreteOperator::DiscreteOperator(GridPtr grid, const ScalarField& V) : grid_(std::move(grid)) {
  check_same_grid(grid_, V.grid, "assemble");
  const Grid3& g = *grid_;
  V_.resize(g.node_count());
  for (int n = 0; n < g.node_count(); ++n) {
    if (std::abs(V.values[n].imag()) > 0)
      fail(ErrorKind::Domain, "potential must be real-valued");
    V_[n] = V.values[n].real();
  }
  auto is = slot_map(g, true);
  auto bs = slot_map(g, false);
  const double h3 = g.dx() * g.dx() * g.dx();
  L_ = extract_block(g.stiffness(), is, g.interior_count(), is, g.interior_count()) / h3;
  for (int s = 0; s < g.interior_count(); ++s) L_.coeffRef(s, s) += V_[g.interior_nodes()[s]];
  L_.makeCompressed();
  KIB_ = extract_block(g.stiffness(), is, g.interior_count(), bs, g.boundary_count());
  radius_ = 12.0 / (g.dx() * g.dx()) + V_.cwiseAbs().maxCoeff();
  std::string bytes(reinterpret_cast<const char*>(V_.data()), sizeof(double) * V_.size());
  fingerprint_ = sha256_hex(std::to_string(g.N()) + ":" + bytes).substr(0, 16);
}

DiscreteOperator::~DiscreteOperator() = default;

ScalarField DiscreteOperator::potential_field() const {
  ScalarField f = ScalarField::zeros(grid_, true);
  f.values = V_.cast<cplx>();
  return f;
}

size_t DiscreteOperator::cached_factorizations() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return cache_.size();
}

std::shared_ptr<Factorization> DiscreteOperator::factor(cplx lambda) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    for (auto it = cache_.begin(); it != cache_.end(); ++it) {
      if (it->first == lambda) {
        cache_.splice(cache_.begin(), cache_, it);
        return cache_.front().second;
      }
    }
  }
  auto f = std::make_shared<Factorization>(L_, lambda);
  if (!f->ok()) singular(lambda, lambda.real());

  // inverse iteration: for the normal matrix A - lambda, |(A - lambda)^{-1}| is
  // one over the distance to the spectrum
  const Eigen::Index n = L_.rows();
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  CVec x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = uni(rng);
  x.normalize();
  double growth = 0;
  for (int it = 0; it < 3; ++it) {
    CVec y = f->solve(x);
    growth = y.norm();
    if (!std::isfinite(growth)) singular(lambda, lambda.real());
    x = y / growth;
  }
  if (1.0 / growth < 1e-8 * radius_) {
    double nearest = x.dot(L_ * x).real();
    singular(lambda, nearest);
  }

  std::lock_guard<std::mutex> lock(mutex_);
  cache_.emplace_front(lambda, f);
  if (cache_.size() > kCacheSize) cache_.pop_back();
  return f;
}

CVec DiscreteOperator::solve_interior(cplx lambda, const CVec& rhs) const {
  return factor(lambda)->solve(rhs);
}

CMat DiscreteOperator::solve_interior(cplx lambda, const CMat& rhs) const {
  return factor(lambda)->solve(rhs);
}

OperatorPtr assemble(const ScalarField& V, GridPtr grid) {
  return std::make_shared<const DiscreteOperator>(std::move(grid), V);
}

// ====================================================================
// Boundary value problems
// ====================================================================

ScalarField solve_dirichlet(const DiscreteOperator& op, cplx lambda, const BoundaryField& f) {
  check_same_grid(op.grid(), f.grid, "solve_dirichlet");
  const Grid3& g = *op.grid();
  const double h3 = g.dx() * g.dx() * g.dx();
  CVec rhs = -(op.coupling() * f.values) / h3;
  CVec inner = op.solve_interior(lambda, rhs);
  ScalarField u = zero_extension(f);
  const auto& in = g.interior_nodes();
  for (size_t s = 0; s < in.size(); ++s) u.values[in[s]] = inner[s];
  return u;
}

ScalarField resolvent_apply(const DiscreteOperator& op, cplx lambda, const ScalarField& F) {
  check_same_grid(op.grid(), F.grid, "resolvent_apply");
  CVec inner = op.solve_interior(lambda, F.interior());
  ScalarField u = ScalarField::zeros(op.grid(), true);
  const auto& in = op.grid()->interior_nodes();
  for (size_t s = 0; s < in.size(); ++s) u.values[in[s]] = inner[s];
  return u;
}

double interior_residual(const DiscreteOperator& op, cplx lambda, const ScalarField& u) {
  const Grid3& g = *op.grid();
  const double h3 = g.dx() * g.dx() * g.dx();
  CVec bvals(g.boundary_count());
  for (int s = 0; s < g.boundary_count(); ++s) bvals[s] = u.values[g.boundary_nodes()[s].node];
  CVec ui = u.interior();
  CVec r = op.interior_matrix() * ui - lambda * ui + op.coupling() * bvals / h3;
  return r.cwiseAbs().maxCoeff();
}

// ====================================================================
// Eigenpairs
// ====================================================================

ScalarField SpectralData::field(int k) const {
  ScalarField f = ScalarField::zeros(grid, true);
  const auto& in = grid->interior_nodes();
  for (size_t s = 0; s < in.size(); ++s) f.values[in[s]] = fields(static_cast<Eigen::Index>(s), k);
  return f;
}

namespace {

SpectralData dense_eigen(const DiscreteOperator& op, int m) {
  RMat A = RMat(op.interior_matrix());
  RVec w;
  RMat Z;
  symmetric_eigen(A, w, &Z);
  const double scale = std::pow(op.grid()->dx(), -1.5);
  SpectralData out;
  out.grid = op.grid();
  out.values = w.head(m);
  out.fields = Z.leftCols(m) * scale;
  return out;
}

// Block shift-invert Lanczos with full reorthogonalisation. Blocks resolve the
// repeated eigenvalues of symmetric configurations; Ritz pairs come from a
// Rayleigh-Ritz step with the operator itself. The Krylov space grows until the
// wanted pairs meet the residual bound.
SpectralData lanczos_eigen(const DiscreteOperator& op, int m) {
  const SpMat& L = op.interior_matrix();
  const Eigen::Index n = L.rows();
  const int block = 8;
  const double sigma = op.potential().minCoeff() - 1.0;
  SpdSparseCholesky lu([&] {
    SpMat A = L;
    for (Eigen::Index i = 0; i < n; ++i) A.coeffRef(i, i) -= sigma;
    return A;
  }());
  if (!lu.ok()) fail(ErrorKind::Convergence, "shift factorization failed");

  std::mt19937_64 rng(0x1a2c05);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  auto random_column = [&] {
    RVec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uni(rng);
    return v;
  };

  // whole blocks only, so the block width never shrinks when the space grows
  auto whole_blocks = [&](Eigen::Index want) {
    return static_cast<int>(std::min<Eigen::Index>(n, (want + block - 1) / block * block));
  };
  int p = whole_blocks(4 * m + 64);
  RMat Q(n, p);
  int cols = 0;
  // two passes of block Gram-Schmidt against Q(:, 0..cols), each followed by a
  // thin QR; dependent columns are replaced by random ones
  auto append = [&](RMat W) {
    const Eigen::Index k = std::min<Eigen::Index>(W.cols(), Q.cols() - cols);
    W.conservativeResize(Eigen::NoChange, k);
    for (int tries = 0; tries < 4; ++tries) {
      RMat B = W;
      bool full_rank = true;
      for (int pass = 0; pass < 2 && full_rank; ++pass) {
        if (cols > 0) B -= Q.leftCols(cols) * (Q.leftCols(cols).transpose() * B);
        Eigen::HouseholderQR<RMat> qr(B);
        RVec d = qr.matrixQR().diagonal().cwiseAbs();
        const double scale = pass == 0 ? W.colwise().norm().maxCoeff() : 1.0;
        for (Eigen::Index c = 0; c < k; ++c)
          if (d[c] < 1e-10 * scale) {
            full_rank = false;
            W.col(c) = random_column();
          }
        if (full_rank) B = qr.householderQ() * RMat::Identity(n, k);
      }
      if (full_rank) {
        Q.middleCols(cols, k) = B;
        cols += static_cast<int>(k);
        return;
      }
    }
    fail(ErrorKind::Convergence, "Krylov basis lost rank");
  };
  {
    RMat start(n, std::min(block, p));
    for (Eigen::Index c = 0; c < start.cols(); ++c) start.col(c) = random_column();
    append(start);
  }
  int done = 0;
  double worst = 0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    while (cols < p) {
      const int width = std::min(block, cols - done);
      RMat W = lu.solve(RMat(Q.middleCols(done, width)));
      done += width;
      append(W);
    }
    RMat LQ = L * Q.leftCols(cols);
    RMat H = Q.leftCols(cols).transpose() * LQ;
    H = 0.5 * (H + H.transpose());
    RVec theta;
    RMat S;
    symmetric_eigen(H, theta, &S);
    SpectralData out;
    out.grid = op.grid();
    out.values = theta.head(m);
    RMat X = Q.leftCols(cols) * S.leftCols(m);
    worst = 0;
    bool good = true;
    for (int i = 0; i < m; ++i) {
      X.col(i).normalize();
      double r = (L * X.col(i) - out.values[i] * X.col(i)).norm();
      worst = std::max(worst, r);
      if (r > 1e-8 * std::abs(out.values[i]) + 1e-8) good = false;
    }
    if (good) {
      out.fields = X * std::pow(op.grid()->dx(), -1.5);
      out.max_residual = worst;
      return out;
    }
    if (p == n) break;
    p = whole_blocks(p + p / 2);
    Q.conservativeResize(Eigen::NoChange, p);
  }
  fail(ErrorKind::Convergence,
       "eigensolver did not converge, worst residual " + format_number(worst));
}

}  // namespace

SpectralData eigendecompose(const DiscreteOperator& op, int m) {
  const int n = op.grid()->interior_count();
  if (m < 1 || m > n)
    fail(ErrorKind::Config, "eigenpair count must lie in [1, " + std::to_string(n) + "]");
  SpectralData out = n <= 4096 ? dense_eigen(op, m) : lanczos_eigen(op, m);
  if (n <= 4096) {
    const double scale = std::pow(op.grid()->dx(), 1.5);
    double worst = 0;
    for (int k = 0; k < m; ++k) {
      RVec q = out.fields.col(k) * scale;
      worst = std::max(worst, (op.interior_matrix() * q - out.values[k] * q).norm());
    }
    out.max_residual = worst;
  }
  return out;
}

double weyl_fit(const SpectralData& spec, int kmin, int kmax) {
  if (kmin < 1 || kmax > spec.count() || kmax - kmin + 1 < 10)
    fail(ErrorKind::Config, "Weyl window needs at least 10 resolved eigenvalues");
  std::vector<double> k, lam;
  for (int i = kmin; i <= kmax; ++i) {
    if (!(spec.values[i - 1] > 0))
      fail(ErrorKind::Domain, "Weyl fit needs positive eigenvalues in the window");
    k.push_back(i);
    lam.push_back(spec.values[i - 1]);
  }
  return loglog_slope(k, lam);
}

RVec free_spectrum(int N) {
  const double dx = 1.0 / N;
  std::vector<double> one(N - 1);
  for (int j = 1; j < N; ++j) {
    double s = std::sin(std::numbers::pi * j * dx / 2);
    one[j - 1] = 4.0 / (dx * dx) * s * s;
  }
  std::vector<double> all;
  all.reserve(static_cast<size_t>(N - 1) * (N - 1) * (N - 1));
  for (double a : one)
    for (double b : one)
      for (double c : one) all.push_back(a + b + c);
  std::sort(all.begin(), all.end());
  return Eigen::Map<RVec>(all.data(), static_cast<Eigen::Index>(all.size()));
}

void export_spectral_csv(const SpectralData& spec, const std::string& path) {
  CsvTable t({"k", "lambda"});
  for (int k = 0; k < spec.count(); ++k) t.add_row(std::vector<double>{double(k + 1), spec.values[k]});
  t.write(path);
}

}  // namespace dnlab
