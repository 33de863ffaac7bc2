#include "dnlab/linalg.hpp"

#include <lapacke.h>
#include <openssl/evp.h>

#include <Eigen/CholmodSupport>
#include <Eigen/UmfPackSupport>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <unistd.h>

namespace dnlab {

const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Generation: return "generation";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::ResolventSingularity: return "resolvent-singularity";
    case ErrorKind::IllDefined: return "ill-defined";
    case ErrorKind::Mismatch: return "mismatch";
    case ErrorKind::Conditioning: return "conditioning";
    case ErrorKind::Resolution: return "resolution";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& msg) { throw LabError(kind, msg); }

// ---------------------------------------------------------------- sparse LU

// umfpack_solve reads the matrix again for refinement, so the LU owns a copy
struct RealSparseLu::Impl {
  SpMat A;
  Eigen::UmfPackLU<SpMat> lu;
};

RealSparseLu::RealSparseLu(const SpMat& A) : impl_(std::make_unique<Impl>()) {
  impl_->A = A;
  impl_->A.makeCompressed();
  impl_->lu.compute(impl_->A);
}
RealSparseLu::~RealSparseLu() = default;

bool RealSparseLu::ok() const { return impl_->lu.info() == Eigen::Success; }

RVec RealSparseLu::solve(const RVec& b) const { return impl_->lu.solve(b); }

CVec RealSparseLu::solve(const CVec& b) const {
  RVec re = impl_->lu.solve(RVec(b.real()));
  RVec im = impl_->lu.solve(RVec(b.imag()));
  CVec out(b.size());
  out.real() = re;
  out.imag() = im;
  return out;
}

RMat RealSparseLu::solve(const RMat& B) const { return impl_->lu.solve(B); }

CMat RealSparseLu::solve(const CMat& B) const {
  RMat re = impl_->lu.solve(RMat(B.real()));
  RMat im = impl_->lu.solve(RMat(B.imag()));
  CMat out(B.rows(), B.cols());
  out.real() = re;
  out.imag() = im;
  return out;
}

struct SpdSparseCholesky::Impl {
  Eigen::CholmodSupernodalLLT<SpMat, Eigen::Lower> llt;
};

SpdSparseCholesky::SpdSparseCholesky(const SpMat& A) : impl_(std::make_unique<Impl>()) {
  impl_->llt.compute(A);
}
SpdSparseCholesky::~SpdSparseCholesky() = default;

bool SpdSparseCholesky::ok() const { return impl_->llt.info() == Eigen::Success; }

RVec SpdSparseCholesky::solve(const RVec& b) const { return impl_->llt.solve(b); }

CVec SpdSparseCholesky::solve(const CVec& b) const {
  RMat B(b.size(), 2);
  B.col(0) = b.real();
  B.col(1) = b.imag();
  RMat X = impl_->llt.solve(B);
  CVec out(b.size());
  out.real() = X.col(0);
  out.imag() = X.col(1);
  return out;
}

RMat SpdSparseCholesky::solve(const RMat& B) const { return impl_->llt.solve(B); }

CMat SpdSparseCholesky::solve(const CMat& B) const {
  RMat S(B.rows(), 2 * B.cols());
  S.leftCols(B.cols()) = B.real();
  S.rightCols(B.cols()) = B.imag();
  RMat X = impl_->llt.solve(S);
  CMat out(B.rows(), B.cols());
  out.real() = X.leftCols(B.cols());
  out.imag() = X.rightCols(B.cols());
  return out;
}

struct ComplexSparseLu::Impl {
  SpCMat A;
  Eigen::UmfPackLU<SpCMat> lu;
};

ComplexSparseLu::ComplexSparseLu(const SpCMat& A) : impl_(std::make_unique<Impl>()) {
  impl_->A = A;
  impl_->A.makeCompressed();
  impl_->lu.compute(impl_->A);
}
ComplexSparseLu::~ComplexSparseLu() = default;

bool ComplexSparseLu::ok() const { return impl_->lu.info() == Eigen::Success; }

CVec ComplexSparseLu::solve(const CVec& b) const { return impl_->lu.solve(b); }

CMat ComplexSparseLu::solve(const CMat& B) const { return impl_->lu.solve(B); }

SpMat extract_block(const SpMat& A, const std::vector<int>& row_slot, int rows,
                    const std::vector<int>& col_slot, int cols) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(A.nonZeros()));
  for (int c = 0; c < A.outerSize(); ++c) {
    int cc = col_slot[c];
    if (cc < 0) continue;
    for (SpMat::InnerIterator it(A, c); it; ++it) {
      int rr = row_slot[it.row()];
      if (rr >= 0) t.emplace_back(rr, cc, it.value());
    }
  }
  SpMat out(rows, cols);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

// ------------------------------------------------------------ dense eigen

void symmetric_eigen(const RMat& A, RVec& values, RMat* vectors) {
  const lapack_int n = static_cast<lapack_int>(A.rows());
  RMat work = A;
  values.resize(n);
  lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'L', n, work.data(),
                                   n, values.data());
  if (info != 0) fail(ErrorKind::Convergence, "dense symmetric eigensolver failed, info=" +
                                                  std::to_string(info));
  if (vectors) *vectors = std::move(work);
}

double largest_symmetric_eigenvalue(const RMat& A) {
  const lapack_int n = static_cast<lapack_int>(A.rows());
  if (n == 0) return 0.0;
  RMat work = A;
  lapack_int m = 0;
  RVec w(n);
  RMat z(n, 1);
  std::vector<lapack_int> isuppz(2);
  lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'N', 'I', 'L', n, work.data(), n, 0.0, 0.0,
                                   n, n, 0.0, &m, w.data(), z.data(), n, isuppz.data());
  if (info != 0 || m < 1) fail(ErrorKind::Convergence, "top eigenvalue solver failed");
  return w[0];
}

double largest_singular_value(const CMat& A) {
  if (A.size() == 0) return 0.0;
  // top eigenvalue of the Hermitian Gram matrix, embedded as a real symmetric one
  CMat G = A.adjoint() * A;
  const Eigen::Index n = G.rows();
  RMat R(2 * n, 2 * n);
  R.topLeftCorner(n, n) = G.real();
  R.bottomRightCorner(n, n) = G.real();
  R.topRightCorner(n, n) = -G.imag();
  R.bottomLeftCorner(n, n) = G.imag();
  double top = largest_symmetric_eigenvalue(R);
  return std::sqrt(std::max(top, 0.0));
}

double largest_singular_value(const RMat& A) {
  if (A.size() == 0) return 0.0;
  RMat G = A.transpose() * A;
  return std::sqrt(std::max(largest_symmetric_eigenvalue(G), 0.0));
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return fit_slope(lx, ly);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

}  // namespace dnlab

namespace dnlab {

void pin_blas_environment(char** argv) {
  if (std::getenv("DNLAB_BLAS_PINNED")) return;
  setenv("DNLAB_BLAS_PINNED", "1", 1);
  setenv("OPENBLAS_CORETYPE", "Haswell", 0);
  setenv("OPENBLAS_NUM_THREADS", "1", 0);
  execv("/proc/self/exe", argv);
  // exec failed: continue with whatever kernel was loaded
}

}  // namespace dnlab
