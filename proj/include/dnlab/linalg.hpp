#pragma once

/// Thin wrappers over the sparse direct and dense symmetric solvers.

#include <Eigen/SparseCore>
#include <memory>
#include <string>
#include <vector>

#include "dnlab/common.hpp"

namespace dnlab {

using SpMat = Eigen::SparseMatrix<double>;
using SpCMat = Eigen::SparseMatrix<cplx>;

/// Sparse LU of a real matrix; complex right-hand sides are split.
class RealSparseLu {
 public:
  explicit RealSparseLu(const SpMat& A);
  ~RealSparseLu();
  RealSparseLu(const RealSparseLu&) = delete;
  RealSparseLu& operator=(const RealSparseLu&) = delete;

  bool ok() const;
  RVec solve(const RVec& b) const;
  CVec solve(const CVec& b) const;
  RMat solve(const RMat& B) const;
  CMat solve(const CMat& B) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Supernodal sparse Cholesky of a symmetric matrix; ok() is false when the
/// matrix is not positive definite.
class SpdSparseCholesky {
 public:
  explicit SpdSparseCholesky(const SpMat& A);
  ~SpdSparseCholesky();
  SpdSparseCholesky(const SpdSparseCholesky&) = delete;
  SpdSparseCholesky& operator=(const SpdSparseCholesky&) = delete;

  bool ok() const;
  RVec solve(const RVec& b) const;
  CVec solve(const CVec& b) const;
  RMat solve(const RMat& B) const;
  CMat solve(const CMat& B) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class ComplexSparseLu {
 public:
  explicit ComplexSparseLu(const SpCMat& A);
  ~ComplexSparseLu();
  ComplexSparseLu(const ComplexSparseLu&) = delete;
  ComplexSparseLu& operator=(const ComplexSparseLu&) = delete;

  bool ok() const;
  CVec solve(const CVec& b) const;
  CMat solve(const CMat& B) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Submatrix of A restricted by slot maps (full index -> block index, or -1).
SpMat extract_block(const SpMat& A, const std::vector<int>& row_slot, int rows,
                    const std::vector<int>& col_slot, int cols);

/// All eigenpairs of a dense symmetric matrix, ascending.
void symmetric_eigen(const RMat& A, RVec& values, RMat* vectors);

/// Largest eigenvalue of a dense symmetric matrix.
double largest_symmetric_eigenvalue(const RMat& A);

/// Largest singular value of a dense complex matrix.
double largest_singular_value(const CMat& A);
double largest_singular_value(const RMat& A);

/// least-squares slope of y against x
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

/// slope of log y against log x
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

std::string sha256_hex(const std::string& bytes);

/// Pins OpenBLAS to one thread and a fixed kernel (Haswell unless the
/// environment already chooses one) by re-executing the process once.
/// Call first thing in main; returns normally when the environment is set.
void pin_blas_environment(char** argv);

}  // namespace dnlab
