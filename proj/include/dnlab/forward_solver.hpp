#pragma once

/// Discrete Schrodinger operator -Delta_h + V with Dirichlet boundary,
/// boundary value problems, resolvents and eigenpairs.

#include <list>
#include <memory>
#include <mutex>
#include <string>

#include "dnlab/field_core.hpp"
#include "dnlab/linalg.hpp"

namespace dnlab {

class Factorization;

class DiscreteOperator {
 public:
  DiscreteOperator(GridPtr grid, const ScalarField& V);
  ~DiscreteOperator();

  const GridPtr& grid() const { return grid_; }
  /// potential on every node (real)
  const RVec& potential() const { return V_; }
  ScalarField potential_field() const;
  const std::string& fingerprint() const { return fingerprint_; }

  /// interior matrix -Delta_h + V in finite-difference scaling
  const SpMat& interior_matrix() const { return L_; }
  /// interior-to-boundary coupling of the edge energy
  const SpMat& coupling() const { return KIB_; }
  double spectral_radius_bound() const { return radius_; }

  CVec apply_interior(const CVec& u) const { return L_ * u; }

  /// (-Delta_h + V - lambda)^{-1} rhs on interior vectors
  CVec solve_interior(cplx lambda, const CVec& rhs) const;
  CMat solve_interior(cplx lambda, const CMat& rhs) const;

  /// cached factorizations, most recent first
  size_t cached_factorizations() const;
  static constexpr size_t kCacheSize = 8;

 private:
  std::shared_ptr<Factorization> factor(cplx lambda) const;

  GridPtr grid_;
  RVec V_;
  std::string fingerprint_;
  SpMat L_;
  SpMat KIB_;
  double radius_ = 0;

  mutable std::mutex mutex_;
  mutable std::list<std::pair<cplx, std::shared_ptr<Factorization>>> cache_;
};

using OperatorPtr = std::shared_ptr<const DiscreteOperator>;

OperatorPtr assemble(const ScalarField& V, GridPtr grid);

/// Solution of (-Delta_h + V - lambda)u = 0 inside, u = f on the boundary.
ScalarField solve_dirichlet(const DiscreteOperator& op, cplx lambda, const BoundaryField& f);

/// (A_V - lambda)^{-1} F with zero Dirichlet trace; F is read at interior nodes.
ScalarField resolvent_apply(const DiscreteOperator& op, cplx lambda, const ScalarField& F);

/// interior residual of (-Delta_h + V - lambda)u, max-norm
double interior_residual(const DiscreteOperator& op, cplx lambda, const ScalarField& u);

struct SpectralData {
  GridPtr grid;
  RVec values;   // ascending
  RMat fields;   // interior values, one L2-normalised eigenfield per column
  double max_residual = 0;

  int count() const { return static_cast<int>(values.size()); }
  ScalarField field(int k) const;  // zero-based, zero boundary values
};

SpectralData eigendecompose(const DiscreteOperator& op, int m);

/// least-squares slope of log lambda_k against log k over k in [kmin, kmax] (1-based)
double weyl_fit(const SpectralData& spec, int kmin, int kmax);

/// closed-form eigenvalues of -Delta_h on the cube, ascending
RVec free_spectrum(int N);

void export_spectral_csv(const SpectralData& spec, const std::string& path);

}  // namespace dnlab
