#pragma once

/// Traces, the discrete Dirichlet-to-Neumann map and its gap norms.

#include <memory>
#include <optional>
#include <string>

#include "dnlab/forward_solver.hpp"

namespace dnlab {

/// restriction to boundary nodes
BoundaryField gamma0(const ScalarField& u);

/// Weak normal derivative: the boundary field psi with
/// <psi, f>_{L2(Gamma)} = sum (grad_h u . grad_h F + (V - lambda) u F) for every
/// extension F of f. Throws IllDefined when u is not a discrete solution.
BoundaryField gamma1(const ScalarField& u, const ScalarField& V, cplx lambda = 0.0);
BoundaryField gamma1(const DiscreteOperator& op, const ScalarField& u, cplx lambda = 0.0);

/// the bilinear form itself, evaluated against an explicit extension F
cplx weak_form(const ScalarField& u, const ScalarField& V, cplx lambda, const ScalarField& F);

enum class DnMode { Auto, Dense, Lazy };

/// Lambda_V(lambda) in the boundary nodal basis. Dense matrices are kept for
/// N <= 16; larger grids apply the map by one Dirichlet solve per call.
class DnMatrix {
 public:
  DnMatrix(OperatorPtr op, cplx lambda, std::optional<CMat> matrix);

  const OperatorPtr& op() const { return op_; }
  const GridPtr& grid() const { return op_->grid(); }
  cplx lambda() const { return lambda_; }
  bool is_dense() const { return matrix_.has_value(); }
  const CMat& matrix() const;
  const std::string& fingerprint() const { return op_->fingerprint(); }

  CVec apply(const CVec& f) const;
  BoundaryField apply(const BoundaryField& f) const;

  /// Gram matrix of the quotient H^{1/2} norm
  std::shared_ptr<const RMat> gram() const;

 private:
  OperatorPtr op_;
  cplx lambda_;
  std::optional<CMat> matrix_;
};

DnMatrix assemble_dn(OperatorPtr op, cplx lambda, DnMode mode = DnMode::Auto);

/// shared dense H^{1/2} Gram matrix per grid size
std::shared_ptr<const RMat> shared_gram(const GridPtr& grid);

struct GapOptions {
  double tolerance = 1e-6;
  int max_iterations = 20000;
};

/// H^{1/2} -> H^{-1/2} norm of A - B by power iteration
double dn_gap_norm(const DnMatrix& A, const DnMatrix& B, GapOptions opts = {});

/// H^s -> H^t norm of A - B in the boundary modes of the quotient Gram matrix;
/// (0.5, -0.5) reproduces dn_gap_norm by a dense eigensolve
double modal_gap_norm(const DnMatrix& A, const DnMatrix& B, double source_order,
                      double target_order);

struct SmoothingReport {
  double exponent_gap;     // +infinity when A - B vanishes
  double slope_a;
  double slope_b;
  double slope_difference;
};

/// decay of |(A-B) f_m| over sine modes f_m on the x1 = 0 face against |A f_m|, |B f_m|
SmoothingReport smoothing_report(const DnMatrix& A, const DnMatrix& B);
double smoothing_index(const DnMatrix& A, const DnMatrix& B);

void check_compatible(const DnMatrix& A, const DnMatrix& B);

void export_dn(const DnMatrix& dn, const std::string& path_stem);

}  // namespace dnlab
