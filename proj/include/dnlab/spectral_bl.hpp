#pragma once

/// Boundary spectral data, the resolvent series for lambda-derivatives of the
/// DN map, large-mu decay of DN differences, and the functional S_V.

#include <memory>
#include <vector>

#include "dnlab/dn_map.hpp"

namespace dnlab {

struct BoundarySpectralData {
  std::shared_ptr<const SpectralData> spectrum;
  OperatorPtr op;
  RMat psi;         // boundary x count, psi_k = gamma1 phi_k at lambda_k
  RVec psi_norms;   // L2(Gamma)

  int count() const { return static_cast<int>(psi.cols()); }
  bool full_basis() const;
  BoundaryField field(int k) const;  // zero-based
};

/// refuses (Validation) when an eigenpair residual is too large for gamma1
BoundarySpectralData boundary_spectral_data(std::shared_ptr<const SpectralData> spectrum,
                                            OperatorPtr op);

struct GrowthFit {
  double exponent = 0;  // slope of log |psi_k| against log(|lambda_k| + 1)
  double constant = 0;  // max |psi_k| / (|lambda_k| + 1)
};
GrowthFit psi_growth(const BoundarySpectralData& bsd);

struct SeriesOptions {
  int terms = -1;         // use eigenpairs first..terms (1-based); -1: all available
  int first = 1;          // partial data: drop pairs below this index
  bool local_term = true; // add the lambda-polynomial boundary part (orders 0 and 1)
};

/// d^m/dlambda^m Lambda_V(lambda) f from the eigen-expansion:
///   order 0: L f - sum_k (f, psi_k) psi_k / (lambda_k - lambda)
///   order m: -m! sum_k (f, psi_k) psi_k / (lambda_k - lambda)^{m+1}, plus -f m_Gamma/M_Gamma at m = 1
/// where L f is the boundary-diagonal part of the full form.
BoundaryField dn_derivative_series(const BoundarySpectralData& bsd, cplx lambda, int m,
                                   const BoundaryField& f, const SeriesOptions& opts = {});

/// the same derivative from m + 1 resolvent solves, without eigenpairs
BoundaryField dn_derivative_direct(const DiscreteOperator& op, cplx lambda, int m,
                                   const BoundaryField& f);

/// L2(Gamma) operator norm of the terms dropped by a partial-data series (pairs below k0)
double partial_data_perturbation(const BoundarySpectralData& bsd, cplx lambda, int k0);

struct MuGap {
  double mu = 0;
  double gap = 0;
};

inline constexpr double kLargeMuEpsilon = 0.2;

/// |Lambda_A(-mu^2) - Lambda_B(-mu^2)| from H^{1/2} to H^{1/2 - eps} in quotient-Gram boundary modes
std::vector<MuGap> large_mu_gap(const OperatorPtr& A, const OperatorPtr& B,
                                const std::vector<double>& mus, double eps = kLargeMuEpsilon);

/// least-squares decay exponent -d log gap / d log mu
double mu_decay_exponent(const std::vector<MuGap>& gaps);

struct ExponentialProbe {
  cplx lambda;
  cplx sqrt_lambda;  // principal branch
  Vec3 omega;
  BoundaryField field;  // e^{i sqrt(lambda) x.omega} on the boundary nodes
};

ExponentialProbe exponential_probe(const GridPtr& grid, cplx lambda, const Vec3& omega);

/// pairing of Lambda_V(lambda) e_{omega} against e_{-theta}; throws Resolution
/// when |Re sqrt(lambda)| > N/4 and Domain for lambda on [0, inf)
cplx s_functional(const OperatorPtr& op, cplx lambda, const Vec3& theta, const Vec3& omega);
cplx s_functional(const DnMatrix& dn, const Vec3& theta, const Vec3& omega);

/// -(lambda/2) |theta - omega|^2 * integral of e^{-i sqrt(lambda)(theta - omega).x} over the cube
cplx s_functional_free(cplx lambda, const Vec3& theta, const Vec3& omega);

struct SLimitPoint {
  double k = 0;
  Vec3 theta;
  Vec3 omega;
  cplx lambda;
  cplx difference;  // S_A - S_B
  cplx target;      // fourier_mode(V_A - V_B, xi)
};

/// theta_k = c_k eta + xi/(2k), omega_k = c_k eta - xi/(2k), sqrt(lambda_k) = k + i
std::vector<SLimitPoint> s_limit_check(const OperatorPtr& A, const OperatorPtr& B, const Vec3& xi,
                                       const std::vector<double>& ks);

void write_spectral_csv(const BoundarySpectralData& bsd, const std::string& path);
void write_mu_gap_csv(const std::vector<MuGap>& gaps, const std::string& path);
void write_s_limit_csv(const std::vector<SLimitPoint>& pts, const std::string& path);

struct SeriesCheck {
  int m = 0;
  cplx lambda;
  double residual = 0;
};
void write_series_check_csv(const std::vector<SeriesCheck>& rows, const std::string& path);

}  // namespace dnlab
