#include "dnlab/spectral_bl.hpp"

#include <Eigen/QR>
#include <cmath>

#include "dnlab/io.hpp"
#include "dnlab/linalg.hpp"

namespace dnlab {

bool BoundarySpectralData::full_basis() const {
  return spectrum && spectrum->count() == spectrum->grid->interior_count();
}

BoundaryField BoundarySpectralData::field(int k) const {
  BoundaryField f = BoundaryField::zeros(op->grid());
  f.values = psi.col(k).cast<cplx>();
  return f;
}

BoundarySpectralData boundary_spectral_data(std::shared_ptr<const SpectralData> spectrum,
                                            OperatorPtr op) {
  if (!spectrum || !op) fail(ErrorKind::Domain, "spectral data and operator are required");
  check_same_grid(spectrum->grid, op->grid(), "boundary spectral data");
  BoundarySpectralData out;
  out.spectrum = spectrum;
  out.op = op;
  const int nb = op->grid()->boundary_count(), m = spectrum->count();
  out.psi.resize(nb, m);
  out.psi_norms.resize(m);
  for (int k = 0; k < m; ++k) {
    BoundaryField p;
    try {
      p = gamma1(*op, spectrum->field(k), spectrum->values[k]);
    } catch (const LabError& e) {
      if (e.kind() != ErrorKind::IllDefined) throw;
      fail(ErrorKind::Validation, "eigenpair " + std::to_string(k + 1) +
                                      " is not accurate enough for its normal derivative");
    }
    out.psi.col(k) = p.values.real();
    out.psi_norms[k] = norm(p, NormKind::l2());
  }
  return out;
}

GrowthFit psi_growth(const BoundarySpectralData& bsd) {
  std::vector<double> x, y;
  GrowthFit fit;
  for (int k = 0; k < bsd.count(); ++k) {
    double l = std::abs(bsd.spectrum->values[k]) + 1;
    x.push_back(l);
    y.push_back(bsd.psi_norms[k]);
    fit.constant = std::max(fit.constant, bsd.psi_norms[k] / l);
  }
  fit.exponent = x.size() >= 2 ? loglog_slope(x, y) : 0.0;
  return fit;
}

namespace {

void check_off_spectrum(const BoundarySpectralData& bsd, cplx lambda, int lo, int hi) {
  const RVec& ev = bsd.spectrum->values;
  double best = INFINITY;
  int at = -1;
  for (int k = lo; k < hi; ++k) {
    double d = std::abs(ev[k] - lambda);
    if (d < best) best = d, at = k;
  }
  if (at >= 0 && best <= 1e-10 * (1 + std::abs(lambda))) {
    LabError e(ErrorKind::ResolventSingularity, "lambda is an eigenvalue of the spectral data");
    e.nearest_eigenvalue = ev[at];
    throw e;
  }
}

// boundary-diagonal part of the full form, divided by the face weights
CVec local_part(const DiscreteOperator& op, cplx lambda, const CVec& f) {
  const Grid3& g = *op.grid();
  const auto& b = g.boundary_nodes();
  CVec F = CVec::Zero(g.node_count());
  for (size_t s = 0; s < b.size(); ++s) F[b[s].node] = f[s];
  CVec KF = g.stiffness() * F;
  CVec out(b.size());
  for (size_t s = 0; s < b.size(); ++s) {
    int n = b[s].node;
    out[s] = (KF[n] + g.volume_weights()[n] * (op.potential()[n] - lambda) * f[s]) /
             g.face_weights()[s];
  }
  return out;
}

}  // namespace

BoundaryField dn_derivative_series(const BoundarySpectralData& bsd, cplx lambda, int m,
                                   const BoundaryField& f, const SeriesOptions& opts) {
  check_same_grid(bsd.op->grid(), f.grid, "derivative series");
  if (m < 0) fail(ErrorKind::Domain, "derivative order must be nonnegative");
  const int avail = bsd.count();
  const int hi = opts.terms < 0 ? avail : std::min(opts.terms, avail);
  const int lo = std::max(opts.first, 1) - 1;
  check_off_spectrum(bsd, lambda, lo, hi);

  const Grid3& g = *bsd.op->grid();
  const auto& b = g.boundary_nodes();
  CVec Mf(b.size());
  for (size_t s = 0; s < b.size(); ++s) Mf[s] = g.face_weights()[s] * f.values[s];

  double fact = std::tgamma(m + 1.0);
  CVec coeff = CVec::Zero(avail);
  if (hi > lo) {
    CVec proj = bsd.psi.middleCols(lo, hi - lo).transpose().cast<cplx>() * Mf;
    for (int k = lo; k < hi; ++k)
      coeff[k] = -fact * proj[k - lo] / std::pow(bsd.spectrum->values[k] - lambda, m + 1);
  }
  BoundaryField out = BoundaryField::zeros(f.grid);
  out.values = bsd.psi.cast<cplx>() * coeff;
  if (opts.local_term) {
    if (m == 0) out.values += local_part(*bsd.op, lambda, f.values);
    if (m == 1)
      for (size_t s = 0; s < b.size(); ++s)
        out.values[s] -= g.volume_weights()[b[s].node] / g.face_weights()[s] * f.values[s];
  }
  return out;
}

BoundaryField dn_derivative_direct(const DiscreteOperator& op, cplx lambda, int m,
                                   const BoundaryField& f) {
  check_same_grid(op.grid(), f.grid, "derivative");
  if (m < 0) fail(ErrorKind::Domain, "derivative order must be nonnegative");
  const Grid3& g = *op.grid();
  const double h3 = g.dx() * g.dx() * g.dx();
  CVec x = op.solve_interior(lambda, CVec(op.coupling().cast<cplx>() * f.values));
  for (int s = 0; s < m; ++s) x = op.solve_interior(lambda, x);
  BoundaryField out = BoundaryField::zeros(f.grid);
  out.values = -std::tgamma(m + 1.0) / h3 * (op.coupling().transpose().cast<cplx>() * x);
  const auto& b = g.boundary_nodes();
  for (size_t s = 0; s < b.size(); ++s) out.values[s] /= g.face_weights()[s];
  if (m == 0) out.values += local_part(op, lambda, f.values);
  if (m == 1)
    for (size_t s = 0; s < b.size(); ++s)
      out.values[s] -= g.volume_weights()[b[s].node] / g.face_weights()[s] * f.values[s];
  return out;
}

double partial_data_perturbation(const BoundarySpectralData& bsd, cplx lambda, int k0) {
  const int r = std::min(k0 - 1, bsd.count());
  if (r <= 0) return 0.0;
  check_off_spectrum(bsd, lambda, 0, r);
  const Grid3& g = *bsd.op->grid();
  const auto& b = g.boundary_nodes();
  RMat S = bsd.psi.leftCols(r);
  for (size_t s = 0; s < b.size(); ++s) S.row(s) *= std::sqrt(g.face_weights()[s]);
  Eigen::HouseholderQR<RMat> qr(S);
  RMat R = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  CVec d(r);
  for (int k = 0; k < r; ++k) d[k] = 1.0 / (bsd.spectrum->values[k] - lambda);
  CMat T = R.cast<cplx>() * d.asDiagonal() * R.transpose().cast<cplx>();
  return largest_singular_value(T);
}

std::vector<MuGap> large_mu_gap(const OperatorPtr& A, const OperatorPtr& B,
                                const std::vector<double>& mus, double eps) {
  check_same_grid(A->grid(), B->grid(), "large-mu gap");
  std::vector<MuGap> out;
  double prev = 0;
  for (double mu : mus) {
    if (!(mu >= 2)) fail(ErrorKind::Domain, "large-mu sweep needs mu >= 2");
    if (mu <= prev) fail(ErrorKind::Domain, "mu list must be ascending");
    prev = mu;
    cplx lambda = -mu * mu;
    double gap = 0;
    if (A->fingerprint() != B->fingerprint()) {
      auto a = assemble_dn(A, lambda, DnMode::Dense);
      auto b = assemble_dn(B, lambda, DnMode::Dense);
      gap = modal_gap_norm(a, b, 0.5, 0.5 - eps);
    }
    out.push_back({mu, gap});
  }
  return out;
}

double mu_decay_exponent(const std::vector<MuGap>& gaps) {
  std::vector<double> x, y;
  for (const auto& g : gaps) {
    x.push_back(g.mu);
    y.push_back(g.gap);
  }
  return -loglog_slope(x, y);
}

ExponentialProbe exponential_probe(const GridPtr& grid, cplx lambda, const Vec3& omega) {
  ExponentialProbe p;
  p.lambda = lambda;
  p.sqrt_lambda = std::sqrt(lambda);
  p.omega = omega;
  p.field = BoundaryField::zeros(grid);
  const auto& b = grid->boundary_nodes();
  const cplx I(0, 1);
  for (size_t s = 0; s < b.size(); ++s)
    p.field.values[s] = std::exp(I * p.sqrt_lambda * omega.dot(grid->coord(b[s].node)));
  return p;
}

namespace {

void check_s_inputs(const GridPtr& grid, cplx lambda, const Vec3& theta, const Vec3& omega) {
  if (lambda.imag() == 0 && lambda.real() >= 0)
    fail(ErrorKind::Domain, "S functional needs lambda off [0, inf)");
  if (std::abs(theta.norm() - 1) > 1e-9 || std::abs(omega.norm() - 1) > 1e-9)
    fail(ErrorKind::Domain, "theta and omega must be unit vectors");
  if (std::abs(std::sqrt(lambda).real()) > grid->N() / 4.0)
    fail(ErrorKind::Resolution, "exponential probe is not resolved: |Re sqrt(lambda)| > N/4");
}

}  // namespace

cplx s_functional(const DnMatrix& dn, const Vec3& theta, const Vec3& omega) {
  check_s_inputs(dn.grid(), dn.lambda(), theta, omega);
  auto e_omega = exponential_probe(dn.grid(), dn.lambda(), omega);
  auto e_theta = exponential_probe(dn.grid(), dn.lambda(), -theta);
  return boundary_bilinear(dn.apply(e_omega.field), e_theta.field);
}

cplx s_functional(const OperatorPtr& op, cplx lambda, const Vec3& theta, const Vec3& omega) {
  check_s_inputs(op->grid(), lambda, theta, omega);
  return s_functional(assemble_dn(op, lambda), theta, omega);
}

cplx s_functional_free(cplx lambda, const Vec3& theta, const Vec3& omega) {
  const cplx I(0, 1);
  cplx root = std::sqrt(lambda);
  Vec3 d = theta - omega;
  cplx integral = 1;
  for (int i = 0; i < 3; ++i) {
    cplx q = root * d[i];
    integral *= std::abs(q) < 1e-12 ? cplx(1) : (1.0 - std::exp(-I * q)) / (I * q);
  }
  return -(lambda / 2.0) * d.squaredNorm() * integral;
}

std::vector<SLimitPoint> s_limit_check(const OperatorPtr& A, const OperatorPtr& B, const Vec3& xi,
                                       const std::vector<double>& ks) {
  check_same_grid(A->grid(), B->grid(), "S limit");
  const double xn = xi.norm();
  if (xn == 0) fail(ErrorKind::Domain, "xi must be nonzero");
  Vec3 xhat = xi / xn;
  int best = 0;
  for (int d = 1; d < 3; ++d)
    if (std::abs(xhat[d]) < std::abs(xhat[best])) best = d;
  Vec3 eta = (Vec3::Unit(best) - xhat * xhat[best]).normalized();

  ScalarField W = A->potential_field();
  W.values -= B->potential_field().values;
  const cplx target = fourier_mode(W, xi);

  std::vector<SLimitPoint> out;
  double prev = -INFINITY;
  for (double k : ks) {
    if (k <= prev) fail(ErrorKind::Domain, "k list must be ascending");
    prev = k;
    double c2 = 1 - xn * xn / (4 * k * k);
    if (!(c2 > 0)) fail(ErrorKind::Domain, "k too small for a real c_k");
    double c = std::sqrt(c2);
    SLimitPoint p;
    p.k = k;
    p.theta = c * eta + xi / (2 * k);
    p.omega = c * eta - xi / (2 * k);
    p.lambda = std::pow(cplx(k, 1), 2);
    p.target = target;
    p.difference = A->fingerprint() == B->fingerprint()
                       ? cplx(0)
                       : s_functional(A, p.lambda, p.theta, p.omega) -
                             s_functional(B, p.lambda, p.theta, p.omega);
    out.push_back(p);
  }
  return out;
}

void write_spectral_csv(const BoundarySpectralData& bsd, const std::string& path) {
  CsvTable t({"k", "lambda", "psi_norm"});
  for (int k = 0; k < bsd.count(); ++k)
    t.add_row(std::vector<double>{double(k + 1), bsd.spectrum->values[k], bsd.psi_norms[k]});
  t.write(path);
}

void write_mu_gap_csv(const std::vector<MuGap>& gaps, const std::string& path) {
  CsvTable t({"mu", "gap"});
  for (const auto& g : gaps) t.add_row(std::vector<double>{g.mu, g.gap});
  t.write(path);
}

void write_s_limit_csv(const std::vector<SLimitPoint>& pts, const std::string& path) {
  CsvTable t({"k", "diff_re", "diff_im", "target_re", "target_im", "gap"});
  for (const auto& p : pts)
    t.add_row(std::vector<double>{p.k, p.difference.real(), p.difference.imag(), p.target.real(),
                                  p.target.imag(), std::abs(p.difference - p.target)});
  t.write(path);
}

void write_series_check_csv(const std::vector<SeriesCheck>& rows, const std::string& path) {
  CsvTable t({"m", "lambda_re", "lambda_im", "residual"});
  for (const auto& r : rows)
    t.add_row(std::vector<double>{double(r.m), r.lambda.real(), r.lambda.imag(), r.residual});
  t.write(path);
}

}  // namespace dnlab
