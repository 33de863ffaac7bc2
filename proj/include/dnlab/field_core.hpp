#pragma once

/// Grid geometry, fields, norms, Fourier quadrature and the potential library.

#include <Eigen/SparseCore>
#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dnlab/common.hpp"

namespace dnlab {

struct BoundaryNode {
  int node;    // full-grid index
  int axis;    // owner face normal axis
  int sign;    // -1 on the low face, +1 on the high face
  double weight;
};

/// Uniform discretisation of the unit cube with N subdivisions per axis.
/// Nodes are indexed (i*(N+1)+j)*(N+1)+l, so z runs fastest.
class Grid3 {
 public:
  explicit Grid3(int N);

  int N() const { return N_; }
  double dx() const { return dx_; }
  int nodes_per_axis() const { return N_ + 1; }
  int node_count() const { return (N_ + 1) * (N_ + 1) * (N_ + 1); }
  int interior_count() const { return static_cast<int>(interior_.size()); }
  int boundary_count() const { return static_cast<int>(boundary_.size()); }

  int index(int i, int j, int l) const { return (i * (N_ + 1) + j) * (N_ + 1) + l; }
  std::array<int, 3> ijk(int node) const;
  Vec3 coord(int node) const;
  bool on_boundary(int node) const { return boundary_slot_[node] >= 0; }

  const std::vector<int>& interior_nodes() const { return interior_; }
  const std::vector<BoundaryNode>& boundary_nodes() const { return boundary_; }
  // -1 when the node is not of that kind
  int interior_slot(int node) const { return interior_slot_[node]; }
  int boundary_slot(int node) const { return boundary_slot_[node]; }

  /// trapezoid volume weights over all nodes
  const RVec& volume_weights() const { return vol_w_; }
  /// surface weights per boundary slot
  const RVec& face_weights() const { return face_w_; }
  /// edge-difference energy: u^T K u = sum of weighted squared differences
  const Eigen::SparseMatrix<double>& stiffness() const { return K_; }

 private:
  int N_;
  double dx_;
  std::vector<int> interior_;
  std::vector<BoundaryNode> boundary_;
  std::vector<int> interior_slot_;
  std::vector<int> boundary_slot_;
  RVec vol_w_;
  RVec face_w_;
  Eigen::SparseMatrix<double> K_;
};

using GridPtr = std::shared_ptr<const Grid3>;

GridPtr build_grid(int N);

/// Complex samples on every node. Without a boundary extension the boundary
/// entries are zero (zero extension).
struct ScalarField {
  GridPtr grid;
  CVec values;
  bool has_boundary = true;

  static ScalarField zeros(GridPtr g, bool with_boundary = true);
  CVec interior() const;
  RVec real_values() const { return values.real(); }
};

struct BoundaryField {
  GridPtr grid;
  CVec values;

  static BoundaryField zeros(GridPtr g);
};

struct GaussianBump {
  Vec3 center{0.5, 0.5, 0.5};
  double width = 0.2;
  double amplitude = 1.0;
};

enum class PotentialKind { Zero, Constant, GaussianBumps, RoughSample };
enum class PointwiseLaw { Uniform, Normal };

struct PotentialSpec {
  PotentialKind kind = PotentialKind::Zero;
  double constant = 0.0;
  std::vector<GaussianBump> bumps;
  // rough-sample: amplitude*|x-x0|^-alpha*(1 + noise*eta), eta drawn from law
  std::uint64_t seed = 0;
  PointwiseLaw law = PointwiseLaw::Uniform;
  double alpha = 1.0;
  double amplitude = 1.0;
  double noise = 0.0;
  Vec3 singular_point{0.5, 0.5, 0.5};
  double sigma = 0.0;

  static PotentialSpec zero();
  static PotentialSpec constant_value(double c);
  static PotentialSpec bump(Vec3 center, double width, double amplitude, double sigma = 2.0);
  static PotentialSpec rough(std::uint64_t seed, double alpha, double amplitude = 1.0,
                             double noise = 0.5, PointwiseLaw law = PointwiseLaw::Uniform);
  PotentialSpec scaled(double factor) const;
};

ScalarField sample_potential(const PotentialSpec& spec, GridPtr grid);

ScalarField truncate(const ScalarField& field, double k);

enum class NormTag { L2, Lp, H1, H1_0, HhalfQuotient, HminushalfDual };

struct NormKind {
  NormTag tag = NormTag::L2;
  double p = 2.0;

  static NormKind l2() { return {NormTag::L2, 2.0}; }
  static NormKind lp(double p) { return {NormTag::Lp, p}; }
  static NormKind h1() { return {NormTag::H1, 2.0}; }
  static NormKind h1_0() { return {NormTag::H1_0, 2.0}; }
  static NormKind hhalf() { return {NormTag::HhalfQuotient, 2.0}; }
  static NormKind hminushalf() { return {NormTag::HminushalfDual, 2.0}; }
};

/// lower and upper Sobolev exponents 2n/(n+2), 2n/(n-2) at n=3
inline constexpr double kLowerExponent = 6.0 / 5.0;
inline constexpr double kUpperExponent = 6.0;

double norm(const ScalarField& field, NormKind kind);
double norm(const BoundaryField& field, NormKind kind);

/// Minimal H1 extension of f: (-Delta_h + 1)F = 0 inside, F = f on the boundary.
ScalarField minimal_extension(const BoundaryField& f);

/// Canonical nodal extension: f on the boundary, zero inside.
ScalarField zero_extension(const BoundaryField& f);

/// Dense Gram matrix of the quotient H^{1/2} norm (boundary x boundary).
RMat hhalf_gram(const GridPtr& grid);

/// trapezoid quadrature of field * exp(-i k.x) over the cube
cplx fourier_mode(const ScalarField& field, const Vec3& k);

/// L2(Gamma) pairings: bilinear and sesquilinear (conjugate on the second slot)
cplx boundary_bilinear(const BoundaryField& a, const BoundaryField& b);
cplx boundary_inner(const BoundaryField& a, const BoundaryField& b);
cplx volume_inner(const ScalarField& a, const ScalarField& b);
cplx volume_bilinear(const ScalarField& a, const ScalarField& b);

/// sample a function of position on every node
template <class F>
ScalarField sample_field(GridPtr grid, F&& f) {
  ScalarField out = ScalarField::zeros(grid, true);
  for (int n = 0; n < grid->node_count(); ++n) out.values[n] = f(grid->coord(n));
  return out;
}

void check_same_grid(const GridPtr& a, const GridPtr& b, const char* what);

void export_field(const ScalarField& field, const std::string& path_stem);

}  // namespace dnlab
