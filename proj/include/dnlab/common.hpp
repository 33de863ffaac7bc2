#pragma once

#include <Eigen/Core>
#include <complex>
#include <optional>
#include <stdexcept>
#include <string>

namespace dnlab {

using cplx = std::complex<double>;
using RVec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using Vec3 = Eigen::Vector3d;

enum class ErrorKind {
  Config,
  Generation,
  Domain,
  ResolventSingularity,
  IllDefined,
  Mismatch,
  Conditioning,
  Resolution,
  Convergence,
  Parse,
  Validation,
  Io,
};

const char* error_kind_name(ErrorKind k);

class LabError : public std::runtime_error {
 public:
  LabError(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

  // set only for resolvent singularities
  std::optional<double> nearest_eigenvalue;

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& msg);

}  // namespace dnlab
