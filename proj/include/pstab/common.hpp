#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pstab {

using Complex = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Labels = std::vector<std::string>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr const char* kVersion = "0.1.0";

/// Failure categories shared by the C++ core and the C API status codes.
enum class ErrorCode {
  InvalidArgument = 1,
  Parse,
  Schema,
  Convergence,
  Singular,
  Numeric,
  Io,
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline double deg(double rad) { return rad * 180.0 / kPi; }
inline double rad(double degrees) { return degrees * kPi / 180.0; }

/// Damping ratio of eigenvalue sigma + j*omega.
inline double damping_ratio(Complex lambda) {
  const double mag = std::abs(lambda);
  if (mag == 0.0) return 1.0;
  return -lambda.real() / mag;
}

/// Index of `label` in `labels`, or throws naming the missing label.
std::size_t index_of(const Labels& labels, const std::string& label, const char* what);

}  // namespace pstab
