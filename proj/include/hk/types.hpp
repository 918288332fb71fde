#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace hk {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using RMat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

inline constexpr cplx I{0.0, 1.0};

// Error hierarchy. InputError maps to CLI exit code 2, everything else that is
// a mathematical failure maps to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class DegeneracyError : public Error {
 public:
  DegeneracyError(const std::string& what, double smallest_singular_value)
      : Error(what + " (smallest singular value " + std::to_string(smallest_singular_value) + ")"),
        smallest_(smallest_singular_value) {}
  double smallest_singular_value() const { return smallest_; }

 private:
  double smallest_;
};

class NotDirectSumError : public Error {
 public:
  using Error::Error;
};

class InconsistentFamilyError : public Error {
 public:
  using Error::Error;
};

class InconsistentStructureError : public Error {
 public:
  using Error::Error;
};

inline double max_abs(const CMat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }
inline double max_abs(const RMat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }
inline double max_abs(const CVec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace hk
