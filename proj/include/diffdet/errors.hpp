#pragma once

#include <stdexcept>
#include <string>

namespace diffdet {

/// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the documented domain (bad step-size, malformed matrix, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An iterative method exhausted its iteration budget.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Adaptive quadrature could not reach its tolerance on some subinterval.
class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double lo, double hi)
      : Error(what), lo_(lo), hi_(hi) {}
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }

 private:
  double lo_;
  double hi_;
};

/// The stationary equation has no root inside the search range, i.e. the
/// threshold lies outside the interior of the rate-function domain.
class NoBracket : public Error {
 public:
  using Error::Error;
};

/// Exact asymptotics are only available for non-lattice local statistics.
class LatticeModel : public Error {
 public:
  using Error::Error;
};

}  // namespace diffdet
